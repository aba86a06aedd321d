"""Command-line interface.

Subcommands: cluster, knockoff, scores, filter, simulate. Exit codes:
0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io
from .errors import NumericalError, ValidationError
from .filters import (
    BUDGET_STRATEGIES,
    budgets,
    evalue_filter,
    fvg_filter,
    fvg_multiple,
    group_filter,
    knockoff_plus,
    naive_fvg,
)
from .grouping import CorrelationMatrix, cluster_average_linkage
from .knockoffs import build_s_equi, sample_multiple_knockoffs
from .scores import (
    LambdaRule,
    kappa_tau,
    multi_scores,
    scores_combined,
    scores_joint_lasso,
    scores_marginal,
    scores_residual_corr,
    scores_separate_lasso,
    w_statistics,
    group_w_statistics,
)
from .simulate import run_experiment
from .structures import RejectionSet, ScoreTable, align_kappa_tau, align_w


def _cmd_cluster(args) -> None:
    corr = CorrelationMatrix(io.read_matrix_csv(args.corr))
    gs = cluster_average_linkage(corr, args.cutoff)
    io.write_groups_json(args.out, gs)
    print(f"wrote {gs.n_groups} groups for {gs.p} features to {args.out}")


def _cmd_knockoff(args) -> None:
    model = io.read_model_json(args.model)
    x = io.read_matrix_csv(args.x)
    smat = build_s_equi(model, num_copies=args.m)
    copies = sample_multiple_knockoffs(model, smat, x, args.m, args.seed)
    header = [f"x{j}_m{m + 1}" for m in range(args.m) for j in range(model.p)]
    io.write_matrix_csv(args.out, np.hstack(copies), header=header)
    print(f"wrote {args.m} knockoff cop{'y' if args.m == 1 else 'ies'} to {args.out}")


def _split_copies(xk: np.ndarray, p: int) -> list[np.ndarray]:
    if xk.shape[1] % p != 0:
        raise ValidationError("knockoff matrix width is not a multiple of p")
    m = xk.shape[1] // p
    return [xk[:, i * p : (i + 1) * p] for i in range(m)]


def _cmd_scores(args) -> None:
    x = io.read_matrix_csv(args.x)
    y = io.read_vector_csv(args.y)
    gs = io.read_groups_json(args.groups)
    copies = _split_copies(io.read_matrix_csv(args.xk), gs.p)
    rule = LambdaRule.parse(args.lambda_rule, seed=args.seed)
    family = args.family.replace("-", "_")
    glm = args.glm
    if len(copies) > 1:
        t_all = multi_scores(x, copies, y, family, rule)
        kt = kappa_tau(t_all, gs)
        io.write_multi_scores_csv(args.out, t_all, kt)
        print(f"wrote kappa/tau scores for {gs.p} features (m={len(copies)}) to {args.out}")
        return
    xk = copies[0]
    if family == "marginal":
        scores = scores_marginal(x, xk, y)
    elif family == "joint_lasso":
        scores = scores_joint_lasso(x, xk, y, rule, family=glm)
    elif family == "residual_corr":
        scores = scores_residual_corr(x, xk, y, gs, rule, family=glm)
    elif family == "separate_lasso":
        scores = scores_separate_lasso(x, xk, y, gs, rule, family=glm)
    elif family == "combined":
        if args.model is not None:
            model = io.read_model_json(args.model)
            psi = model.sigma - build_s_equi(model).s / 2.0
        else:
            # Estimate psi = (Var(X) + Cov(X, X_knock)) / 2 from the sample.
            xc = x - x.mean(axis=0)
            kc = xk - xk.mean(axis=0)
            n = x.shape[0]
            psi = (xc.T @ xc + (xc.T @ kc + kc.T @ xc) / 2.0) / (2.0 * n)
            psi = psi + psi.T
        scores = scores_combined(x, xk, y, gs, psi, rule, family=glm)
    else:
        raise ValidationError(f"unknown score family {args.family!r}")
    io.write_scores_csv(args.out, scores, w_statistics(scores), gs)
    print(f"wrote scores for {gs.p} features to {args.out}")


def _cmd_filter(args) -> None:
    gs = io.read_groups_json(args.groups)
    method = args.method.replace("-", "_")
    if method == "multiple":
        group_of, kappa, tau, m = io.read_multi_scores_csv(args.scores)
        kt = align_kappa_tau(kappa, tau, gs, n_copies=m)
        rej = fvg_multiple(kt, m, args.alpha, budgets(kt, args.budget), args.correction)
    else:
        group_of, t, tk, w = io.read_scores_csv(args.scores)
        if group_of.size != gs.p:
            raise ValidationError("scores file does not match the groups file")
        wt = align_w(w, gs)
        if method == "fvg":
            rej = fvg_filter(wt, args.alpha, budgets(wt, args.budget), args.correction)
        elif method == "naive":
            rej = naive_fvg(wt, args.alpha)
        elif method == "evalue":
            rej = evalue_filter(wt, args.alpha)
        elif method == "knockoff_plus":
            rej = knockoff_plus(w, args.alpha)
        elif method == "group":
            wg = group_w_statistics(ScoreTable(t=t, t_knock=tk), gs)
            picked = group_filter(wg, args.alpha)
            selected = frozenset(j for k in picked for j in gs.groups[k])
            rej = RejectionSet(
                method="group_filter",
                alpha=args.alpha,
                selected=selected,
                thresholds=(float("inf"),),
                fdp_hat=0.0,
                selected_groups=picked,
            )
        else:
            raise ValidationError(f"unknown filter method {args.method!r}")
    io.write_rejection_json(args.out, rej)
    print(f"{rej.method}: selected {len(rej.selected)} features -> {args.out}")


def _cmd_simulate(args) -> None:
    config = io.read_config_json(args.config)
    result = run_experiment(config)
    agg, rep = io.write_experiment_csvs(args.out, result)
    print(f"{config.replications} replications, {result.n_failures} failures")
    print(f"wrote {agg} and {rep}")


class _Parser(argparse.ArgumentParser):
    """Usage errors map to exit code 1; argparse's default of 2 is
    reserved for numerical failures here."""

    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fvgknock")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="group features by average-linkage clustering")
    c.add_argument("--corr", required=True, help="correlation matrix CSV")
    c.add_argument("--cutoff", type=float, default=0.5)
    c.add_argument("--out", required=True, help="output groups JSON")
    c.set_defaults(func=_cmd_cluster)

    k = sub.add_parser("knockoff", help="sample Gaussian group knockoffs")
    k.add_argument("--model", required=True, help="model JSON (mu, sigma, groups)")
    k.add_argument("--x", required=True, help="data matrix CSV")
    k.add_argument("--m", type=int, default=1, help="number of knockoff copies")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", required=True, help="output CSV (copies side by side)")
    k.set_defaults(func=_cmd_knockoff)

    s = sub.add_parser("scores", help="compute importance scores and W statistics")
    s.add_argument("--x", required=True)
    s.add_argument("--xk", required=True, help="knockoff CSV from the knockoff command")
    s.add_argument("--y", required=True)
    s.add_argument("--groups", required=True)
    s.add_argument(
        "--family",
        default="joint_lasso",
        help="marginal | joint_lasso | residual_corr | separate_lasso | combined",
    )
    s.add_argument("--lambda-rule", default="cv", dest="lambda_rule")
    s.add_argument("--glm", default="linear", choices=["linear", "logistic"],
                   help="regression family for the lasso-based scores")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--model", default=None, help="model JSON; exact psi for 'combined'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_scores)

    f = sub.add_parser("filter", help="run a selection procedure on scores")
    f.add_argument("--scores", required=True)
    f.add_argument("--groups", required=True)
    f.add_argument(
        "--method",
        required=True,
        help="fvg | naive | multiple | evalue | knockoff-plus | group",
    )
    f.add_argument("--alpha", type=float, required=True)
    f.add_argument("--budget", default="magnitude", choices=[b.replace("_", "-") for b in BUDGET_STRATEGIES] + list(BUDGET_STRATEGIES))
    f.add_argument("--correction", type=float, default=1.93)
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_filter)

    m = sub.add_parser("simulate", help="run a synthetic experiment from a config")
    m.add_argument("--config", required=True, help="experiment config JSON")
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
