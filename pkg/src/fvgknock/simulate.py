"""Synthetic-experiment harness: blocked-correlation Gaussian designs, a
sparse blocked coefficient pattern, and replication loops that run the
configured filters at each target level and aggregate FDP/power and
catching-set outcomes.

Randomness is fully determined by the master seed: replication r draws
its data, knockoff and fold seeds from independent substreams keyed by
(r, purpose), so results do not depend on execution order.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from os import cpu_count

import numpy as np

from .errors import FvgError, ValidationError
from .filters import (
    budgets,
    evalue_filter,
    fvg_filter,
    fvg_multiple,
    group_filter,
    knockoff_plus,
    naive_fvg,
)
from .grouping import CorrelationMatrix
from .knockoffs import GaussianModel, SMatrix, build_s_equi, sample_multiple_knockoffs
from .lasso import kkt_residual
from .metrics import GroundTruth, catching_stats, fdp_power
from .scores import (
    LambdaRule,
    joint_lasso_fit,
    kappa_tau,
    multi_scores,
    scores_combined,
    scores_marginal,
    scores_residual_corr,
    scores_separate_lasso,
    w_statistics,
    group_w_statistics,
)
from .structures import Dataset, GroupStructure, ScoreTable, align_w

W_FILTERS = ("fvg", "naive", "evalue", "knockoff_plus", "group")
ALL_FILTERS = W_FILTERS + ("multiple",)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one synthetic experiment."""

    n: int = 1000
    p: int = 250
    group_sizes: tuple[int, ...] | None = None  # default: groups of 5
    within_corr: float = 0.7
    between_corr: float = 0.3
    sigma: tuple | None = None  # explicit covariance, overrides the corr spec
    beta: tuple | None = None  # explicit coefficients, overrides beta_pattern
    beta_pattern: str = "blocked"  # "blocked" | "null"
    noise_sd: float = 4.0
    replications: int = 100
    master_seed: int = 0
    alphas: tuple[float, ...] = (0.05, 0.1, 0.2)
    filters: tuple[str, ...] = ("fvg", "naive", "evalue", "knockoff_plus", "group")
    score_family: str = "joint_lasso"
    lambda_rule: str = "sqrt"
    m_knockoffs: int = 1
    budget_strategy: str = "magnitude"
    correction: float = 1.93
    n_jobs: int = 0

    def group_structure(self) -> GroupStructure:
        sizes = self.group_sizes
        if sizes is None:
            if self.p % 5 != 0:
                raise ValidationError("default grouping needs p divisible by 5")
            sizes = (5,) * (self.p // 5)
        if sum(sizes) != self.p or any(s <= 0 for s in sizes):
            raise ValidationError("group sizes must be positive and sum to p")
        return GroupStructure.from_sizes(sizes)

    def validate(self) -> None:
        if self.n < 2 or self.p < 1 or self.replications < 1:
            raise ValidationError("n, p and replications must be positive")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")
        if self.m_knockoffs < 1:
            raise ValidationError("m_knockoffs must be >= 1")
        for a in self.alphas:
            if not (0.0 < a <= 1.0):
                raise ValidationError(f"alpha {a} outside (0, 1]")
        for f in self.filters:
            if f not in ALL_FILTERS:
                raise ValidationError(f"unknown filter {f!r}")
        if self.m_knockoffs > 1 and any(f in W_FILTERS for f in self.filters):
            raise ValidationError("only the 'multiple' filter supports m_knockoffs > 1")
        if "multiple" in self.filters and self.score_family not in ("marginal", "joint_lasso"):
            raise ValidationError("the 'multiple' filter needs a marginal or joint_lasso score")
        self.group_structure()


def build_covariance(gs: GroupStructure, within: float, between: float) -> np.ndarray:
    """Unit-variance covariance: ``within`` inside groups, ``between`` across."""
    sigma = np.full((gs.p, gs.p), between)
    for g in gs.groups:
        idx = np.asarray(g)
        sigma[np.ix_(idx, idx)] = within
    np.fill_diagonal(sigma, 1.0)
    return sigma


_BLOCK_PATTERNS = {
    (0, 1): (1.0, 1.0, -0.2, -0.2, -0.2),
    (2, 3): (2.5, -1.2, -1.2, 0.0, 0.0),
    (4, 9): (0.3, 0.3, 0.0, 0.0, 0.0),
}


def blocked_beta(gs: GroupStructure) -> np.ndarray:
    """Sparse coefficient pattern on the first ten groups of five."""
    if gs.n_groups < 10 or any(len(gs.groups[k]) != 5 for k in range(10)):
        raise ValidationError("the blocked beta pattern needs 10 leading groups of size 5")
    beta = np.zeros(gs.p)
    for (lo, hi), vals in _BLOCK_PATTERNS.items():
        for k in range(lo, hi + 1):
            beta[list(gs.groups[k])] = vals
    return beta


def _resolve_beta(config: ExperimentConfig, gs: GroupStructure) -> np.ndarray:
    if config.beta is not None:
        beta = np.asarray(config.beta, dtype=float)
        if beta.size != gs.p:
            raise ValidationError("beta length does not match p")
        return beta
    if config.beta_pattern == "null":
        return np.zeros(gs.p)
    if config.beta_pattern == "blocked":
        return blocked_beta(gs)
    raise ValidationError(f"unknown beta pattern {config.beta_pattern!r}")


def _resolve_sigma(config: ExperimentConfig, gs: GroupStructure) -> np.ndarray:
    if config.sigma is not None:
        return np.asarray(config.sigma, dtype=float)
    return build_covariance(gs, config.within_corr, config.between_corr)


def experiment_model(config: ExperimentConfig) -> tuple[GaussianModel, np.ndarray, GroundTruth]:
    gs = config.group_structure()
    sigma = _resolve_sigma(config, gs)
    beta = _resolve_beta(config, gs)
    model = GaussianModel(mu=np.zeros(gs.p), sigma=sigma, gs=gs)
    return model, beta, GroundTruth.from_beta(beta, gs)


def _seed(master: int, rep: int, purpose: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(rep, purpose))


def gen_synthetic(config: ExperimentConfig, seed) -> tuple[Dataset, GaussianModel, GroundTruth]:
    """One dataset: X ~ MVN(0, Sigma), y = X beta + noise."""
    config.validate()
    model, beta, truth = experiment_model(config)
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(model.sigma)
    x = rng.standard_normal((config.n, config.p)) @ chol.T + model.mu
    y = x @ beta + config.noise_sd * rng.standard_normal(config.n)
    return Dataset(x=x, y=y), model, truth


@dataclass(frozen=True)
class RepOutcome:
    """Metrics of one (filter, alpha) cell within one replication."""

    rep: int
    method: str
    alpha: float
    fdp: float
    power: float
    catch_size: float  # NaN when nothing was selected
    catch_purity: float
    n_selected: int


@dataclass(frozen=True)
class ReplicationResult:
    rep: int
    seed: int
    outcomes: tuple[RepOutcome, ...]
    kkt_residual: float  # NaN when no joint lasso was audited
    seconds: float


@dataclass(frozen=True)
class AggregateRow:
    method: str
    alpha: float
    mean_fdr: float
    se_fdr: float
    mean_power: float
    se_power: float
    mean_catch_size: float
    mean_purity: float
    n_reps: int


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    aggregate: tuple[AggregateRow, ...]
    replications: tuple[ReplicationResult, ...]
    failures: tuple[tuple[int, str], ...]

    @property
    def n_failures(self) -> int:
        return len(self.failures)

    def row(self, method: str, alpha: float) -> AggregateRow:
        for r in self.aggregate:
            if r.method == method and abs(r.alpha - alpha) < 1e-12:
                return r
        raise KeyError((method, alpha))


def _compute_w_scores(
    config: ExperimentConfig,
    ds: Dataset,
    x_knock: np.ndarray,
    model: GaussianModel,
    smat: SMatrix,
    rule: LambdaRule,
) -> tuple[ScoreTable, float]:
    """Score table for the W-based filters plus the audited KKT residual."""
    family = config.score_family
    if family == "marginal":
        return scores_marginal(ds.x, x_knock, ds.y), float("nan")
    if family == "joint_lasso":
        fit = joint_lasso_fit(ds.x, x_knock, ds.y, rule)
        design = np.hstack([ds.x, x_knock])
        scores = ScoreTable(
            t=np.abs(fit.coef_std[: ds.p]), t_knock=np.abs(fit.coef_std[ds.p :])
        )
        return scores, kkt_residual(fit, design, ds.y)
    if family == "residual_corr":
        return scores_residual_corr(ds.x, x_knock, ds.y, model.gs, rule), float("nan")
    if family == "separate_lasso":
        return scores_separate_lasso(ds.x, x_knock, ds.y, model.gs, rule), float("nan")
    if family == "combined":
        psi = model.sigma - smat.s / 2.0
        return scores_combined(ds.x, x_knock, ds.y, model.gs, psi, rule), float("nan")
    raise ValidationError(f"unknown score family {config.score_family!r}")


def _run_replication(
    config: ExperimentConfig,
    rep: int,
    model: GaussianModel,
    smat: SMatrix,
    truth: GroundTruth,
    corr: CorrelationMatrix,
) -> ReplicationResult:
    t0 = time.perf_counter()
    gs = model.gs
    data_seed = _seed(config.master_seed, rep, 0)
    knock_seed = int(_seed(config.master_seed, rep, 1).generate_state(1)[0])
    cv_seed = int(_seed(config.master_seed, rep, 2).generate_state(1)[0])
    rule = LambdaRule.parse(config.lambda_rule, seed=cv_seed)

    ds, _, _ = gen_synthetic(config, data_seed)
    copies = sample_multiple_knockoffs(model, smat, ds.x, config.m_knockoffs, knock_seed)

    outcomes: list[RepOutcome] = []
    kkt = float("nan")
    if any(f in W_FILTERS for f in config.filters):
        scores, kkt = _compute_w_scores(config, ds, copies[0], model, smat, rule)
        w = w_statistics(scores)
        wt = align_w(w, gs)
        bud = budgets(wt, config.budget_strategy)
        w_group = group_w_statistics(scores, gs)
    if "multiple" in config.filters:
        t_all = multi_scores(ds.x, copies, ds.y, config.score_family, rule)
        kt = kappa_tau(t_all, gs)
        bud_kt = budgets(kt, config.budget_strategy)

    for alpha in config.alphas:
        for name in config.filters:
            if name == "fvg":
                rej = fvg_filter(wt, alpha, bud, config.correction)
                selected, method = rej.selected, "feature"
            elif name == "naive":
                rej = naive_fvg(wt, alpha)
                selected, method = rej.selected, "feature"
            elif name == "evalue":
                rej = evalue_filter(wt, alpha)
                selected, method = rej.selected, "feature"
            elif name == "knockoff_plus":
                rej = knockoff_plus(w, alpha)
                selected, method = rej.selected, "feature"
            elif name == "group":
                picked = group_filter(w_group, alpha)
                selected = frozenset(j for k in picked for j in gs.groups[k])
                method = "group"
            else:
                rej = fvg_multiple(kt, config.m_knockoffs, alpha, bud_kt, config.correction)
                selected, method = rej.selected, "feature"
            fdp, power = fdp_power(selected, truth)
            size, pur, _ = catching_stats(selected, gs, corr, method)
            outcomes.append(
                RepOutcome(
                    rep=rep,
                    method=name,
                    alpha=alpha,
                    fdp=fdp,
                    power=power,
                    catch_size=size,
                    catch_purity=pur,
                    n_selected=len(selected),
                )
            )
    return ReplicationResult(
        rep=rep,
        seed=config.master_seed,
        outcomes=tuple(outcomes),
        kkt_residual=kkt,
        seconds=time.perf_counter() - t0,
    )


def _aggregate(config: ExperimentConfig, reps: list[ReplicationResult]) -> tuple[AggregateRow, ...]:
    rows = []
    for alpha in config.alphas:
        for name in config.filters:
            cells = [
                o
                for r in reps
                for o in r.outcomes
                if o.method == name and abs(o.alpha - alpha) < 1e-12
            ]
            if not cells:
                continue
            fdp = np.array([o.fdp for o in cells])
            power = np.array([o.power for o in cells])
            sizes = np.array([o.catch_size for o in cells])
            purs = np.array([o.catch_purity for o in cells])
            n = len(cells)
            se = lambda v: float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
            with np.errstate(all="ignore"):
                rows.append(
                    AggregateRow(
                        method=name,
                        alpha=alpha,
                        mean_fdr=float(fdp.mean()),
                        se_fdr=se(fdp),
                        mean_power=float(power.mean()),
                        se_power=se(power),
                        mean_catch_size=float(np.nanmean(sizes)) if np.any(np.isfinite(sizes)) else float("nan"),
                        mean_purity=float(np.nanmean(purs)) if np.any(np.isfinite(purs)) else float("nan"),
                        n_reps=n,
                    )
                )
    return tuple(rows)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every replication, tolerating per-replication failures."""
    config.validate()
    model, _, truth = experiment_model(config)
    smat = build_s_equi(model, num_copies=config.m_knockoffs)
    sd = np.sqrt(np.diag(model.sigma))
    corr = CorrelationMatrix(model.sigma / np.outer(sd, sd))

    def work(rep: int):
        try:
            return _run_replication(config, rep, model, smat, truth, corr)
        except FvgError as exc:  # recorded, not fatal
            return (rep, f"{type(exc).__name__}: {exc}")

    n_jobs = config.n_jobs or (cpu_count() or 1)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, range(config.replications)))
    else:
        results = [work(rep) for rep in range(config.replications)]

    reps = [r for r in results if isinstance(r, ReplicationResult)]
    failures = tuple(r for r in results if not isinstance(r, ReplicationResult))
    return ExperimentResult(
        config=config,
        aggregate=_aggregate(config, reps),
        replications=tuple(reps),
        failures=failures,
    )
