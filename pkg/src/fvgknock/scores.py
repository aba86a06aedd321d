"""Feature importance scores and the statistics built from them.

Every score family evaluates the feature and its knockoff copy through
the same function of the data, so exchanging a group's columns with
their knockoffs exchanges the corresponding (T, T_knock) pairs. W
statistics use the signed-max combination; kappa/tau generalize
sign/|W| to several knockoff copies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .lasso import LassoFit, lambda_max, lasso_cv, lasso_fit, lasso_residuals
from .structures import (
    GroupStructure,
    KappaTauTable,
    ScoreTable,
    align_kappa_tau,
    as_float_matrix,
    as_float_vector,
)

SCORE_FAMILIES = ("marginal", "joint_lasso", "residual_corr", "separate_lasso", "combined")


@dataclass(frozen=True)
class LambdaRule:
    """How to pick the lasso penalty for a score computation.

    kind "cv"     cross-validated (value = lambda_min_ratio exponent ignored)
    kind "fixed"  lam = value
    kind "ratio"  lam = value * lambda_max(design)
    kind "sqrt"   lam = value * sd(y) * sqrt(2 log(2q) / n)
    """

    kind: str = "cv"
    value: float = 1.0
    seed: int = 0
    n_folds: int = 5

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "LambdaRule":
        head, _, tail = text.partition(":")
        if head not in ("cv", "fixed", "ratio", "sqrt"):
            raise ValidationError(f"unknown lambda rule {text!r}")
        value = float(tail) if tail else 1.0
        return cls(kind=head, value=value, seed=seed)


def _fit_with_rule(design, y, rule: LambdaRule, family: str) -> LassoFit:
    if rule.kind == "cv":
        _, fit = lasso_cv(design, y, family=family, n_folds=rule.n_folds, seed=rule.seed)
        return fit
    if rule.kind == "fixed":
        lam = rule.value
    elif rule.kind == "ratio":
        lam = rule.value * lambda_max(design, y, family)
    elif rule.kind == "sqrt":
        n, q = np.asarray(design).shape
        lam = rule.value * float(np.std(y)) * np.sqrt(2.0 * np.log(2.0 * q) / n)
    else:
        raise ValidationError(f"unknown lambda rule kind {rule.kind!r}")
    return lasso_fit(design, y, lam, family=family)


def correlation_with(x, v) -> np.ndarray:
    """|corr| of each column of x with v; 0 where either side is constant."""
    x = as_float_matrix(x, "x")
    v = as_float_vector(v, "v")
    xc = x - x.mean(axis=0)
    vc = v - v.mean()
    x_ss = np.einsum("ij,ij->j", xc, xc)
    v_ss = float(vc @ vc)
    denom = np.sqrt(x_ss * v_ss)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0.0, (xc.T @ vc) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(r, -1.0, 1.0)


def _check_xxk(x, xk) -> tuple[np.ndarray, np.ndarray]:
    x = as_float_matrix(x, "x")
    xk = as_float_matrix(xk, "x_knock")
    if x.shape != xk.shape:
        raise ValidationError("x and x_knock must have identical shapes")
    return x, xk


def scores_marginal(x, x_knock, y) -> ScoreTable:
    """Absolute marginal correlation with the response."""
    x, xk = _check_xxk(x, x_knock)
    return ScoreTable(
        t=np.abs(correlation_with(x, y)), t_knock=np.abs(correlation_with(xk, y))
    )


def joint_lasso_fit(x, x_knock, y, lambda_rule: LambdaRule, family: str = "linear") -> LassoFit:
    """One lasso on the augmented design [x, x_knock]."""
    x, xk = _check_xxk(x, x_knock)
    return _fit_with_rule(np.hstack([x, xk]), y, lambda_rule, family)


def scores_joint_lasso(
    x, x_knock, y, lambda_rule: LambdaRule, family: str = "linear"
) -> ScoreTable:
    """|coefficient| pairs from the joint lasso (standardized scale)."""
    fit = joint_lasso_fit(x, x_knock, y, lambda_rule, family)
    p = np.asarray(x).shape[1]
    return ScoreTable(t=np.abs(fit.coef_std[:p]), t_knock=np.abs(fit.coef_std[p:]))


def scores_residual_corr(
    x, x_knock, y, gs: GroupStructure, lambda_rule: LambdaRule, family: str = "linear"
) -> ScoreTable:
    """Per group: |corr| with the residual of a lasso that excludes the
    group's original and knockoff columns (K fits)."""
    x, xk = _check_xxk(x, x_knock)
    y = as_float_vector(y, "y")
    if x.shape[1] != gs.p:
        raise ValidationError("x does not match the group structure")
    t = np.zeros(gs.p)
    tk = np.zeros(gs.p)
    for g in gs.groups:
        idx = np.asarray(g)
        keep = np.setdiff1d(np.arange(gs.p), idx)
        if keep.size == 0:
            resid = y - y.mean()
        else:
            design = np.hstack([x[:, keep], xk[:, keep]])
            fit = _fit_with_rule(design, y, lambda_rule, family)
            resid = lasso_residuals(fit, design, y)
        t[idx] = np.abs(correlation_with(x[:, idx], resid))
        tk[idx] = np.abs(correlation_with(xk[:, idx], resid))
    return ScoreTable(t=t, t_knock=tk)


def scores_separate_lasso(
    x, x_knock, y, gs: GroupStructure, lambda_rule: LambdaRule, family: str = "linear"
) -> ScoreTable:
    """Per feature: lasso on that feature, its knockoff, and every column
    outside the feature's group (p fits)."""
    x, xk = _check_xxk(x, x_knock)
    if x.shape[1] != gs.p:
        raise ValidationError("x does not match the group structure")
    t = np.zeros(gs.p)
    tk = np.zeros(gs.p)
    for g in gs.groups:
        idx = np.asarray(g)
        keep = np.setdiff1d(np.arange(gs.p), idx)
        rest = np.hstack([x[:, keep], xk[:, keep]]) if keep.size else np.empty((x.shape[0], 0))
        for j in g:
            design = np.hstack([x[:, [j]], xk[:, [j]], rest])
            fit = _fit_with_rule(design, y, lambda_rule, family)
            t[j] = abs(fit.coef_std[0])
            tk[j] = abs(fit.coef_std[1])
    return ScoreTable(t=t, t_knock=tk)


def compute_g(gamma_hat, psi, gs: GroupStructure) -> np.ndarray:
    """Schur-complement weights turning joint-lasso coefficients into a
    within-group contribution measure.

    g_j adds to gamma_hat_j each groupmate's coefficient weighted by the
    conditional (on all other groups) covariance ratio taken from psi.
    """
    gamma_hat = as_float_vector(gamma_hat, "gamma_hat")
    psi = as_float_matrix(psi, "psi")
    p = gs.p
    if gamma_hat.size != p or psi.shape != (p, p):
        raise ValidationError("gamma_hat/psi do not match the group structure")
    w = np.linalg.eigvalsh((psi + psi.T) / 2.0)
    if w[0] <= 0.0:
        raise NumericalError("psi must be positive definite")
    # The Schur complement of psi_{-B,-B} equals the inverse of the (B, B)
    # block of psi^{-1}; one global inversion covers every group.
    psi_inv = np.linalg.inv(psi)
    g = np.zeros(p)
    for g_idx in gs.groups:
        idx = np.asarray(g_idx)
        schur = np.linalg.inv(psi_inv[np.ix_(idx, idx)])
        diag = np.diag(schur).copy()
        bad = np.flatnonzero(diag <= 1e-12)
        if bad.size:
            raise NumericalError(
                f"conditional variance of feature {int(idx[bad[0]])} is numerically zero"
            )
        ratios = schur / diag[:, None]
        np.fill_diagonal(ratios, 0.0)
        g[idx] = gamma_hat[idx] + ratios @ gamma_hat[idx]
    return g


def scores_combined(
    x, x_knock, y, gs: GroupStructure, psi, lambda_rule: LambdaRule, family: str = "linear"
) -> ScoreTable:
    """|g_j| times the absolute marginal correlations, with g from one
    joint lasso; a cheap stand-in for the separate lasso."""
    x, xk = _check_xxk(x, x_knock)
    fit = joint_lasso_fit(x, xk, y, lambda_rule, family)
    p = gs.p
    gamma_hat = (fit.coef_std[:p] + fit.coef_std[p:]) / 2.0
    g = np.abs(compute_g(gamma_hat, psi, gs))
    return ScoreTable(
        t=g * np.abs(correlation_with(x, y)),
        t_knock=g * np.abs(correlation_with(xk, y)),
    )


def delta_hat(fit: LassoFit, p: int) -> np.ndarray:
    """Half-difference of the joint-lasso coefficient pairs (diagnostic only)."""
    return (fit.coef_std[:p] - fit.coef_std[p:]) / 2.0


def w_statistics(scores: ScoreTable) -> np.ndarray:
    """Signed-max statistic: sign(T - T_knock) * max(T, T_knock)."""
    return np.sign(scores.t - scores.t_knock) * np.maximum(scores.t, scores.t_knock)


def group_w_statistics(scores: ScoreTable, gs: GroupStructure) -> np.ndarray:
    """Group-level signed-max statistics from within-group score sums."""
    t = np.array([scores.t[list(g)].sum() for g in gs.groups])
    tk = np.array([scores.t_knock[list(g)].sum() for g in gs.groups])
    return np.sign(t - tk) * np.maximum(t, tk)


def kappa_tau(t_all, gs: GroupStructure) -> KappaTauTable:
    """Winning-copy index and its margin over the median of the rest.

    ``t_all`` has shape (M+1, p): row 0 holds the original features'
    scores, rows 1..M the knockoff copies'. Ties in the argmax go to the
    smallest index.
    """
    t_all = as_float_matrix(t_all, "t_all")
    m_plus_1, p = t_all.shape
    if m_plus_1 < 2:
        raise ValidationError("need scores for the original and at least one knockoff copy")
    kappa = np.argmax(t_all, axis=0)
    tau = np.empty(p)
    for j in range(p):
        rest = np.delete(t_all[:, j], kappa[j])
        tau[j] = t_all[kappa[j], j] - np.median(rest)
    return align_kappa_tau(kappa, tau, gs, n_copies=m_plus_1 - 1)


def multi_scores(
    x, copies, y, family: str, lambda_rule: LambdaRule | None = None
) -> np.ndarray:
    """Importance scores of the original features and each knockoff copy,
    as an (M+1, p) array. Supports the 'marginal' and 'joint_lasso'
    families, whose score functions extend symmetrically to M copies."""
    x = as_float_matrix(x, "x")
    mats = [x] + [as_float_matrix(c, "knockoff copy") for c in copies]
    if any(m.shape != x.shape for m in mats):
        raise ValidationError("knockoff copies must match the shape of x")
    p = x.shape[1]
    if family == "marginal":
        return np.vstack([np.abs(correlation_with(m, y)) for m in mats])
    if family == "joint_lasso":
        if lambda_rule is None:
            raise ValidationError("joint_lasso requires a lambda rule")
        fit = _fit_with_rule(np.hstack(mats), y, lambda_rule, "linear")
        return np.abs(fit.coef_std).reshape(len(mats), p)
    raise ValidationError(f"family {family!r} does not support multiple knockoffs")
