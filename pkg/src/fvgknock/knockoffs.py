"""Gaussian group knockoffs: the equi-correlated block-diagonal S matrix,
conditional samplers for one or several exchangeable copies, and a
swap-based moment diagnostic.

Given X ~ N(mu, Sigma) and a valid S, each knockoff copy is drawn from
the conditional law with mean mu + (Sigma-S)Sigma^{-1}(x-mu), per-copy
covariance 2S - S Sigma^{-1} S and cross-copy covariance S - S Sigma^{-1} S.
Sampling is deterministic given the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .structures import GroupStructure, as_float_matrix, as_float_vector, _freeze

EIG_TOL = 1e-8
GAMMA_SHRINK = 1.0 - 1e-6


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Known feature distribution N(mu, sigma) with its group partition."""

    mu: np.ndarray
    sigma: np.ndarray = field(repr=False)
    gs: GroupStructure

    def __post_init__(self):
        mu = as_float_vector(self.mu, "mu")
        sigma = as_float_matrix(self.sigma, "sigma")
        if sigma.shape != (mu.size, mu.size) or mu.size != self.gs.p:
            raise ValidationError("mu, sigma and groups disagree on p")
        if np.max(np.abs(sigma - sigma.T)) > 1e-10:
            raise ValidationError("sigma must be symmetric")
        sigma = (sigma + sigma.T) / 2.0
        if np.linalg.eigvalsh(sigma)[0] <= EIG_TOL:
            raise NumericalError("sigma is not positive definite")
        object.__setattr__(self, "mu", _freeze(mu))
        object.__setattr__(self, "sigma", _freeze(sigma))

    @property
    def p(self) -> int:
        return self.mu.size


@dataclass(frozen=True, eq=False)
class SMatrix:
    """Block-diagonal S (conforming to the groups) with S and 2*Sigma-S PSD."""

    s: np.ndarray = field(repr=False)
    gamma: float

    @property
    def p(self) -> int:
        return self.s.shape[0]


def _block_diagonal(sigma: np.ndarray, gs: GroupStructure) -> np.ndarray:
    b = np.zeros_like(sigma)
    for g in gs.groups:
        idx = np.asarray(g)
        b[np.ix_(idx, idx)] = sigma[np.ix_(idx, idx)]
    return b


def build_s_equi(model: GaussianModel, num_copies: int = 1) -> SMatrix:
    """Equi-correlated group construction S = gamma * blockdiag(Sigma).

    gamma = min(1, 2*lambda_min(B^{-1/2} Sigma B^{-1/2})) * (1 - 1e-6)
    with B the block diagonal of Sigma. Passing ``num_copies`` = M > 1
    replaces the factor 2 by (M+1)/M, the feasibility bound for M jointly
    exchangeable copies.
    """
    if num_copies < 1:
        raise ValidationError("num_copies must be >= 1")
    sigma, gs = model.sigma, model.gs
    b = _block_diagonal(sigma, gs)
    b_isqrt = np.zeros_like(b)
    for g in gs.groups:
        idx = np.asarray(g)
        w, u = np.linalg.eigh(b[np.ix_(idx, idx)])
        if w[0] <= EIG_TOL:
            raise NumericalError(f"diagonal block of group {gs.group_of[idx[0]]} is not PD")
        b_isqrt[np.ix_(idx, idx)] = (u / np.sqrt(w)) @ u.T
    lam_min = float(np.linalg.eigvalsh(b_isqrt @ sigma @ b_isqrt)[0])
    factor = (num_copies + 1.0) / num_copies
    gamma = min(1.0, factor * lam_min) * GAMMA_SHRINK
    if gamma <= 0.0:
        raise NumericalError("sigma is too ill-conditioned for a usable S matrix")
    return SMatrix(s=_freeze(gamma * b), gamma=gamma)


def validate_s(model: GaussianModel, smat: SMatrix, tol: float = 1e-10) -> None:
    """Check S is PSD, 2*Sigma - S is PSD and S vanishes outside group blocks."""
    s, sigma = smat.s, model.sigma
    if s.shape != sigma.shape:
        raise ValidationError("S and sigma disagree on p")
    off_block = s - _block_diagonal(s, model.gs)
    if np.max(np.abs(off_block)) > 0.0:
        raise ValidationError("S has nonzero entries outside the group blocks")
    if np.linalg.eigvalsh((s + s.T) / 2.0)[0] < -tol:
        raise NumericalError("S is not PSD")
    two_sig = 2.0 * sigma - s
    if np.linalg.eigvalsh((two_sig + two_sig.T) / 2.0)[0] < -tol:
        raise NumericalError("2*Sigma - S is not PSD")


def _psd_factor(a: np.ndarray, what: str) -> np.ndarray:
    """A matrix F with F F^T = a, clipping eigenvalues in (-EIG_TOL, 0) to 0."""
    a = (a + a.T) / 2.0
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        w, u = np.linalg.eigh(a)
        if w[0] < -EIG_TOL:
            raise NumericalError(f"{what} is not PSD (min eigenvalue {w[0]:.3e})")
        return u * np.sqrt(np.clip(w, 0.0, None))


def _conditional_parts(model: GaussianModel, smat: SMatrix):
    sigma, s = model.sigma, smat.s
    gain = np.linalg.solve(sigma, sigma - s)  # Sigma^{-1}(Sigma - S)
    sis = s @ np.linalg.solve(sigma, s)  # S Sigma^{-1} S
    cross = s - sis
    return gain, cross


def _helmert(m: int) -> np.ndarray:
    """Orthogonal m x m matrix whose first column is 1/sqrt(m)."""
    q = np.zeros((m, m))
    q[:, 0] = 1.0 / np.sqrt(m)
    for r in range(1, m):
        q[:r, r] = 1.0
        q[r, r] = -r
        q[:, r] /= np.sqrt(r * (r + 1.0))
    return q


def sample_multiple_knockoffs(
    model: GaussianModel, smat: SMatrix, x, m: int, rng_seed: int
) -> list[np.ndarray]:
    """Draw M jointly exchangeable knockoff copies of each row of x."""
    if m < 1:
        raise ValidationError("m must be >= 1")
    x = as_float_matrix(x, "x")
    if x.shape[1] != model.p or smat.p != model.p:
        raise ValidationError("x, model and S disagree on p")
    gain, cross = _conditional_parts(model, smat)
    mean = model.mu + (x - model.mu) @ gain
    # Conditional covariance of the stacked copies is I_m (x) S + 11^T (x) C;
    # in the Helmert basis it block-diagonalizes to S + m*C and m-1 copies of S.
    f_shared = _psd_factor(smat.s + m * cross, "joint conditional covariance")
    f_within = _psd_factor(smat.s, "joint conditional covariance") if m > 1 else None
    rng = np.random.default_rng(rng_seed)
    n, p = x.shape
    basis = []
    for r in range(m):
        z = rng.standard_normal((n, p))
        basis.append(z @ (f_shared.T if r == 0 else f_within.T))
    q = _helmert(m)
    return [mean + sum(q[c, r] * basis[r] for r in range(m)) for c in range(m)]


def sample_knockoffs(model: GaussianModel, smat: SMatrix, x, rng_seed: int) -> np.ndarray:
    """Draw one knockoff copy of each row of x (M=1 case)."""
    return sample_multiple_knockoffs(model, smat, x, 1, rng_seed)[0]


@dataclass(frozen=True)
class SwapDiagnostic:
    """Largest empirical moment changes induced by a group swap."""

    max_mean_diff: float
    max_cov_diff: float

    @property
    def max_diff(self) -> float:
        return max(self.max_mean_diff, self.max_cov_diff)


def exchangeability_diagnostic(x, x_knock, gs: GroupStructure, swap_set) -> SwapDiagnostic:
    """Compare empirical moments of (X, X_knock) before and after swapping
    the groups in ``swap_set``; valid knockoffs should move them only by
    sampling noise."""
    x = as_float_matrix(x, "x")
    xk = as_float_matrix(x_knock, "x_knock")
    if x.shape != xk.shape or x.shape[1] != gs.p:
        raise ValidationError("x and x_knock must be n x p matrices matching the groups")
    swap = sorted(set(int(k) for k in swap_set))
    if any(k < 0 or k >= gs.n_groups for k in swap):
        raise ValidationError("swap_set contains an unknown group index")
    p = gs.p
    joint = np.hstack([x, xk])
    mu = joint.mean(axis=0)
    centered = joint - mu
    cov = centered.T @ centered / joint.shape[0]
    perm = np.arange(2 * p)
    for k in swap:
        idx = np.asarray(gs.groups[k])
        perm[idx], perm[idx + p] = idx + p, idx.copy()
    return SwapDiagnostic(
        max_mean_diff=float(np.max(np.abs(mu[perm] - mu))),
        max_cov_diff=float(np.max(np.abs(cov[np.ix_(perm, perm)] - cov))),
    )
