"""Selection procedures on knockoff statistics.

All filters threshold over the observed magnitudes (plus +inf), which
loses nothing since every estimator involved is a step function of t.
The row-wise filters spend per-row shares of the false-discovery budget
and search a shared grid of candidate levels, stopping at the first
level where every row constraint holds; the grid always contains 0,
which forces all thresholds to +inf, so termination is guaranteed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .structures import KappaTauTable, RejectionSet, WTable, as_float_vector

DEFAULT_CORRECTION = 1.93
BUDGET_STRATEGIES = ("magnitude", "magnitude_over_l", "uniform")


@dataclass(frozen=True, eq=False)
class BudgetVector:
    """Per-row shares of the FDP budget; nonnegative, summing to one."""

    v: np.ndarray
    strategy: str

    def __post_init__(self):
        v = as_float_vector(self.v, "budgets")
        if np.any(v < 0):
            raise ValidationError("budgets must be nonnegative")
        if abs(float(v.sum()) - 1.0) > 1e-12:
            raise ValidationError("budgets must sum to 1")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "v", v)


def _row_magnitudes(table: WTable | KappaTauTable) -> list[np.ndarray]:
    mag = np.abs(table.w) if isinstance(table, WTable) else table.tau
    return [mag[list(row)] for row in table.rows]


def budgets(table: WTable | KappaTauTable, strategy: str = "magnitude") -> BudgetVector:
    """Row budgets from the aligned magnitudes.

    "magnitude" weights rows by their magnitude sums, "magnitude_over_l"
    additionally divides row l's sum by l (1-based), and "uniform" splits
    evenly. An all-zero table falls back to uniform.
    """
    strategy = strategy.replace("-", "_")
    if strategy not in BUDGET_STRATEGIES:
        raise ValidationError(f"unknown budget strategy {strategy!r}")
    n_rows = len(table.rows)
    sums = np.array([m.sum() for m in _row_magnitudes(table)])
    if strategy == "magnitude_over_l":
        sums = sums / np.arange(1, n_rows + 1)
    if strategy == "uniform" or sums.sum() <= 0.0:
        v = np.full(n_rows, 1.0 / n_rows)
    else:
        v = sums / sums.sum()
    return BudgetVector(v=v, strategy=strategy)


def _check_alpha(alpha: float) -> float:
    if not (0.0 < alpha <= 1.0):
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
    return float(alpha)


def _count_ge(sorted_mags: np.ndarray, t: float) -> int:
    """#entries >= t in an ascending array (0 for t = +inf)."""
    if not np.isfinite(t):
        return 0
    return sorted_mags.size - int(np.searchsorted(sorted_mags, t, side="left"))


def knockoff_plus(w, alpha: float) -> RejectionSet:
    """The knockoff+ threshold applied to W statistics as one pool."""
    alpha = _check_alpha(alpha)
    w = as_float_vector(w, "w")
    pos = np.sort(w[w > 0])
    neg = np.sort(-w[w < 0])
    domain = np.unique(np.abs(w[w != 0]))
    n_pos = pos.size - np.searchsorted(pos, domain, side="left")
    n_neg = neg.size - np.searchsorted(neg, domain, side="left")
    ok = (1.0 + n_neg) / np.maximum(1, n_pos) <= alpha
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return RejectionSet("knockoff_plus", alpha, frozenset(), (np.inf,), 0.0)
    t = float(domain[hits[0]])
    selected = frozenset(int(j) for j in np.flatnonzero(w >= t))
    fdp_hat = float((1.0 + n_neg[hits[0]]) / max(1, n_pos[hits[0]]))
    return RejectionSet("knockoff_plus", alpha, selected, (t,), fdp_hat)


def group_filter(w_group, alpha: float) -> frozenset[int]:
    """Knockoff+ at group granularity; returns rejected group indices."""
    return knockoff_plus(w_group, alpha).selected


def naive_fvg(wt: WTable, alpha: float) -> RejectionSet:
    """Single-threshold feature filter with the row-maximum count phi(t)
    standing in for the number of rows in play. No FDR proof backs it."""
    alpha = _check_alpha(alpha)
    w = wt.w
    domain = np.unique(np.abs(w[w != 0]))
    if domain.size == 0:
        return RejectionSet("naive", alpha, frozenset(), (np.inf,), 0.0)
    pos = np.sort(w[w > 0])
    neg = np.sort(-w[w < 0])
    n_pos = pos.size - np.searchsorted(pos, domain, side="left")
    n_neg = neg.size - np.searchsorted(neg, domain, side="left")
    phi = np.zeros(domain.size, dtype=np.int64)
    for col in wt.columns:
        mags = np.sort(np.abs(w[list(col)]))
        np.maximum(phi, mags.size - np.searchsorted(mags, domain, side="left"), out=phi)
    ok = (phi + n_neg) / np.maximum(1, n_pos) <= alpha
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return RejectionSet("naive", alpha, frozenset(), (np.inf,), 0.0)
    t = float(domain[hits[0]])
    selected = frozenset(int(j) for j in np.flatnonzero(w >= t))
    fdp_hat = float((phi[hits[0]] + n_neg[hits[0]]) / max(1, n_pos[hits[0]]))
    return RejectionSet("naive", alpha, selected, (t,), fdp_hat)


def naive_fdp_estimate(wt: WTable, t: float) -> float:
    """Closed-form estimator (phi(t) + #neg) / (1 v #pos) at threshold t."""
    w = wt.w
    phi = max(int(np.count_nonzero(np.abs(w[list(col)]) >= t)) for col in wt.columns)
    n_neg = int(np.count_nonzero(w <= -t))
    n_pos = int(np.count_nonzero(w >= t))
    return (phi + n_neg) / max(1, n_pos)


class _RowStats:
    """Sorted per-row magnitude pools used by the grid filters."""

    def __init__(self, neg_mags, pos_mags, domain, row_max, neg_grid_count):
        self.neg = np.sort(neg_mags)
        self.pos = np.sort(pos_mags)
        self.domain = domain  # ascending, positive magnitudes only
        self.row_max = row_max
        self.neg_grid_count = int(neg_grid_count)
        # neg count at every domain point, precomputed for the t searches
        self.neg_at = self.neg.size - np.searchsorted(self.neg, domain, side="left")


def _w_row_stats(wt: WTable) -> list[_RowStats]:
    out = []
    for row in wt.rows:
        vals = wt.w[list(row)]
        mags = np.abs(vals)
        out.append(
            _RowStats(
                neg_mags=mags[vals < 0],
                pos_mags=vals[vals > 0],
                domain=np.unique(mags[vals != 0]),
                row_max=float(mags.max()) if mags.size else 0.0,
                neg_grid_count=np.count_nonzero(vals < 0),
            )
        )
    return out


def _kt_row_stats(kt: KappaTauTable) -> list[_RowStats]:
    out = []
    for row in kt.rows:
        idx = list(row)
        tau = kt.tau[idx]
        is_null_side = kt.kappa[idx] != 0
        out.append(
            _RowStats(
                neg_mags=tau[is_null_side],
                pos_mags=tau[~is_null_side],
                domain=np.unique(tau[tau > 0]),
                row_max=float(tau.max()) if tau.size else 0.0,
                neg_grid_count=np.count_nonzero(is_null_side),
            )
        )
    return out


def _run_grid_filter(
    rows: list[_RowStats],
    v: np.ndarray,
    alpha: float,
    correction: float,
    rate: float,
) -> tuple[np.ndarray, float]:
    """Shared engine: descending grid of (count / budget) levels, per-row
    minimum thresholds at each level, stop when every row constraint
    holds. Returns per-row thresholds and the realized FDP estimate.

    Grid entries keep their integer count and source row so that the
    comparison (1 + neg(t)) / v_row <= count / v_src can be evaluated as
    a product, which is exact when row == src.
    """
    n_rows = len(rows)
    entries: list[tuple[float, int, int]] = []
    for l in range(n_rows):
        if v[l] <= 0.0:
            continue
        for c in range(1, rows[l].neg_grid_count + 2):
            entries.append((c / v[l], c, l))
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))
    entries.append((0.0, 0, -1))

    thresholds = np.full(n_rows, np.inf)
    fdp_hat = 0.0
    for gval, c, src in entries:
        thresholds = np.full(n_rows, np.inf)
        if src >= 0:
            v_src = v[src]
            for l in range(n_rows):
                if v[l] <= 0.0 or rows[l].domain.size == 0:
                    continue
                qualifies = (1.0 + rows[l].neg_at) * v_src <= c * v[l]
                first = np.flatnonzero(qualifies)
                if first.size:
                    thresholds[l] = rows[l].domain[first[0]]
        r_total = sum(_count_ge(rows[l].pos, thresholds[l]) for l in range(n_rows))
        ok = True
        fdp_hat = 0.0
        for l in range(n_rows):
            active = np.isfinite(thresholds[l]) and rows[l].row_max >= thresholds[l]
            if not active:
                continue
            lhs = rate * (1.0 + _count_ge(rows[l].neg, thresholds[l])) / max(1, r_total)
            fdp_hat += lhs
            if lhs > v[l] * alpha / correction:
                ok = False
                break
        if ok:
            return thresholds, fdp_hat
    return thresholds, fdp_hat


def _checked_budgets(budget: BudgetVector, n_rows: int) -> np.ndarray:
    if budget.v.size != n_rows:
        raise ValidationError(
            f"budget vector has {budget.v.size} rows but the table has {n_rows}"
        )
    return budget.v


def fvg_filter(
    wt: WTable,
    alpha: float,
    budget: BudgetVector,
    correction: float = DEFAULT_CORRECTION,
) -> RejectionSet:
    """Row-budgeted feature filter with provable FDR control."""
    alpha = _check_alpha(alpha)
    if correction <= 0.0:
        raise ValidationError("correction must be positive")
    v = _checked_budgets(budget, wt.n_rows)
    rows = _w_row_stats(wt)
    thresholds, fdp_hat = _run_grid_filter(rows, v, alpha, correction, rate=1.0)
    selected = set()
    for l, row in enumerate(wt.rows):
        if np.isfinite(thresholds[l]):
            selected.update(int(j) for j in row if wt.w[j] >= thresholds[l])
    return RejectionSet(
        "fvg",
        alpha,
        frozenset(selected),
        tuple(float(t) for t in thresholds),
        fdp_hat,
        budgets=tuple(float(b) for b in v),
    )


def fvg_multiple(
    kt: KappaTauTable,
    m: int,
    alpha: float,
    budget: BudgetVector,
    correction: float = DEFAULT_CORRECTION,
) -> RejectionSet:
    """Multiple-knockoff analogue of the row-budgeted filter: kappa != 0
    plays the role of a negative sign and tau the magnitude."""
    alpha = _check_alpha(alpha)
    if m < 1:
        raise ValidationError("m must be >= 1")
    if correction <= 0.0:
        raise ValidationError("correction must be positive")
    v = _checked_budgets(budget, kt.n_rows)
    rows = _kt_row_stats(kt)
    thresholds, fdp_hat = _run_grid_filter(rows, v, alpha, correction, rate=1.0 / m)
    selected = set()
    for l, row in enumerate(kt.rows):
        if np.isfinite(thresholds[l]):
            selected.update(
                int(j) for j in row if kt.kappa[j] == 0 and kt.tau[j] >= thresholds[l]
            )
    return RejectionSet(
        "multiple",
        alpha,
        frozenset(selected),
        tuple(float(t) for t in thresholds),
        fdp_hat,
        budgets=tuple(float(b) for b in v),
    )


@dataclass(frozen=True, eq=False)
class EvalueVector:
    """Per-feature e-values with the row thresholds that generated them."""

    e: np.ndarray
    row_thresholds: tuple[float, ...]


def evalues(wt: WTable, alpha: float) -> EvalueVector:
    """Row-wise knockoff e-values at level alpha/2."""
    alpha = _check_alpha(alpha)
    e = np.zeros(wt.gs.p)
    row_ts = []
    for row in wt.rows:
        idx = list(row)
        vals = wt.w[idx]
        pos = np.sort(vals[vals > 0])
        neg = np.sort(-vals[vals < 0])
        domain = np.unique(np.abs(vals[vals != 0]))
        n_pos = pos.size - np.searchsorted(pos, domain, side="left")
        n_neg = neg.size - np.searchsorted(neg, domain, side="left")
        ok = (1.0 + n_neg) / np.maximum(1, n_pos) <= alpha / 2.0
        hits = np.flatnonzero(ok)
        if hits.size == 0:
            row_ts.append(np.inf)
            continue
        t = float(domain[hits[0]])
        row_ts.append(t)
        denom = 1.0 + n_neg[hits[0]]
        for j in idx:
            if wt.w[j] >= t:
                e[j] = len(idx) / denom
    return EvalueVector(e=e, row_thresholds=tuple(row_ts))


def ebh_select(e, alpha: float) -> tuple[int, frozenset[int]]:
    """e-BH step-up rule: largest J with e_(J) >= p/(alpha*J)."""
    alpha = _check_alpha(alpha)
    e = as_float_vector(e, "e")
    if np.any(e < 0):
        raise ValidationError("e-values must be nonnegative")
    p = e.size
    e_sorted = np.sort(e)[::-1]
    ranks = np.arange(1, p + 1)
    ok = e_sorted >= p / (alpha * ranks)
    if not np.any(ok):
        return 0, frozenset()
    j_hat = int(np.flatnonzero(ok)[-1] + 1)
    cut = e_sorted[j_hat - 1]
    return j_hat, frozenset(int(j) for j in np.flatnonzero(e >= cut))


def evalue_filter(wt: WTable, alpha: float) -> RejectionSet:
    """Row-wise e-values combined by e-BH; provable FDR control."""
    ev = evalues(wt, alpha)
    j_hat, selected = ebh_select(ev.e, alpha)
    if j_hat >= 1:
        e_cut = float(np.sort(ev.e)[::-1][j_hat - 1])
        fdp_hat = float(wt.gs.p / (j_hat * e_cut))
    else:
        fdp_hat = 0.0
    return RejectionSet("evalue", alpha, selected, ev.row_thresholds, fdp_hat)
