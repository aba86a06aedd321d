"""Core domain types: group partitions, datasets, score tables and the
row/column alignment of W statistics.

Feature indices are 0-based everywhere in the Python API. Alignment puts
each group in its own column, sorted by descending magnitude; row ``l``
collects the features holding the (l+1)-th largest magnitude of their
group. All types are immutable after construction and safe to share
across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ValidationError


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def as_float_vector(x, name: str, allow_empty: bool = False) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValidationError(f"{name} must be 1-dimensional, got shape {v.shape}")
    if not allow_empty and v.size == 0:
        raise ValidationError(f"{name} must be nonempty")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite entries")
    return v


def as_float_matrix(x, name: str) -> np.ndarray:
    m = np.asarray(x, dtype=float)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Partition of feature indices 0..p-1 into K disjoint nonempty groups."""

    p: int
    groups: tuple[tuple[int, ...], ...]
    group_of: np.ndarray = field(repr=False)

    @classmethod
    def from_groups(cls, groups: Iterable[Sequence[int]], p: int | None = None) -> "GroupStructure":
        gtuple = tuple(tuple(int(j) for j in g) for g in groups)
        if len(gtuple) < 1:
            raise ValidationError("need at least one group")
        flat = [j for g in gtuple for j in g]
        if any(len(g) == 0 for g in gtuple):
            raise ValidationError("groups must be nonempty")
        n_features = len(flat)
        if p is None:
            p = n_features
        if len(set(flat)) != n_features:
            raise ValidationError("groups are not disjoint")
        if set(flat) != set(range(p)):
            raise ValidationError(f"groups must cover exactly 0..{p - 1}")
        group_of = np.empty(p, dtype=np.int64)
        for k, g in enumerate(gtuple):
            for j in g:
                group_of[j] = k
        return cls(p=p, groups=gtuple, group_of=_freeze(group_of))

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupStructure":
        """Consecutive groups of the given sizes."""
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        groups = [range(bounds[k], bounds[k + 1]) for k in range(len(sizes))]
        return cls.from_groups(groups)

    @classmethod
    def singletons(cls, p: int) -> "GroupStructure":
        return cls.from_groups([[j] for j in range(p)])

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def max_size(self) -> int:
        return max(self.sizes)


@dataclass(frozen=True, eq=False)
class Dataset:
    """An n x p design matrix with its length-n response vector."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_float_matrix(self.x, "x")
        y = as_float_vector(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise ValidationError(
                f"x has {x.shape[0]} rows but y has {y.shape[0]} entries"
            )
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


class ScorePair(NamedTuple):
    """Nonnegative importance of a feature and of its knockoff copy."""

    t: float
    t_knock: float


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Per-feature importance pairs (T_j, knockoff T_j), stored as arrays."""

    t: np.ndarray
    t_knock: np.ndarray

    def __post_init__(self):
        t = as_float_vector(self.t, "t")
        tk = as_float_vector(self.t_knock, "t_knock")
        if t.shape != tk.shape:
            raise ValidationError("t and t_knock must have equal length")
        if np.any(t < 0) or np.any(tk < 0):
            raise ValidationError("importance scores must be nonnegative")
        object.__setattr__(self, "t", _freeze(t))
        object.__setattr__(self, "t_knock", _freeze(tk))

    def __len__(self) -> int:
        return self.t.shape[0]

    def pair(self, j: int) -> ScorePair:
        return ScorePair(float(self.t[j]), float(self.t_knock[j]))

    def pairs(self) -> list[ScorePair]:
        return [self.pair(j) for j in range(len(self))]


def _align_by_magnitude(mag: np.ndarray, gs: GroupStructure):
    """Sort each group by descending magnitude (ties by ascending index)
    and cut across groups into rows."""
    columns = []
    for g in gs.groups:
        idx = np.array(g, dtype=np.int64)
        order = np.lexsort((idx, -mag[idx]))
        columns.append(tuple(int(j) for j in idx[order]))
    n_rows = gs.max_size
    rows = tuple(
        tuple(col[l] for col in columns if len(col) > l) for l in range(n_rows)
    )
    return tuple(columns), rows


@dataclass(frozen=True, eq=False)
class WTable:
    """Length-p W statistics together with their group-column alignment.

    ``columns[k]`` lists group k's features by descending |W|;
    ``rows[l]`` is the set C_l of features aligned in row l.
    """

    w: np.ndarray
    gs: GroupStructure
    columns: tuple[tuple[int, ...], ...]
    rows: tuple[tuple[int, ...], ...]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def row_of(self, j: int) -> int:
        return self.columns[self.gs.group_of[j]].index(j)


@dataclass(frozen=True, eq=False)
class KappaTauTable:
    """Multiple-knockoff statistics (kappa, tau) with rows aligned by
    descending tau within each group."""

    kappa: np.ndarray
    tau: np.ndarray
    gs: GroupStructure
    columns: tuple[tuple[int, ...], ...]
    rows: tuple[tuple[int, ...], ...]
    n_copies: int

    @property
    def n_rows(self) -> int:
        return len(self.rows)


def align_w(w, gs: GroupStructure) -> WTable:
    """Arrange W statistics into the group-column / magnitude-row table."""
    w = as_float_vector(w, "w")
    if w.shape[0] != gs.p:
        raise ValidationError(f"w has length {w.shape[0]} but group structure has p={gs.p}")
    columns, rows = _align_by_magnitude(np.abs(w), gs)
    return WTable(w=_freeze(w), gs=gs, columns=columns, rows=rows)


def align_kappa_tau(kappa, tau, gs: GroupStructure, n_copies: int) -> KappaTauTable:
    kappa = np.asarray(kappa, dtype=np.int64)
    tau = as_float_vector(tau, "tau")
    if kappa.shape != tau.shape or kappa.shape[0] != gs.p:
        raise ValidationError("kappa/tau must be length-p vectors")
    if n_copies < 1:
        raise ValidationError("need at least one knockoff copy")
    if np.any(kappa < 0) or np.any(kappa > n_copies):
        raise ValidationError(f"kappa entries must lie in 0..{n_copies}")
    if np.any(tau < 0):
        raise ValidationError("tau entries must be nonnegative")
    columns, rows = _align_by_magnitude(tau, gs)
    kappa = kappa.copy()
    kappa.flags.writeable = False
    return KappaTauTable(
        kappa=kappa, tau=_freeze(tau), gs=gs, columns=columns, rows=rows, n_copies=n_copies
    )


@dataclass(frozen=True, eq=False)
class RejectionSet:
    """Selected features plus the thresholds and diagnostics behind them.

    ``thresholds`` holds one entry per alignment row for the row-wise
    filters and a single entry for the global-threshold ones; +inf marks
    a row from which nothing can be selected.
    """

    method: str
    alpha: float
    selected: frozenset[int]
    thresholds: tuple[float, ...]
    fdp_hat: float
    budgets: tuple[float, ...] | None = None
    selected_groups: frozenset[int] | None = None

    @property
    def n_selected(self) -> int:
        return len(self.selected)
