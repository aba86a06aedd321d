"""Group construction from a correlation matrix.

Features are clustered by average-linkage agglomeration on the distance
1 - |cor|, and the tree is cut so that every merge with linkage distance
strictly below the cutoff is applied. Groups are reported in order of
their smallest member index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .structures import GroupStructure, as_float_matrix, _freeze


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric p x p correlation matrix with unit diagonal."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = as_float_matrix(self.values, "correlation matrix")
        if c.shape[0] != c.shape[1]:
            raise ValidationError(f"correlation matrix must be square, got {c.shape}")
        if np.max(np.abs(c - c.T)) > 1e-12:
            raise ValidationError("correlation matrix is not symmetric within 1e-12")
        c = (c + c.T) / 2.0
        if np.max(np.abs(c)) > 1.0 + 1e-8:
            raise ValidationError("correlation entries must lie in [-1, 1]")
        c = np.clip(c, -1.0, 1.0)
        np.fill_diagonal(c, 1.0)
        object.__setattr__(self, "values", _freeze(c))

    @property
    def p(self) -> int:
        return self.values.shape[0]


def correlation_from_data(x) -> CorrelationMatrix:
    """Empirical Pearson correlation matrix of the columns of x."""
    x = as_float_matrix(x, "x")
    n, p = x.shape
    if n < 2:
        raise ValidationError("need at least two rows to compute correlations")
    sd = x.std(axis=0)
    dead = np.flatnonzero(sd == 0.0)
    if dead.size:
        raise ValidationError(f"column {int(dead[0])} is constant; correlation undefined")
    c = np.corrcoef(x, rowvar=False)
    if p == 1:
        c = np.asarray([[1.0]])
    return CorrelationMatrix(values=c)


def cluster_average_linkage(c: CorrelationMatrix, cutoff: float) -> GroupStructure:
    """Average-linkage clustering of 1 - |cor|, cut strictly below ``cutoff``.

    Linkage distances follow the Lance-Williams average recurrence; merge
    ties are broken by the smallest (then second-smallest) member index
    of the candidate pair.
    """
    if not (0.0 < cutoff <= 1.0):
        raise ValidationError(f"cutoff must be in (0, 1], got {cutoff}")
    p = c.p
    d = 1.0 - np.abs(c.values)
    np.fill_diagonal(d, np.inf)

    # Cluster state: members per active cluster, smallest member as label.
    members: list[list[int] | None] = [[j] for j in range(p)]
    labels = np.arange(p)
    sizes = np.ones(p)
    active = np.ones(p, dtype=bool)

    while active.sum() > 1:
        dv = np.where(active[:, None] & active[None, :], d, np.inf)
        best = np.min(dv)
        if not (best < cutoff):
            break
        ii, jj = np.nonzero(dv == best)
        pairs = [
            (min(labels[a], labels[b]), max(labels[a], labels[b]), a, b)
            for a, b in zip(ii, jj)
            if a < b
        ]
        _, _, a, b = min(pairs)
        # Lance-Williams update for average linkage: keep cluster a.
        na, nb = sizes[a], sizes[b]
        merged = (na * d[a, :] + nb * d[b, :]) / (na + nb)
        d[a, :] = merged
        d[:, a] = merged
        d[a, a] = np.inf
        members[a] = members[a] + members[b]  # type: ignore[operator]
        labels[a] = min(labels[a], labels[b])
        sizes[a] = na + nb
        active[b] = False
        members[b] = None

    groups = sorted((m for m in members if m is not None), key=min)
    return GroupStructure.from_groups([sorted(g) for g in groups])
