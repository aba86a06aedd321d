"""Evaluation of rejection sets: FDP/power against a ground truth, and
catching-set size and purity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .grouping import CorrelationMatrix
from .structures import GroupStructure


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Non-null feature indices and the groups containing them."""

    p: int
    nonnull_features: frozenset[int]
    nonnull_groups: frozenset[int]

    @classmethod
    def from_beta(cls, beta, gs: GroupStructure) -> "GroundTruth":
        beta = np.asarray(beta, dtype=float)
        if beta.size != gs.p:
            raise ValidationError("beta length does not match the group structure")
        nonnull = frozenset(int(j) for j in np.flatnonzero(beta != 0.0))
        groups = frozenset(int(gs.group_of[j]) for j in nonnull)
        return cls(p=gs.p, nonnull_features=nonnull, nonnull_groups=groups)

    @classmethod
    def from_features(cls, nonnull, gs: GroupStructure) -> "GroundTruth":
        nonnull = frozenset(int(j) for j in nonnull)
        if any(j < 0 or j >= gs.p for j in nonnull):
            raise ValidationError("non-null feature index out of range")
        groups = frozenset(int(gs.group_of[j]) for j in nonnull)
        return cls(p=gs.p, nonnull_features=nonnull, nonnull_groups=groups)


def fdp_power(selected, truth: GroundTruth) -> tuple[float, float]:
    """False discovery proportion and power of a selected feature set.

    Power is 0 by convention when there are no non-null features.
    """
    selected = set(int(j) for j in selected)
    false_hits = len(selected - truth.nonnull_features)
    fdp = false_hits / max(1, len(selected))
    if truth.nonnull_features:
        power = len(selected & truth.nonnull_features) / len(truth.nonnull_features)
    else:
        power = 0.0
    return fdp, power


def catching_sets(
    selected, gs: GroupStructure, method: str = "feature"
) -> list[tuple[int, frozenset[int]]]:
    """Selected features grouped by their group; only nonempty sets.

    Feature-level methods catch the intersection with each group; the
    group-level filter catches whole groups.
    """
    if method not in ("feature", "group"):
        raise ValidationError(f"unknown catching-set method {method!r}")
    selected = set(int(j) for j in selected)
    out = []
    for k, g in enumerate(gs.groups):
        hit = selected.intersection(g)
        if hit:
            out.append((k, frozenset(g) if method == "group" else frozenset(hit)))
    return out


def purity(catching_set, c: CorrelationMatrix) -> float:
    """Minimum |correlation| over pairs in the set; 1 for singletons."""
    idx = sorted(int(j) for j in catching_set)
    if len(idx) == 0:
        raise ValidationError("purity of an empty catching set is undefined")
    if len(idx) == 1:
        return 1.0
    sub = np.abs(c.values[np.ix_(idx, idx)])
    return float(np.min(sub[np.triu_indices(len(idx), k=1)]))


def catching_stats(
    selected, gs: GroupStructure, c: CorrelationMatrix | None, method: str = "feature"
) -> tuple[float, float, int]:
    """(mean size, mean purity, count) over nonempty catching sets;
    NaN means when there are none."""
    sets = catching_sets(selected, gs, method)
    if not sets:
        return float("nan"), float("nan"), 0
    sizes = [len(s) for _, s in sets]
    mean_purity = float("nan")
    if c is not None:
        mean_purity = float(np.mean([purity(s, c) for _, s in sets]))
    return float(np.mean(sizes)), mean_purity, len(sets)
