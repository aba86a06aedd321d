import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_group_structure(rng, p, max_size=4):
    """Random partition of 0..p-1 into contiguous-size groups (shuffled)."""
    from fvgknock import GroupStructure

    perm = rng.permutation(p).tolist()
    groups = []
    while perm:
        k = int(rng.integers(1, max_size + 1))
        groups.append(perm[:k])
        perm = perm[k:]
    return GroupStructure.from_groups(sorted(groups, key=min), p=p)
