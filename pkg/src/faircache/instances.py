"""Small hand-built and random batch instances.

The hand-built ones are tenant-by-view utility matrices where each nonzero
entry is a single query needing just that view.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from faircache.model import BatchInstance, Tenant, View


def matrix_instance(
    table: Mapping[str, Mapping[str, float]],
    budget: int = 1,
    sizes: Mapping[str, int] | None = None,
    weights: Mapping[str, float] | None = None,
) -> BatchInstance:
    """Instance from ``{tenant: {view: utility}}``; views default to unit size."""
    view_ids = sorted({v for row in table.values() for v in row})
    sizes = sizes or {}
    weights = weights or {}
    views = [View(v, int(sizes.get(v, 1))) for v in view_ids]
    tenants = [Tenant(t, float(weights.get(t, 1.0))) for t in table]
    utils = {t: [((v,), u) for v, u in row.items() if u > 0] for t, row in table.items()}
    return BatchInstance.build(tenants, views, budget, utils)


def spacebook(budget: int = 1, weighted: bool = True) -> BatchInstance:
    table = {
        "Analyst": {"R": 2, "S": 1, "P": 0},
        "Engineer": {"R": 2, "S": 1, "P": 0},
        "VP": {"R": 0, "S": 1, "P": 2},
    }
    w = {"Analyst": 1.0, "Engineer": 1.0, "VP": 1.5} if weighted else None
    return matrix_instance(table, budget, weights=w)


def distinct_views() -> BatchInstance:
    """Three tenants, each wanting a different unit view; cache holds one."""
    return matrix_instance({"A": {"R": 1}, "B": {"S": 1}, "C": {"P": 1}})


def shared_secondary() -> BatchInstance:
    """Different favourites, one view everybody likes a little."""
    return matrix_instance({"A": {"R": 2, "S": 1}, "B": {"S": 1}, "C": {"S": 1, "P": 2}})


def majority_minority(n: int) -> BatchInstance:
    """n-1 tenants want R, the last one wants S; cache holds one unit view."""
    table = {f"T{i}": {"R": 1} for i in range(1, n)}
    table[f"T{n}"] = {"S": 1}
    return matrix_instance(table)


def heavy_hitter() -> BatchInstance:
    """A values only S; B values R a hundred times more than S."""
    return matrix_instance({"A": {"S": 1}, "B": {"R": 100, "S": 1}})


def grouped_instance(group_sizes: Sequence[int]) -> BatchInstance:
    """k unit views, group g of tenants all wanting view g, cache of size 1."""
    table = {}
    for g, size in enumerate(group_sizes):
        for m in range(size):
            table[f"g{g}_{m}"] = {f"V{g:02d}": 1}
    return matrix_instance(table)


def random_instance(
    rng: np.random.Generator,
    n_tenants: int,
    n_views: int,
    unit_sizes: bool = False,
    weighted: bool = False,
    max_queries: int = 4,
    max_views_per_query: int = 2,
) -> BatchInstance:
    """Random instance where every tenant can get positive utility alone.

    Each tenant issues 1..max_queries queries over 1..max_views_per_query
    views each; the budget lies between the largest view and the catalog total.
    """
    sizes = np.ones(n_views, dtype=int) if unit_sizes else rng.integers(1, 10, n_views)
    views = [View(f"v{k}", int(sizes[k])) for k in range(n_views)]
    budget = int(rng.integers(int(sizes.max()), max(int(sizes.max()), int(sizes.sum()) - 1) + 1))
    tenants = []
    utils = {}
    for i in range(n_tenants):
        w = float(rng.integers(1, 4)) if weighted else 1.0
        tid = f"t{i}"
        tenants.append(Tenant(tid, w))
        qs = []
        for _ in range(int(rng.integers(1, max_queries + 1))):
            k = int(rng.integers(1, min(max_views_per_query, n_views) + 1))
            vs = rng.choice(n_views, size=k, replace=False)
            qs.append((tuple(f"v{int(v)}" for v in vs), float(rng.integers(1, 20))))
        # guarantee standalone utility: one single-view query on a fitting view
        v = int(rng.integers(0, n_views))
        qs.append(((f"v{v}",), float(rng.integers(1, 20))))
        utils[tid] = qs
    return BatchInstance.build(tenants, views, budget, utils)
