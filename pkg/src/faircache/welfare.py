"""Exact welfare maximization over feasible configurations."""
from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

from faircache import kernels
from faircache.model import (
    BatchInstance,
    Configuration,
    FairCacheError,
    TooManyViews,
    ZeroMaxUtility,
)

ENUMERATION_LIMIT = 20


class EmptyCatalog(FairCacheError):
    pass


class WelfareMode(enum.Enum):
    SCALED = "scaled"
    RAW = "raw"


def item_values(instance: BatchInstance, weights: Sequence[float], mode: WelfareMode) -> np.ndarray:
    """Per demand item, the weighted utility it contributes when covered."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (instance.n_tenants,):
        raise ValueError(f"expected {instance.n_tenants} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")
    comp = instance.compiled
    if mode is WelfareMode.SCALED:
        ustar = instance.max_utilities
        bad = (w > 0) & (ustar <= 0)
        if bad.any():
            tid = instance.tenant_ids[int(np.argmax(bad))]
            raise ZeroMaxUtility(f"tenant {tid!r} has zero standalone utility")
        w = np.divide(w, ustar, out=np.zeros_like(w), where=ustar > 0)
    return comp.coef @ w


def welfare(
    instance: BatchInstance,
    weights: Sequence[float],
    mode: WelfareMode = WelfareMode.SCALED,
    fixed: Iterable[str] = (),
) -> tuple[Configuration, float]:
    """Feasible configuration maximizing the weighted sum of tenant utilities.

    Ties go to the configuration with fewest views, then to the
    lexicographically smallest sorted view-id tuple.  Views in ``fixed`` are
    forced into the result and use up budget.
    """
    if not instance.candidate_views:
        raise EmptyCatalog("instance has no candidate views")
    vals = item_values(instance, weights, mode)
    comp = instance.compiled
    fixed_mask = comp.mask_of(fixed)
    mask, value = kernels.bb_welfare(comp.sizes, comp.budget, comp.masks, vals, fixed_mask)
    if comp.size_of(mask) > comp.budget:
        # only possible when the fixed views alone overflow the budget
        return Configuration.empty(), 0.0
    return instance.configuration_from_mask(mask), float(value)


def max_utility(instance: BatchInstance, tenant: str) -> float:
    """U_i*: the tenant's best raw utility with the whole cache to itself."""
    return float(instance.max_utilities[instance.tenant_index(tenant)])


def feasible_masks(instance: BatchInstance) -> np.ndarray:
    """Bit masks of every feasible view subset, in increasing mask order."""
    comp = instance.compiled
    n = len(comp.view_ids)
    if n > ENUMERATION_LIMIT:
        raise TooManyViews(f"{n} views exceed the enumeration limit of {ENUMERATION_LIMIT}")
    masks = np.arange(1 << n, dtype=np.uint64)
    total = np.zeros(1 << n, dtype=np.int64)
    for k in range(n):
        total += ((masks >> np.uint64(k)) & np.uint64(1)).astype(np.int64) * int(comp.sizes[k])
    return masks[total <= comp.budget]


def enumerate_configurations(instance: BatchInstance) -> list[Configuration]:
    """All feasible configurations (including the empty one), ordered by size then ids."""
    configs = [instance.configuration_from_mask(int(m)) for m in feasible_masks(instance)]
    return sorted(configs, key=lambda c: (len(c), c.view_ids))


def utility_table(instance: BatchInstance, masks: Iterable[int]) -> np.ndarray:
    """Raw utilities, shape (len(masks), N), for configurations given as masks."""
    comp = instance.compiled
    ms = np.asarray(list(masks), dtype=np.uint64)
    if comp.masks.size == 0 or ms.size == 0:
        return np.zeros((ms.size, instance.n_tenants))
    cover = (comp.masks[None, :] & ms[:, None]) == comp.masks[None, :]
    return cover.astype(float) @ comp.coef
