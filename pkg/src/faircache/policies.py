"""Cache allocation policies behind one interface: ``plan(policy, instance, seed)``."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from faircache import kernels
from faircache.heuristics import (
    full_pool,
    lexicographic_mmf,
    pf_column_generation,
    pf_gradient,
    prune_configurations,
)
from faircache.model import Allocation, BatchInstance, Configuration
from faircache.mw import pf_exact, simple_mmf_mw
from faircache.welfare import WelfareMode, welfare

POLICY_NAMES = ("static", "rsd", "optp", "mmf", "mmf-mw", "fastpf", "exactpf")


@dataclass(frozen=True)
class Policy:
    """A policy name plus its tunables.

    ``pool`` is "pruned" (random welfare optima plus the SimpleMMF support) or
    "full" (every feasible configuration; small instances only).  ``m`` is
    the number of random weight vectors (default max(50, N^2)).
    """

    name: str
    eps: float = 0.1
    m: int | None = None
    pool: str = "pruned"
    pool_mmf_eps: float = 0.1
    tol: float = 1e-9
    max_iters: int = 10_000
    weighted: bool = True
    optp_weighted: bool = False
    rsd_exact_limit: int = 8
    rsd_samples: int = 10_000
    refine: bool = True

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; expected one of {', '.join(POLICY_NAMES)}")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.name == "exactpf" and not self.eps < 1 / 6:
            raise ValueError("exactpf needs eps < 1/6")
        if self.pool not in ("pruned", "full"):
            raise ValueError("pool must be 'pruned' or 'full'")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be at least 1")
        if self.rsd_exact_limit > 8:
            raise ValueError("exact RSD is limited to 8 tenants")
        if self.rsd_samples < 1:
            raise ValueError("rsd_samples must be positive")

    def with_(self, **changes) -> "Policy":
        return replace(self, **changes)


def excluded_tenants(instance: BatchInstance) -> tuple[str, ...]:
    """Tenants with zero standalone utility; fairness objectives ignore them."""
    return tuple(t for t, u in zip(instance.tenant_ids, instance.max_utilities) if u <= 0)


def _deterministic(instance: BatchInstance, mask: int) -> Allocation:
    return Allocation.deterministic(instance.configuration_from_mask(mask))


def static_plan(instance: BatchInstance) -> Allocation:
    """Each tenant fills its weight-proportional slice of the budget on its own;
    the cached set is the union of the slices' choices."""
    comp = instance.compiled
    lam = instance.weights
    total = lam.sum()
    union = 0
    for i in range(instance.n_tenants):
        share = int(math.floor(instance.cache_budget_bytes * lam[i] / total))
        vals = comp.coef[:, i]
        if comp.masks.size == 0 or not np.any(vals > 0):
            continue
        mask, value = kernels.bb_welfare(comp.sizes, share, comp.masks, vals, 0)
        if value > 0:
            union |= int(mask)
    return _deterministic(instance, union)


def _rsd_pick(comp, i: int, fixed: int) -> int:
    vals = comp.coef[:, i]
    if comp.masks.size == 0 or not np.any(vals > 0):
        return fixed
    mask, _ = kernels.bb_welfare(comp.sizes, comp.budget, comp.masks, vals, fixed)
    return int(mask)


def rsd_plan(instance: BatchInstance, seed=0, exact_limit: int = 8, samples: int = 10_000) -> Allocation:
    """Random serial dictatorship: in a random order each tenant adds its best
    views to what is already cached, within the remaining space.

    Up to ``exact_limit`` tenants the distribution over all orders is computed
    exactly; beyond that it is estimated from ``samples`` random orders.
    """
    comp = instance.compiled
    n = instance.n_tenants
    if n == 0:
        return Allocation.deterministic(Configuration.empty())
    if n <= exact_limit:
        memo: dict[tuple[frozenset, int], dict[int, float]] = {}

        def dist(remaining: frozenset, fixed: int) -> dict[int, float]:
            key = (remaining, fixed)
            if key in memo:
                return memo[key]
            if not remaining:
                out = {fixed: 1.0}
            else:
                out = {}
                share = 1.0 / len(remaining)
                for i in sorted(remaining):
                    sub = dist(remaining - {i}, _rsd_pick(comp, i, fixed))
                    for m, p in sub.items():
                        out[m] = out.get(m, 0.0) + share * p
            memo[key] = out
            return out

        d = dist(frozenset(range(n)), 0)
        return Allocation.from_pairs((instance.configuration_from_mask(m), p) for m, p in d.items())
    rng = np.random.default_rng(seed)
    counts: dict[int, int] = {}
    for _ in range(samples):
        fixed = 0
        for i in rng.permutation(n):
            fixed = _rsd_pick(comp, int(i), fixed)
        counts[fixed] = counts.get(fixed, 0) + 1
    return Allocation.from_pairs((instance.configuration_from_mask(m), c / samples) for m, c in counts.items())


def optp_plan(instance: BatchInstance, weighted: bool = False) -> Allocation:
    """Maximize total raw utility, as if every query belonged to one tenant."""
    if not instance.candidate_views:
        return Allocation.deterministic(Configuration.empty())
    w = instance.weights if weighted else np.ones(instance.n_tenants)
    config, _ = welfare(instance, w, WelfareMode.RAW)
    return Allocation.deterministic(config)


def _pool(policy: Policy, instance: BatchInstance, seed):
    if policy.pool == "full":
        return full_pool(instance)
    return prune_configurations(instance, policy.m, seed, mmf_eps=policy.pool_mmf_eps)


def plan(policy: Policy | str, instance: BatchInstance, seed=0) -> Allocation:
    """Allocation chosen by ``policy`` for one batch instance."""
    if isinstance(policy, str):
        policy = Policy(policy)
    if not instance.candidate_views:
        return Allocation.deterministic(Configuration.empty())
    if policy.name == "static":
        return static_plan(instance)
    if policy.name == "rsd":
        return rsd_plan(instance, seed, policy.rsd_exact_limit, policy.rsd_samples)
    if policy.name == "optp":
        return optp_plan(instance, policy.optp_weighted)

    # fairness objectives only see tenants that can benefit from the cache
    active = [t for t, u in zip(instance.tenant_ids, instance.max_utilities) if u > 0]
    if not active:
        return Allocation.deterministic(Configuration.empty())
    sub = instance.restrict(active) if len(active) < instance.n_tenants else instance
    if len(active) == 1:
        config, _ = welfare(sub, np.ones(1), WelfareMode.RAW)
        return Allocation.deterministic(config)

    if policy.name == "mmf":
        return lexicographic_mmf(_pool(policy, sub, seed), sub, weighted=policy.weighted)
    if policy.name == "mmf-mw":
        return simple_mmf_mw(sub, policy.eps, weighted=policy.weighted)
    if policy.name == "fastpf":
        return pf_gradient(_pool(policy, sub, seed), sub, tol=policy.tol, max_iters=policy.max_iters)
    if policy.name == "exactpf":
        result = pf_exact(sub, policy.eps)
        if not policy.refine:
            return result.allocation
        comp = sub.compiled
        start = [comp.mask_of(c.view_ids) for c in result.allocation.configurations]
        return pf_column_generation(sub, start)
    raise AssertionError(policy.name)
