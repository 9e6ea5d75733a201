"""Brute-force checks of sharing incentive, Pareto efficiency and core
membership for small instances."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from faircache.lp import LinearProgram, LPInfeasible, lp_solve
from faircache.model import Allocation, BatchInstance, FairCacheError, ZeroMaxUtility
from faircache.welfare import feasible_masks, utility_table

DEFAULT_TOL = 1e-3
MAX_CORE_TENANTS = 6


class TooManyTenants(FairCacheError):
    pass


@dataclass
class AuditResult:
    passed: bool
    margins: dict = field(default_factory=dict)
    witness: Allocation | None = None
    coalition: tuple = ()
    improvement: float = 0.0

    def __bool__(self):
        return self.passed


def _audited(instance: BatchInstance) -> list[int]:
    idx = [i for i, u in enumerate(instance.max_utilities) if u > 0]
    if not idx:
        raise ZeroMaxUtility("no tenant has positive standalone utility")
    return idx


def _rates(instance: BatchInstance, allocation: Allocation) -> np.ndarray:
    ustar = instance.max_utilities
    raw = np.zeros(instance.n_tenants)
    for c, p in allocation.support:
        raw += p * instance.utility_vector(c)
    return np.divide(raw, ustar, out=np.zeros_like(raw), where=ustar > 0)


def _candidate_table(instance: BatchInstance):
    """Feasible configurations with their scaled utilities, keeping only
    those not weakly dominated by another (dominated ones never help an LP
    that maximizes utilities)."""
    masks = feasible_masks(instance)
    raw = utility_table(instance, masks)
    ustar = instance.max_utilities
    vals = np.divide(raw, ustar, out=np.zeros_like(raw), where=ustar > 0)
    keep = []
    seen = set()
    for s in range(len(masks)):
        key = tuple(vals[s])
        if key in seen:
            continue
        dominated = np.any(np.all(vals >= vals[s], axis=1) & np.any(vals > vals[s], axis=1))
        if not dominated:
            keep.append(s)
            seen.add(key)
    return [int(masks[s]) for s in keep], vals[keep]


def _improve(vals, members, target, floors, mass):
    """max V_target(y) s.t. V_i(y) >= floors_i for members, sum y <= mass."""
    n_cfg = vals.shape[0]
    lp = LinearProgram(vals[:, target])
    for i in members:
        lp.add(vals[:, i], ">=", floors[i])
    lp.add(np.ones(n_cfg), "<=", mass)
    try:
        return lp_solve(lp)
    except LPInfeasible:
        return None


def check_si(instance: BatchInstance, allocation: Allocation, tol: float = DEFAULT_TOL) -> AuditResult:
    """Every tenant's scaled utility reaches its share lam_i / sum(lam)."""
    idx = _audited(instance)
    lam = instance.weights[idx]
    floors = lam / lam.sum()
    v = _rates(instance, allocation)
    margins = {instance.tenant_ids[i]: float(v[i] - f) for i, f in zip(idx, floors)}
    return AuditResult(bool(all(m >= -tol for m in margins.values())), margins)


def _coalition_check(instance, allocation, tol, coalitions):
    idx = _audited(instance)
    masks, vals = _candidate_table(instance)
    v = _rates(instance, allocation)
    lam = instance.weights
    lam_total = lam[idx].sum()
    worst = AuditResult(True)
    for coalition in coalitions(idx):
        mass = lam[list(coalition)].sum() / lam_total
        for j in coalition:
            res = _improve(vals, coalition, j, v, mass)
            if res is None:
                continue
            best, y = res
            gain = best - v[j]
            if gain > worst.improvement:
                witness = Allocation.from_pairs(
                    (instance.configuration_from_mask(m), float(p)) for m, p in zip(masks, y) if p > 1e-12
                )
                worst = AuditResult(
                    bool(gain <= tol),
                    {instance.tenant_ids[j]: float(gain)},
                    witness,
                    tuple(instance.tenant_ids[i] for i in coalition),
                    float(gain),
                )
    return worst


def check_pe(instance: BatchInstance, allocation: Allocation, tol: float = DEFAULT_TOL) -> AuditResult:
    """No allocation raises one tenant by more than ``tol`` without lowering another."""
    return _coalition_check(instance, allocation, tol, lambda idx: [tuple(idx)])


def check_core(instance: BatchInstance, allocation: Allocation, tol: float = DEFAULT_TOL) -> AuditResult:
    """No coalition, using only its pooled share of allocation mass, can match
    every member's utility and raise one member's by more than ``tol``."""
    idx = _audited(instance)
    if len(idx) > MAX_CORE_TENANTS:
        raise TooManyTenants(f"core audit supports at most {MAX_CORE_TENANTS} tenants")

    def coalitions(idx):
        for k in range(1, len(idx) + 1):
            yield from itertools.combinations(idx, k)

    return _coalition_check(instance, allocation, tol, coalitions)
