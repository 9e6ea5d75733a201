"""Solvers restricted to an explicit pool of configurations: pruning,
gradient-ascent proportional fairness and LP-based max-min fairness."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from faircache import kernels
from faircache.lp import LinearProgram, lp_solve
from faircache.model import Allocation, BatchInstance, Configuration, FairCacheError, ZeroMaxUtility
from faircache.mw import normalized_weights, simple_mmf_mw
from faircache.welfare import feasible_masks, utility_table

SATURATION_EPS = 1e-7
GOLDEN = (math.sqrt(5) - 1) / 2


class NoCoverage(FairCacheError):
    """Some tenant gets zero utility from every pooled configuration."""


@dataclass(frozen=True)
class ConfigurationPool:
    """Candidate configurations with their scaled utilities.

    ``values[s, i]`` is V_i of configuration ``s``; ``table`` is its N x |pool|
    transpose.
    """

    instance: BatchInstance
    masks: tuple[int, ...]
    values: np.ndarray

    @classmethod
    def from_masks(cls, instance: BatchInstance, masks) -> "ConfigurationPool":
        comp = instance.compiled
        uniq = sorted({int(m) for m in masks}, key=lambda m: (bin(m).count("1"), comp.views_of(m)))
        for m in uniq:
            if comp.size_of(m) > comp.budget:
                raise ValueError(f"pooled configuration {comp.views_of(m)} exceeds the budget")
        raw = utility_table(instance, uniq)
        ustar = instance.max_utilities
        if np.any(ustar <= 0):
            raise ZeroMaxUtility("pools need every tenant to have positive standalone utility")
        return cls(instance, tuple(uniq), raw / ustar)

    @property
    def configurations(self) -> list[Configuration]:
        return [self.instance.configuration_from_mask(m) for m in self.masks]

    @property
    def table(self) -> np.ndarray:
        return self.values.T

    def __len__(self) -> int:
        return len(self.masks)

    def allocation(self, x: np.ndarray, drop_below: float = 0.0) -> Allocation:
        return Allocation.from_pairs(
            (self.instance.configuration_from_mask(m), float(p))
            for m, p in zip(self.masks, x)
            if p > drop_below
        )


def unit_weight_vectors(n: int, count: int, seed) -> np.ndarray:
    """``count`` random unit vectors in the positive orthant of R^n."""
    rng = np.random.default_rng(seed)
    w = np.abs(rng.standard_normal((count, n)))
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return w / norms


def prune_configurations(
    instance: BatchInstance,
    m: int | None = None,
    seed=0,
    mmf_eps: float = 0.1,
    include_mmf: bool = True,
) -> ConfigurationPool:
    """Welfare optima for ``m`` random weight vectors, plus the SimpleMMF support."""
    n = instance.n_tenants
    m = max(50, n * n) if m is None else m
    if m < 1:
        raise ValueError("m must be at least 1")
    ustar = instance.max_utilities
    if np.any(ustar <= 0):
        raise ZeroMaxUtility("pools need every tenant to have positive standalone utility")
    comp = instance.compiled
    coef = comp.coef / ustar
    masks = []
    for w in unit_weight_vectors(n, m, seed):
        mask, _ = kernels.bb_welfare(comp.sizes, comp.budget, comp.masks, coef @ w, 0)
        masks.append(mask)
    if include_mmf and n > 1:
        alloc = simple_mmf_mw(instance, mmf_eps)
        masks.extend(comp.mask_of(c.view_ids) for c in alloc.configurations)
    return ConfigurationPool.from_masks(instance, masks)


def full_pool(instance: BatchInstance) -> ConfigurationPool:
    """Every feasible configuration (small instances only)."""
    return ConfigurationPool.from_masks(instance, feasible_masks(instance))


# ---------------------------------------------------------------- proportional fairness


def _pf_value(values: np.ndarray, lam: np.ndarray, x: np.ndarray) -> float:
    v = x @ values
    if np.any(v <= 0):
        return -math.inf
    return float(lam @ np.log(v)) - lam.sum() * float(x.sum())


def _pf_grad(values: np.ndarray, lam: np.ndarray, x: np.ndarray) -> np.ndarray:
    v = x @ values
    return values @ (lam / v) - lam.sum()


def kkt_residual(pool: ConfigurationPool, x: np.ndarray) -> float:
    """Largest violation of the optimality conditions of sum lam log V - N|x| at ``x``."""
    lam = normalized_weights(pool.instance)
    grad = _pf_grad(pool.values, lam, np.asarray(x, dtype=float))
    on = x > 0
    r_on = np.abs(grad[on]).max() if on.any() else 0.0
    r_off = max(0.0, grad[~on].max()) if (~on).any() else 0.0
    return float(max(r_on, r_off))


def _slope(values, lam, x, d):
    v = x @ values
    if np.any(v <= 0):
        return -math.inf
    return float((values @ (lam / v) - lam.sum()) @ d)


def _line_search(values, lam, x, d):
    """Maximize g along the projected path r -> max(x + r d, 0).

    The path is piecewise linear with a breakpoint wherever a coordinate hits
    zero, and g is concave on every piece.  Walk the pieces in order and stop
    at the first point where the directional derivative turns non-positive,
    locating it inside a piece by bisection on the derivative.
    """
    neg = np.flatnonzero(d < 0)
    hits = x[neg] / -d[neg]
    order = np.argsort(hits, kind="stable")
    breaks = [float(hits[k]) for k in order]
    r0 = 0.0
    dd = d.copy()
    k = 0
    while True:
        x0 = np.maximum(x + r0 * d, 0.0)
        # coordinates already clipped do not move along this piece
        while k < len(breaks) and breaks[k] <= r0:
            dd[neg[order[k]]] = 0.0
            k += 1
        if not np.any(dd) or _slope(values, lam, x0, dd) <= 0:
            return _clip(x, d, r0, breaks, neg, order)
        if k < len(breaks):
            r1 = breaks[k]
        else:
            # last piece is unbounded: double until the slope turns
            step = 1.0 / np.abs(dd).max()
            r1 = r0 + step
            while _slope(values, lam, x0 + (r1 - r0) * dd, dd) > 0:
                step *= 2
                r1 = r0 + step
                if step > 1e12:
                    raise FairCacheError("objective unbounded along the search direction")
        if _slope(values, lam, x0 + (r1 - r0) * dd, dd) > 0 and k < len(breaks):
            r0 = r1
            continue
        lo, hi = r0, r1
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _slope(values, lam, x0 + (mid - r0) * dd, dd) > 0:
                lo = mid
            else:
                hi = mid
        return _clip(x, d, lo, breaks, neg, order)


def _clip(x, d, r, breaks, neg, order):
    xn = np.maximum(x + r * d, 0.0)
    for k, b in enumerate(breaks):
        if b <= r:
            xn[neg[order[k]]] = 0.0
    return xn


def pf_gradient(
    pool: ConfigurationPool,
    instance: BatchInstance | None = None,
    tol: float = 1e-9,
    max_iters: int = 10_000,
    return_info: bool = False,
):
    """Proportional fairness over the pool by projected gradient ascent on
    sum_i lam_i log V_i(x) - N |x|, x >= 0.  The result is renormalized."""
    instance = instance or pool.instance
    values = pool.values
    if len(pool) == 0:
        raise ValueError("empty pool")
    uncovered = np.flatnonzero(values.max(axis=0) <= 0)
    if uncovered.size:
        raise NoCoverage(f"tenant {instance.tenant_ids[int(uncovered[0])]!r} has no pooled utility")
    lam = normalized_weights(instance)
    x = np.full(len(pool), 1.0 / len(pool))
    g = _pf_value(values, lam, x)
    history = [g]
    it = 0
    for it in range(1, max_iters + 1):
        d = _pf_grad(values, lam, x)
        d[(x <= 0) & (d < 0)] = 0.0
        if not np.any(d):
            break
        x_new = _line_search(values, lam, x, d)
        g_new = _pf_value(values, lam, x_new)
        if not g_new >= g:
            break
        history.append(g_new)
        change = abs(g_new - g)
        x, g = x_new, g_new
        if change < tol * max(1.0, abs(g)):
            break
    x = x / x.sum()
    alloc = pool.allocation(x)
    if return_info:
        return alloc, {"x": x, "iterations": it, "history": history, "kkt": kkt_residual(pool, x)}
    return alloc


def pf_column_generation(
    instance: BatchInstance,
    masks=(),
    tol: float = 1e-6,
    max_rounds: int = 200,
) -> Allocation:
    """Proportional fairness over all feasible configurations, using the welfare
    oracle to price columns.

    Solves over a working pool, then asks the oracle for the configuration
    maximizing sum_i lam_i V_i(S) / V_i(x); if that exceeds N the
    configuration enters the pool.  On exit no configuration anywhere
    violates the optimality conditions by more than ``tol``.
    """
    comp = instance.compiled
    ustar = instance.max_utilities
    if np.any(ustar <= 0):
        raise ZeroMaxUtility("every tenant needs positive standalone utility")
    coef = comp.coef / ustar
    lam = normalized_weights(instance)
    work = {int(m) for m in masks}
    # each tenant's own optimum guarantees coverage
    for i in range(instance.n_tenants):
        e = np.zeros(instance.n_tenants)
        e[i] = 1.0
        work.add(kernels.bb_welfare(comp.sizes, comp.budget, comp.masks, coef @ e, 0)[0])
    alloc = None
    for _ in range(max_rounds):
        pool = ConfigurationPool.from_masks(instance, work)
        alloc, info = pf_gradient(pool, instance, tol=1e-12, return_info=True)
        v = info["x"] @ pool.values
        price = lam / v
        mask, value = kernels.bb_welfare(comp.sizes, comp.budget, comp.masks, coef @ price, 0)
        if value <= lam.sum() + tol or int(mask) in work:
            break
        work.add(int(mask))
    return alloc


# ---------------------------------------------------------------- max-min fairness


def _rate_lp(pool: ConfigurationPool, floors: dict[int, float], active: list[int], coef_scale: np.ndarray):
    """max t  s.t.  r_i(x) >= t for active i, r_i(x) >= floor_i for frozen i, sum x <= 1."""
    n_cfg = len(pool)
    rates = pool.values * coef_scale  # n_cfg x N
    lp = LinearProgram(np.r_[np.zeros(n_cfg), 1.0])
    for i in active:
        lp.add(np.r_[rates[:, i], -1.0], ">=", 0.0)
    for i, f in floors.items():
        lp.add(np.r_[rates[:, i], 0.0], ">=", f)
    lp.add(np.r_[np.ones(n_cfg), 0.0], "<=", 1.0)
    return lp


def _weight_scale(instance: BatchInstance, weighted: bool) -> np.ndarray:
    if not weighted:
        return np.ones(instance.n_tenants)
    lam = instance.weights
    return lam.min() / lam


def simple_mmf_lp(pool: ConfigurationPool, instance: BatchInstance | None = None, weighted: bool = False):
    """max lambda s.t. V_i(x) >= lambda for all i, sum x <= 1, x >= 0.

    Returns ``(lambda, allocation)``; with ``weighted`` the rates are V_i / lam_i
    (rescaled by the smallest weight).
    """
    instance = instance or pool.instance
    if len(pool) == 0:
        raise ValueError("empty pool")
    scale = _weight_scale(instance, weighted)
    lp = _rate_lp(pool, {}, list(range(instance.n_tenants)), scale)
    value, sol = lp_solve(lp)
    return value, pool.allocation(sol[:-1], drop_below=1e-12)


def lexicographic_mmf(pool: ConfigurationPool, instance: BatchInstance | None = None, weighted: bool = False):
    """Lexicographically max-min allocation over the pool.

    Each round maximizes the common rate of the unsaturated tenants with the
    saturated ones pinned at their frozen rates, then re-solves per tenant to
    see whether its rate can exceed the round's optimum; tenants that cannot
    are frozen.  The result is normalized to mass 1.
    """
    instance = instance or pool.instance
    if len(pool) == 0:
        raise ValueError("empty pool")
    n = instance.n_tenants
    n_cfg = len(pool)
    scale = _weight_scale(instance, weighted)
    rates = pool.values * scale
    frozen: dict[int, float] = {}
    active = list(range(n))
    sol = None
    while active:
        t, sol = lp_solve(_rate_lp(pool, frozen, active, scale))
        newly = []
        for i in active:
            lp = LinearProgram(np.r_[rates[:, i], 0.0])
            for j in active:
                if j != i:
                    lp.add(np.r_[rates[:, j], 0.0], ">=", t)
            for j, f in frozen.items():
                lp.add(np.r_[rates[:, j], 0.0], ">=", f)
            lp.add(np.r_[np.ones(n_cfg), 0.0], "<=", 1.0)
            best, _ = lp_solve(lp)
            if best <= t + SATURATION_EPS:
                newly.append(i)
        if not newly:
            # numerical corner: freeze the tenant with the lowest rate so the loop ends
            x = sol[:-1]
            r = x @ rates
            newly = [min(active, key=lambda i: (r[i], i))]
        for i in newly:
            frozen[i] = t
        active = [i for i in active if i not in newly]
    # final solve: maximize total mass use with every tenant at its frozen rate
    x = np.maximum(sol[:-1], 0.0)
    if x.sum() <= 0:
        raise FairCacheError("max-min LP returned an empty allocation")
    x = x / x.sum()
    return pool.allocation(x, drop_below=1e-12)
