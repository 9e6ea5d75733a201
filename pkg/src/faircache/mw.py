"""Multiplicative-weights solvers: generic AHK feasibility, max-min fairness
and additive-epsilon proportional fairness."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from faircache import kernels
from faircache.model import Allocation, BatchInstance, FairCacheError, ZeroMaxUtility

DEFAULT_MAX_CALLS = 10**6


class WidthViolation(FairCacheError):
    """An oracle answer had a slack larger than the declared width."""


class BudgetExceeded(FairCacheError):
    """The iteration count required by the guarantee exceeds the oracle-call cap."""


class InfeasibleQ(FairCacheError, ValueError):
    pass


def ahk_iterations(rho: float, r: int, delta: float) -> int:
    return max(1, math.ceil(4 * rho**2 * math.log(r) / delta**2))


def simple_mmf_iterations(n: int, eps: float) -> int:
    return math.ceil(4 * n**2 * math.log(n) / eps**2)


def pffeas_iterations(n: int, eps: float) -> int:
    # rho = 1 and delta = eps / N^2 in the generic count
    return ahk_iterations(1.0, n, eps / n**2)


@dataclass(frozen=True)
class OracleAnswer:
    point: Any
    slacks: Sequence[float]
    value: float
    dual_bound: float


@dataclass
class FeasibilityProblem:
    """Find x in P with a_i x >= b_i for all r constraints.

    ``oracle(y)`` maximizes y.(Ax) over P and reports the chosen point, the
    slacks a_i x - b_i, the attained value C(A, y) and y.b.
    """

    constraint_count: int
    width: float
    delta: float
    oracle: Callable[[np.ndarray], OracleAnswer]
    iterations: int | None = None
    max_calls: int = DEFAULT_MAX_CALLS
    trace_path: str | None = None

    def __post_init__(self):
        if self.constraint_count < 1:
            raise ValueError("need at least one constraint")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class AhkResult:
    feasible: bool
    points: list
    rounds: int

    def average(self):
        """Mean of the oracle points; points must support + and scalar /."""
        if not self.points:
            raise ValueError("no points collected")
        total = self.points[0]
        for p in self.points[1:]:
            total = total + p
        return total / len(self.points)


def ahk_feasibility(problem: FeasibilityProblem) -> AhkResult:
    r = problem.constraint_count
    rho = problem.width
    delta = problem.delta
    k = problem.iterations if problem.iterations is not None else ahk_iterations(rho, r, delta)
    if k > problem.max_calls:
        raise BudgetExceeded(f"{k} oracle calls needed, cap is {problem.max_calls}")
    y = np.full(r, 1.0 / r)
    points = []
    writer = None
    fh = None
    if problem.trace_path:
        fh = open(problem.trace_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["round"] + [f"y{i}" for i in range(r)] + ["value", "dual_bound"])
    try:
        for t in range(k):
            ans = problem.oracle(y.copy())
            if writer:
                writer.writerow([t] + [repr(float(v)) for v in y] + [repr(ans.value), repr(ans.dual_bound)])
            if ans.value - ans.dual_bound < -1e-12:
                return AhkResult(False, points, t)
            m = np.asarray(ans.slacks, dtype=float)
            if m.shape != (r,):
                raise ValueError(f"oracle returned {m.shape} slacks, expected ({r},)")
            if np.any(np.abs(m) > rho + 1e-9):
                raise WidthViolation(f"slack {float(m[np.argmax(np.abs(m))])} exceeds width {rho}")
            points.append(ans.point)
            for i in range(r):
                if m[i] >= 0:
                    y[i] *= (1 - delta) ** (m[i] / rho)
                else:
                    y[i] *= (1 + delta) ** (-m[i] / rho)
            y /= y.sum()
    finally:
        if fh:
            fh.close()
    return AhkResult(True, points, k)


def gamma_at(L: float, w: Sequence[float], n: int | None = None, lam=None, floors=None) -> list[float]:
    """Closed-form minimizer for a fixed multiplier L: clamp(L lam_i / w_i, floor_i, 1)."""
    w = [float(x) for x in w]
    n = n if n is not None else len(w)
    lam = [1.0] * len(w) if lam is None else [float(x) for x in lam]
    floors = [1.0 / n] * len(w) if floors is None else [float(x) for x in floors]
    return kernels._pykernels.gamma_at(float(L), w, lam, floors)


def gamma_subproblem(w: Sequence[float], Q: float, n: int | None = None, lam=None, floors=None) -> np.ndarray:
    """argmin sum w_i g_i  s.t.  sum lam_i log g_i >= Q,  floor_i <= g_i <= 1.

    Unweighted defaults: lam_i = 1 and floor_i = 1/n.
    """
    if Q > 0:
        raise InfeasibleQ(f"Q = {Q} > 0 cannot be met with every g_i <= 1")
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    n = n if n is not None else w.size
    lam = np.ones(w.size) if lam is None else np.asarray(lam, dtype=float)
    floors = np.full(w.size, 1.0 / n) if floors is None else np.asarray(floors, dtype=float)
    return np.array(kernels.gamma_solve(w, float(Q), lam, floors))


def _scaled_coef(instance: BatchInstance) -> np.ndarray:
    ustar = instance.max_utilities
    if np.any(ustar <= 0):
        tid = instance.tenant_ids[int(np.argmin(ustar))]
        raise ZeroMaxUtility(f"tenant {tid!r} has zero standalone utility")
    return instance.compiled.coef / ustar


def normalized_weights(instance: BatchInstance) -> np.ndarray:
    """Tenant weights rescaled to sum to N (all ones when unweighted)."""
    lam = instance.weights
    return lam * (len(lam) / lam.sum())


def _allocation_from_masks(instance: BatchInstance, masks: np.ndarray) -> Allocation:
    values, counts = np.unique(np.asarray(masks, dtype=np.uint64), return_counts=True)
    total = int(counts.sum())
    return Allocation.from_pairs(
        (instance.configuration_from_mask(int(m)), c / total) for m, c in zip(values, counts)
    )


def _best_single(instance: BatchInstance) -> Allocation:
    from faircache.welfare import WelfareMode, welfare

    config, _ = welfare(instance, np.ones(instance.n_tenants), WelfareMode.SCALED)
    return Allocation.deterministic(config)


def simple_mmf_mw(
    instance: BatchInstance,
    eps: float,
    weighted: bool = False,
    iterations: int | None = None,
    trace_path: str | None = None,
) -> Allocation:
    """Approximate max-min scaled utility by multiplicative weights over welfare calls.

    With ``weighted`` the target is min_i V_i / lam_i.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    coef = _scaled_coef(instance)
    n = instance.n_tenants
    if n == 1:
        return _best_single(instance)
    if weighted:
        lam = instance.weights
        coef = coef * (lam.min() / lam)
    t = iterations if iterations is not None else simple_mmf_iterations(n, eps)
    comp = instance.compiled
    trace = [] if trace_path else None
    if trace is not None:
        masks = kernels._pykernels.mmf_mw(comp.sizes, comp.budget, comp.masks, coef, eps, t, trace)
        with open(trace_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round"] + [f"w{i}" for i in range(n)] + ["configuration"])
            for rnd, wts, m in trace:
                w.writerow([rnd] + [repr(x) for x in wts] + [instance.configuration_from_mask(m).label()])
    else:
        masks = kernels.mmf_mw(comp.sizes, comp.budget, comp.masks, coef, eps, t)
    return _allocation_from_masks(instance, masks)


@dataclass(frozen=True)
class PfResult:
    allocation: Allocation
    objective: float
    q_star_estimate: float
    welfare_call_count: int
    feasibility_runs: int = 0


def log_objective(instance: BatchInstance, allocation: Allocation) -> float:
    """B(x) = sum_i lam_i log V_i(x) with weights normalized to sum to N."""
    from faircache.model import scaled_utilities

    v = scaled_utilities(instance, allocation)
    if np.any(~(v > 0)):
        return -math.inf
    return float(np.dot(normalized_weights(instance), np.log(v)))


def pffeas(instance: BatchInstance, Q: float, eps: float, max_calls: int = DEFAULT_MAX_CALLS):
    """One AHK run on the level set {B(x) >= Q}.

    Returns ``(feasible, masks, gamma_mean, rounds)``.  Constraints are
    V_i(x) >= g_i with x a distribution over configurations and g in
    {floor_i <= g_i <= 1, sum lam_i log g_i >= Q}; width 1, delta = eps/N^2.
    """
    coef = _scaled_coef(instance)
    n = instance.n_tenants
    lam = normalized_weights(instance)
    floors = instance.weights / instance.weights.sum()
    k = pffeas_iterations(n, eps)
    if k > max_calls:
        raise BudgetExceeded(f"{k} welfare calls per feasibility run exceed the cap of {max_calls}")
    comp = instance.compiled
    try:
        feasible, rounds, masks, gsum = kernels.pffeas_ahk(
            comp.sizes, comp.budget, comp.masks, coef, lam, floors, float(Q), eps / n**2, 1.0, k
        )
    except ValueError as exc:  # the kernels report width violations this way
        raise WidthViolation(str(exc)) from None
    gmean = np.asarray(gsum) / rounds if feasible else None
    return feasible, masks, gmean, rounds


def pf_exact(instance: BatchInstance, eps: float, max_calls: int = DEFAULT_MAX_CALLS) -> PfResult:
    """Additive-eps proportional fairness by binary search over Q with AHK feasibility runs."""
    if not 0 < eps < 1 / 6:
        raise ValueError("eps must lie in (0, 1/6)")
    _scaled_coef(instance)
    n = instance.n_tenants
    if n == 1:
        alloc = _best_single(instance)
        return PfResult(alloc, 0.0, 0.0, 1, 0)
    lam = normalized_weights(instance)
    floors = instance.weights / instance.weights.sum()
    lo = float(np.dot(lam, np.log(floors)))
    hi = 0.0
    calls = 0
    runs = 0
    best = None
    while hi - lo >= eps / 2:
        mid = 0.5 * (lo + hi)
        feasible, masks, _, rounds = pffeas(instance, mid, eps, max_calls)
        calls += rounds + 1 if not feasible else rounds
        runs += 1
        if feasible:
            lo = mid
            alloc = _allocation_from_masks(instance, masks)
            b = log_objective(instance, alloc)
            if best is None or b > best[1]:
                best = (alloc, b)
        else:
            hi = mid
    if best is None:
        # every probe above the SI corner failed; the corner itself is always feasible
        feasible, masks, _, rounds = pffeas(instance, lo, eps, max_calls)
        calls += rounds
        runs += 1
        alloc = _allocation_from_masks(instance, masks)
        best = (alloc, log_objective(instance, alloc))
    return PfResult(best[0], best[1], lo, calls, runs)
