"""Throughput, fairness index, cache utilization, hit ratio and convergence."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from faircache.model import FairCacheError
from faircache.sim import SimResult

CONVERGENCE_STEP = 2
CONVERGENCE_TOL = 0.02


class ZeroDuration(FairCacheError):
    pass


class MisalignedBaseline(FairCacheError):
    pass


def throughput(result: SimResult) -> float:
    """Queries per minute of simulated wall time."""
    if result.query_count == 0 or result.wall_time_s <= 0:
        raise ZeroDuration("no queries were served")
    return 60.0 * result.query_count / result.wall_time_s


def jain_index(speedups: Sequence[float], weights: Sequence[float] | None = None) -> float:
    """(sum X_i/lam_i)^2 / (n * sum (X_i/lam_i)^2)."""
    x = np.asarray(speedups, dtype=float)
    lam = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    r = x / lam
    denom = r.size * float(np.dot(r, r))
    if denom <= 0:
        raise ValueError("speedups must not all be zero")
    return float(r.sum()) ** 2 / denom


def tenant_speedups(result: SimResult, baseline: SimResult, max_batch: int | None = None) -> dict[str, float]:
    """Mean over each tenant's queries of baseline runtime / policy runtime."""
    base = {q.query_id: q for q in baseline.queries()}
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for q in result.queries():
        if max_batch is not None and q.batch >= max_batch:
            continue
        b = base.get(q.query_id)
        if b is None or b.tenant != q.tenant:
            raise MisalignedBaseline(f"query {q.query_id} has no matching baseline record")
        sums[q.tenant] = sums.get(q.tenant, 0.0) + b.runtime_s / q.runtime_s
        counts[q.tenant] = counts.get(q.tenant, 0) + 1
    if max_batch is None and len(base) != result.query_count:
        raise MisalignedBaseline("baseline and run contain different queries")
    return {t: sums[t] / counts[t] for t in result.tenant_ids if t in counts}


def fairness_index(result: SimResult, baseline: SimResult, weights=None, max_batch: int | None = None) -> float:
    x = tenant_speedups(result, baseline, max_batch)
    lam = dict(zip(result.tenant_ids, result.weights if weights is None else weights))
    missing = [t for t in result.tenant_ids if t not in x]
    if missing and max_batch is None:
        warnings.warn(f"tenants without queries left out of the fairness index: {', '.join(missing)}")
    if not x:
        raise ZeroDuration("no queries to compare")
    return jain_index([x[t] for t in x], [lam[t] for t in x])


def avg_cache_utilization(result: SimResult) -> float:
    if not result.batches:
        raise ValueError("no batches")
    if result.cache_budget_bytes <= 0:
        return 0.0
    return float(np.mean([b.cached_bytes / result.cache_budget_bytes for b in result.batches]))


def hit_ratio(result: SimResult) -> float:
    qs = result.queries()
    if not qs:
        raise ValueError("no queries")
    return sum(q.hit for q in qs) / len(qs)


def convergence_series(result: SimResult, baseline: SimResult, step: int = CONVERGENCE_STEP) -> list[tuple[int, float]]:
    """Fairness index over the first b batches, for b = step, 2*step, ..."""
    out = []
    for b in range(step, len(result.batches) + 1, step):
        try:
            out.append((b, fairness_index(result, baseline, max_batch=b)))
        except ZeroDuration:
            continue
    if len(result.batches) % step:
        out.append((len(result.batches), fairness_index(result, baseline)))
    return out


def convergence_batches(series: Sequence[tuple[int, float]], tol: float = CONVERGENCE_TOL) -> int:
    """First prefix length after which every value stays within ``tol`` of the final one."""
    if not series:
        return 0
    final = series[-1][1]
    answer = series[-1][0]
    for b, v in reversed(series):
        if abs(v - final) > tol:
            break
        answer = b
    return answer


@dataclass
class MetricsReport:
    throughput_per_min: float
    fairness_index: float
    avg_cache_utilization: float
    hit_ratio: float
    speedups: dict = field(default_factory=dict)
    convergence: list = field(default_factory=list)
    convergence_batches: int = 0


def report(result: SimResult, baseline: SimResult) -> MetricsReport:
    series = convergence_series(result, baseline)
    return MetricsReport(
        throughput(result),
        fairness_index(result, baseline),
        avg_cache_utilization(result),
        hit_ratio(result),
        tenant_speedups(result, baseline),
        series,
        convergence_batches(series),
    )
