"""Batch-by-batch simulation of a shared cache under a planning policy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from faircache.model import (
    Allocation,
    BatchInstance,
    Configuration,
    Query,
    Tenant,
    sample_configuration,
)
from faircache.policies import Policy, excluded_tenants, plan
from faircache.workload import ScenarioSpec, generate_trace

# keeps the planning stream apart from the per-tenant trace streams
_PLAN_STREAM = 1_000_003


@dataclass(frozen=True)
class TimeModel:
    fixed_overhead_s: float = 0.5
    disk_bandwidth_bytes_per_s: float = 500e6
    cache_bandwidth_bytes_per_s: float = 10e9
    cache_load_charged: bool = True

    def __post_init__(self):
        if not self.fixed_overhead_s >= 0:
            raise ValueError("fixed overhead must be non-negative")
        if not self.disk_bandwidth_bytes_per_s > 0:
            raise ValueError("disk bandwidth must be positive")
        if not self.cache_bandwidth_bytes_per_s > self.disk_bandwidth_bytes_per_s:
            raise ValueError("cache bandwidth must exceed disk bandwidth")

    def query_runtime(self, bytes_read: int, hit: bool) -> float:
        bw = self.cache_bandwidth_bytes_per_s if hit else self.disk_bandwidth_bytes_per_s
        return self.fixed_overhead_s + bytes_read / bw

    def load_time(self, new_bytes: int) -> float:
        return new_bytes / self.disk_bandwidth_bytes_per_s if self.cache_load_charged else 0.0


@dataclass(frozen=True)
class SimOptions:
    """``stateful`` boosts queries whose views are all still cached by ``gamma``."""

    stateful: bool = False
    gamma: float = 2.0

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be at least 1")

    @property
    def boost(self) -> float:
        return self.gamma if self.stateful else 1.0


@dataclass(frozen=True)
class QueryRecord:
    query_id: int
    tenant: str
    batch: int
    hit: bool
    runtime_s: float
    bytes_read: int


@dataclass(frozen=True)
class BatchRecord:
    index: int
    configuration: Configuration
    cached_bytes: int
    load_time_s: float
    makespan_s: float
    queries: tuple[QueryRecord, ...]
    excluded: tuple[str, ...] = ()


@dataclass
class SimResult:
    scenario: str
    policy: str
    seed: int
    cache_budget_bytes: int
    tenant_ids: tuple[str, ...]
    weights: tuple[float, ...]
    batches: list[BatchRecord] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def query_count(self) -> int:
        return sum(len(b.queries) for b in self.batches)

    def queries(self) -> list[QueryRecord]:
        return [q for b in self.batches for q in b.queries]


def _batch_instance(spec, queries_by_tenant, cache: frozenset, boost: float) -> BatchInstance:
    catalog = {v.id: v for v in spec.catalog().views}
    requested = sorted({v for qs in queries_by_tenant.values() for q in qs for v in q.required_views})
    tenants = [Tenant(t.id, t.weight) for t in spec.tenants]
    utils = {
        t.id: [(q.required_views, float(q.bytes_read)) for q in queries_by_tenant.get(t.id, ())] for t in spec.tenants
    }
    return BatchInstance.build(
        tenants, [catalog[v] for v in requested], spec.cache_budget_bytes, utils, boost, cache
    )


def run(
    spec: ScenarioSpec,
    policy: Policy | str,
    time_model: TimeModel | None = None,
    options: SimOptions | None = None,
    seed: int = 0,
    trace: Sequence[Query] | None = None,
) -> SimResult:
    """Simulate every batch window of ``spec``: plan, sample a configuration,
    load it, run the batch's queries."""
    policy = Policy(policy) if isinstance(policy, str) else policy
    time_model = time_model or TimeModel()
    options = options or SimOptions()
    trace = list(trace) if trace is not None else generate_trace(spec, seed)
    known = {t.id for t in spec.tenants}
    for q in trace:
        if q.tenant_id not in known:
            raise ValueError(f"trace query {q.query_id} belongs to unknown tenant {q.tenant_id!r}")
    sizes = {v.id: v.size_bytes for v in spec.catalog().views}
    rng = np.random.default_rng([int(seed), _PLAN_STREAM])
    result = SimResult(
        spec.name,
        policy.name,
        int(seed),
        spec.cache_budget_bytes,
        tuple(t.id for t in spec.tenants),
        tuple(float(t.weight) for t in spec.tenants),
    )
    cache: frozenset = frozenset()
    width = spec.batch_seconds
    by_batch: dict[int, list[Query]] = {}
    for q in trace:
        k = int(q.arrival_time // width)
        if 0 <= k < spec.batch_count:
            by_batch.setdefault(k, []).append(q)

    for k in range(spec.batch_count):
        qs = by_batch.get(k, [])
        if not qs:
            config = Configuration(tuple(sorted(cache)), sum(sizes[v] for v in cache))
            result.batches.append(BatchRecord(k, config, config.total_size_bytes, 0.0, 0.0, ()))
            result.wall_time_s += width
            continue
        per_tenant: dict[str, list[Query]] = {}
        for q in qs:
            per_tenant.setdefault(q.tenant_id, []).append(q)
        instance = _batch_instance(spec, per_tenant, cache, options.boost)
        plan_seed = int(rng.integers(2**32))
        alloc = plan(policy, instance, plan_seed)
        if abs(alloc.total_mass - 1.0) > 1e-12:
            alloc = alloc.normalized()
        config = sample_configuration(alloc, rng)
        new_bytes = sum(sizes[v] for v in config.view_ids if v not in cache)
        load = time_model.load_time(new_bytes)
        cache = frozenset(config.view_ids)
        records = []
        busy = {t: 0.0 for t in per_tenant}
        for q in qs:
            hit = all(v in cache for v in q.required_views)
            rt = time_model.query_runtime(q.bytes_read, hit)
            busy[q.tenant_id] += rt
            records.append(QueryRecord(q.query_id, q.tenant_id, k, hit, rt, q.bytes_read))
        makespan = max(busy.values()) + load
        result.batches.append(
            BatchRecord(k, config, config.total_size_bytes, load, makespan, tuple(records), excluded_tenants(instance))
        )
        result.wall_time_s += makespan
    return result


def paired_baseline(
    spec: ScenarioSpec,
    time_model: TimeModel | None = None,
    seed: int = 0,
    trace: Sequence[Query] | None = None,
) -> SimResult:
    """The statically partitioned cache on the same trace, for speedups."""
    return run(spec, Policy("static"), time_model, SimOptions(), seed, trace)
