"""Domain types for a single batch allocation problem.

A batch instance holds the tenants, the candidate views, the cache budget
and, per tenant, the list of (required view set, utility) pairs derived from
the queries in the batch.  Everything here is immutable; the compiled
bit-mask form used by the solvers is cached on the instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_MASK_VIEWS = 64


class FairCacheError(Exception):
    """Base class for errors raised by this package."""


class UnknownTenant(FairCacheError, KeyError):
    pass


class ZeroMaxUtility(FairCacheError):
    """A tenant gets zero utility from every feasible configuration."""


class UnnormalizedAllocation(FairCacheError):
    pass


class InfeasibleConfiguration(FairCacheError):
    pass


class TooManyViews(FairCacheError):
    pass


@dataclass(frozen=True)
class View:
    id: str
    size_bytes: int
    label: str | None = None

    def __post_init__(self):
        if int(self.size_bytes) <= 0:
            raise ValueError(f"view {self.id!r}: size_bytes must be positive")


@dataclass(frozen=True)
class Tenant:
    id: str
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"tenant {self.id!r}: weight must be positive")


@dataclass(frozen=True)
class Query:
    query_id: int
    tenant_id: str
    arrival_time: float
    required_views: tuple[str, ...]
    bytes_read: int

    def __post_init__(self):
        if not self.required_views:
            raise ValueError("a query needs at least one view")
        if self.bytes_read <= 0:
            raise ValueError("bytes_read must be positive")


@dataclass(frozen=True)
class Batch:
    index: int
    window_start: float
    window_end: float
    queries_by_tenant: Mapping[str, tuple[Query, ...]]

    def __post_init__(self):
        if not self.window_end > self.window_start:
            raise ValueError("window_end must exceed window_start")
        for qs in self.queries_by_tenant.values():
            for q in qs:
                if not self.window_start <= q.arrival_time < self.window_end:
                    raise ValueError(f"query {q.query_id} arrives outside the batch window")

    @property
    def query_count(self) -> int:
        return sum(len(qs) for qs in self.queries_by_tenant.values())


@dataclass(frozen=True, order=True)
class Configuration:
    """A set of views cached together; ``view_ids`` is kept sorted."""

    view_ids: tuple[str, ...]
    total_size_bytes: int

    @classmethod
    def of(cls, views: Iterable[View]) -> "Configuration":
        vs = sorted(views, key=lambda v: v.id)
        return cls(tuple(v.id for v in vs), sum(v.size_bytes for v in vs))

    @classmethod
    def empty(cls) -> "Configuration":
        return cls((), 0)

    def __contains__(self, view_id) -> bool:
        return view_id in self.view_ids

    def __len__(self) -> int:
        return len(self.view_ids)

    def label(self) -> str:
        return "{" + ",".join(self.view_ids) + "}"


@dataclass(frozen=True)
class Allocation:
    """A (possibly sub-normalized) probability distribution over configurations.

    Construct through :meth:`from_pairs`, which merges duplicate configurations,
    drops zero masses and sorts the support so equal allocations compare equal.
    """

    support: tuple[tuple[Configuration, float], ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Configuration, float]]) -> "Allocation":
        merged: dict[Configuration, float] = {}
        for config, p in pairs:
            p = float(p)
            if p < 0:
                if p < -1e-12:
                    raise ValueError(f"negative probability {p}")
                p = 0.0
            merged[config] = merged.get(config, 0.0) + p
        support = tuple(sorted(((c, p) for c, p in merged.items() if p > 0), key=lambda cp: cp[0].view_ids))
        alloc = cls(support)
        if alloc.total_mass > 1 + 1e-9:
            raise ValueError(f"allocation mass {alloc.total_mass} exceeds 1")
        return alloc

    @classmethod
    def deterministic(cls, config: Configuration) -> "Allocation":
        return cls(((config, 1.0),))

    @property
    def total_mass(self) -> float:
        return math.fsum(p for _, p in self.support)

    @property
    def configurations(self) -> tuple[Configuration, ...]:
        return tuple(c for c, _ in self.support)

    def probability(self, config: Configuration | Iterable[str]) -> float:
        key = config.view_ids if isinstance(config, Configuration) else tuple(sorted(config))
        for c, p in self.support:
            if c.view_ids == key:
                return p
        return 0.0

    def normalized(self) -> "Allocation":
        mass = self.total_mass
        if mass <= 0:
            raise UnnormalizedAllocation("cannot normalize an allocation with zero mass")
        return Allocation.from_pairs((c, p / mass) for c, p in self.support)

    def as_dict(self) -> dict[str, float]:
        return {c.label(): p for c, p in self.support}


def sample_configuration(allocation: Allocation, rng: int | np.random.Generator) -> Configuration:
    """Draw one configuration; ``rng`` is a seed or a numpy Generator."""
    if abs(allocation.total_mass - 1.0) > 1e-9:
        raise UnnormalizedAllocation(f"allocation mass is {allocation.total_mass}, expected 1")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if len(allocation.support) == 1:
        # still consume one draw so the stream position does not depend on support size
        gen.random()
        return allocation.support[0][0]
    u = gen.random()
    acc = 0.0
    for config, p in allocation.support:
        acc += p
        if u < acc:
            return config
    return allocation.support[-1][0]


@dataclass(frozen=True)
class CompiledInstance:
    """Bit-mask form of an instance.

    Views are indexed in sorted-id order so that comparing sorted index tuples
    is the same as comparing sorted view-id tuples.  ``coef[j, i]`` is the
    (boosted) utility tenant ``i`` gets from demand item ``j`` once every view
    in ``masks[j]`` is cached.
    """

    view_ids: tuple[str, ...]
    sizes: np.ndarray
    budget: int
    masks: np.ndarray
    coef: np.ndarray

    def mask_of(self, view_ids: Iterable[str]) -> int:
        index = {v: k for k, v in enumerate(self.view_ids)}
        m = 0
        for v in view_ids:
            if v not in index:
                raise InfeasibleConfiguration(f"view {v!r} is not a candidate view")
            m |= 1 << index[v]
        return m

    def views_of(self, mask: int) -> tuple[str, ...]:
        return tuple(v for k, v in enumerate(self.view_ids) if mask >> k & 1)

    def size_of(self, mask: int) -> int:
        return int(sum(int(self.sizes[k]) for k in range(len(self.view_ids)) if mask >> k & 1))

    def covered(self, mask: int) -> np.ndarray:
        m = np.uint64(mask)
        return (self.masks & m) == self.masks


@dataclass(frozen=True)
class BatchInstance:
    tenants: tuple[Tenant, ...]
    candidate_views: tuple[View, ...]
    cache_budget_bytes: int
    query_utilities: Mapping[str, tuple[tuple[frozenset, float], ...]]
    boost_factor: float = 1.0
    cached_view_ids: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        ids = [t.id for t in self.tenants]
        if len(set(ids)) != len(ids):
            raise ValueError("tenant ids must be unique")
        vids = [v.id for v in self.candidate_views]
        if len(set(vids)) != len(vids):
            raise ValueError("view ids must be unique")
        if self.cache_budget_bytes < 0:
            raise ValueError("cache budget must be non-negative")
        if self.boost_factor < 1:
            raise ValueError("boost factor must be >= 1")
        known = set(vids)
        for tid, items in self.query_utilities.items():
            if tid not in ids:
                raise UnknownTenant(tid)
            for views, u in items:
                if u < 0:
                    raise ValueError("utility values must be non-negative")
                missing = set(views) - known
                if missing:
                    raise ValueError(f"query of tenant {tid!r} needs unknown views {sorted(missing)}")
        # keep ordering canonical so compiled forms are reproducible
        object.__setattr__(self, "candidate_views", tuple(sorted(self.candidate_views, key=lambda v: v.id)))
        object.__setattr__(self, "cached_view_ids", frozenset(self.cached_view_ids))

    @classmethod
    def build(
        cls,
        tenants: Sequence[Tenant],
        views: Sequence[View],
        budget: int,
        utilities: Mapping[str, Iterable[tuple[Iterable[str], float]]],
        boost_factor: float = 1.0,
        cached_view_ids: Iterable[str] = (),
    ) -> "BatchInstance":
        ids = {t.id for t in tenants}
        for tid in utilities:
            if tid not in ids:
                raise UnknownTenant(tid)
        qu = {t.id: tuple((frozenset(vs), float(u)) for vs, u in utilities.get(t.id, ())) for t in tenants}
        return cls(tuple(tenants), tuple(views), int(budget), qu, float(boost_factor), frozenset(cached_view_ids))

    @property
    def n_tenants(self) -> int:
        return len(self.tenants)

    @property
    def tenant_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tenants)

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.tenants], dtype=float)

    def tenant_index(self, tenant_id: str) -> int:
        for k, t in enumerate(self.tenants):
            if t.id == tenant_id:
                return k
        raise UnknownTenant(tenant_id)

    def view(self, view_id: str) -> View:
        for v in self.candidate_views:
            if v.id == view_id:
                return v
        raise KeyError(view_id)

    def effective_utility(self, views: frozenset, u: float) -> float:
        if self.boost_factor != 1.0 and views and views <= self.cached_view_ids:
            return u * self.boost_factor
        return u

    @cached_property
    def compiled(self) -> CompiledInstance:
        views = self.candidate_views
        if len(views) > MAX_MASK_VIEWS:
            raise TooManyViews(f"{len(views)} candidate views; at most {MAX_MASK_VIEWS} per batch are supported")
        view_ids = tuple(v.id for v in views)
        index = {v: k for k, v in enumerate(view_ids)}
        rows: dict[int, np.ndarray] = {}
        n = self.n_tenants
        for i, t in enumerate(self.tenants):
            for vs, u in self.query_utilities.get(t.id, ()):
                m = 0
                for v in vs:
                    m |= 1 << index[v]
                row = rows.setdefault(m, np.zeros(n))
                row[i] += self.effective_utility(vs, u)
        order = sorted(rows)
        masks = np.array(order, dtype=np.uint64)
        coef = np.array([rows[m] for m in order], dtype=float).reshape(len(order), n)
        sizes = np.array([v.size_bytes for v in views], dtype=np.int64)
        return CompiledInstance(view_ids, sizes, int(self.cache_budget_bytes), masks, coef)

    def configuration(self, view_ids: Iterable[str]) -> Configuration:
        vids = set(view_ids)
        views = [v for v in self.candidate_views if v.id in vids]
        if len(views) != len(vids):
            raise InfeasibleConfiguration(f"unknown views {sorted(vids - {v.id for v in views})}")
        config = Configuration.of(views)
        if config.total_size_bytes > self.cache_budget_bytes:
            raise InfeasibleConfiguration(f"{config.label()} exceeds the cache budget")
        return config

    def configuration_from_mask(self, mask: int) -> Configuration:
        comp = self.compiled
        return Configuration(comp.views_of(mask), comp.size_of(mask))

    def utility_vector(self, config: Configuration) -> np.ndarray:
        """Raw utilities U_i(S) for every tenant, in tenant order."""
        comp = self.compiled
        if config.total_size_bytes > self.cache_budget_bytes:
            raise InfeasibleConfiguration(f"{config.label()} exceeds the cache budget")
        cov = comp.covered(comp.mask_of(config.view_ids))
        return comp.coef[cov].sum(axis=0) if cov.any() else np.zeros(self.n_tenants)

    @cached_property
    def max_utilities(self) -> np.ndarray:
        """U_i* per tenant: the best utility each tenant could get alone."""
        from faircache.welfare import WelfareMode, welfare

        out = np.zeros(self.n_tenants)
        for i in range(self.n_tenants):
            w = np.zeros(self.n_tenants)
            w[i] = 1.0
            _, value = welfare(self, w, WelfareMode.RAW)
            out[i] = value
        return out

    def scaled_vector(self, config: Configuration) -> np.ndarray:
        ustar = self.max_utilities
        u = self.utility_vector(config)
        return np.divide(u, ustar, out=np.zeros_like(u), where=ustar > 0)

    def active_tenants(self) -> tuple[str, ...]:
        """Tenants with positive standalone utility; the others sit out fairness objectives."""
        return tuple(t.id for t, us in zip(self.tenants, self.max_utilities) if us > 0)

    def restrict(self, tenant_ids: Iterable[str]) -> "BatchInstance":
        keep = set(tenant_ids)
        tenants = tuple(t for t in self.tenants if t.id in keep)
        qu = {t.id: self.query_utilities.get(t.id, ()) for t in tenants}
        return BatchInstance(
            tenants, self.candidate_views, self.cache_budget_bytes, qu, self.boost_factor, self.cached_view_ids
        )


def utility(instance: BatchInstance, tenant: str, config: Configuration) -> float:
    """U_i(S): summed utility of the tenant's queries whose views are all in ``config``."""
    i = instance.tenant_index(tenant)
    return float(instance.utility_vector(config)[i])


def expected_utility(instance: BatchInstance, tenant: str, allocation: Allocation) -> float:
    i = instance.tenant_index(tenant)
    return math.fsum(p * instance.utility_vector(c)[i] for c, p in allocation.support)


def scaled_utility(instance: BatchInstance, tenant: str, allocation: Allocation) -> float:
    """V_i(x) = U_i(x) / U_i*."""
    i = instance.tenant_index(tenant)
    ustar = instance.max_utilities[i]
    if ustar <= 0:
        raise ZeroMaxUtility(f"tenant {tenant!r} has zero utility for every feasible configuration")
    return expected_utility(instance, tenant, allocation) / ustar


def scaled_utilities(instance: BatchInstance, allocation: Allocation) -> np.ndarray:
    """Vector of V_i(x) over tenants; tenants with U_i* = 0 get NaN."""
    ustar = instance.max_utilities
    total = np.zeros(instance.n_tenants)
    for c, p in allocation.support:
        total += p * instance.utility_vector(c)
    out = np.full(instance.n_tenants, np.nan)
    np.divide(total, ustar, out=out, where=ustar > 0)
    return out
