"""Synthetic multi-tenant query traces: Poisson arrivals, Zipf-ranked
dataset access with optional cold windows, Sales and TPC-H-like catalogs."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from faircache.model import Query, View

GB = 10**9
MB = 10**6
DEFAULT_BUDGET = 6 * GB

# rank of Sales dataset j (1-based) is RANKS[name][j - 1]
RANKS = {
    "g1": (30, 29, 28, 8, 27, 26, 25, 1, 24, 23, 22, 7, 21, 20, 19, 6, 18, 17, 16, 5, 3, 14, 15, 4, 12, 11, 10, 13, 9, 2),
    "g2": (30, 29, 7, 28, 27, 26, 1, 25, 24, 23, 6, 22, 21, 20, 5, 19, 18, 17, 4, 16, 15, 14, 3, 13, 12, 11, 2, 10, 9, 8),
    "g3": (30, 7, 29, 28, 27, 1, 26, 25, 24, 6, 23, 22, 21, 5, 20, 19, 18, 4, 17, 16, 15, 3, 14, 13, 12, 2, 11, 10, 9, 8),
    "g4": (8, 30, 29, 28, 1, 27, 26, 25, 7, 24, 23, 22, 6, 21, 20, 19, 5, 18, 17, 16, 4, 15, 14, 13, 3, 12, 11, 10, 2, 9),
}

TPCH_TABLE_BYTES = {
    "lineitem": 3_800 * MB,
    "orders": 570 * MB,
    "partsupp": 380 * MB,
    "part": 190 * MB,
    "customer": 190 * MB,
    "supplier": 190 * MB,
}

# tables each benchmark query scans (the two tiny dimension tables are left out)
TPCH_TEMPLATES = {
    "Q1": ("lineitem",),
    "Q3": ("customer", "orders", "lineitem"),
    "Q4": ("orders", "lineitem"),
    "Q5": ("customer", "orders", "lineitem", "supplier"),
    "Q6": ("lineitem",),
    "Q7": ("supplier", "lineitem", "orders", "customer"),
    "Q8": ("part", "supplier", "lineitem", "orders", "customer"),
    "Q9": ("part", "supplier", "lineitem", "partsupp", "orders"),
    "Q10": ("customer", "orders", "lineitem"),
    "Q12": ("orders", "lineitem"),
    "Q14": ("lineitem", "part"),
    "Q15": ("lineitem", "supplier"),
    "Q17": ("lineitem", "part"),
    "Q18": ("customer", "orders", "lineitem"),
    "Q19": ("lineitem", "part"),
}


@dataclass(frozen=True)
class Dataset:
    """What one query reads: a name and the views it requires."""

    name: str
    view_ids: tuple[str, ...]


@dataclass(frozen=True)
class Catalog:
    views: tuple[View, ...]
    sales: tuple[Dataset, ...] = ()
    tpch: tuple[Dataset, ...] = ()

    def view_sizes(self) -> dict[str, int]:
        return {v.id: v.size_bytes for v in self.views}

    def bytes_read(self, dataset: Dataset) -> int:
        sizes = self.view_sizes()
        return sum(sizes[v] for v in dataset.view_ids)


def sales_catalog() -> list[View]:
    """30 views; view i (1-based) is 0.118 * (31 - i) GB, kept in whole MB."""
    return [View(f"sales_{i:02d}", 118 * (31 - i) * MB, f"Sales view {i}") for i in range(1, 31)]


def tpch_catalog() -> tuple[list[View], dict[str, tuple[str, ...]]]:
    """Table views and the 15 query templates (template -> required view ids)."""
    views = [View(f"tpch_{t}", b, t) for t, b in TPCH_TABLE_BYTES.items()]
    templates = {q: tuple(f"tpch_{t}" for t in tables) for q, tables in TPCH_TEMPLATES.items()}
    return views, templates


def combined_catalog() -> Catalog:
    sales = sales_catalog()
    tviews, templates = tpch_catalog()
    return Catalog(
        tuple(tviews + sales),
        tuple(Dataset(v.id, (v.id,)) for v in sales),
        tuple(Dataset(q, vs) for q, vs in templates.items()),
    )


def zipf_pmf(n: int, exponent: float) -> np.ndarray:
    """P(rank r) = r^-s / H_{n,s} for r = 1..n."""
    if exponent <= 0:
        raise ValueError("Zipf exponent must be positive")
    if n < 1:
        raise ValueError("need at least one rank")
    w = np.arange(1, n + 1, dtype=float) ** -exponent
    return w / w.sum()


def _check_ranks(ranks: Sequence[int], n: int) -> tuple[int, ...]:
    ranks = tuple(int(r) for r in ranks)
    if sorted(ranks) != list(range(1, n + 1)):
        raise ValueError(f"ranks must be a permutation of 1..{n}")
    return ranks


def zipf_sample(n: int, exponent: float, ranks: Sequence[int] | None, rng: np.random.Generator) -> int:
    """Draw a dataset index (0-based); dataset j has rank ``ranks[j]``."""
    ranks = _check_ranks(ranks if ranks is not None else range(1, n + 1), n)
    r = int(rng.choice(n, p=zipf_pmf(n, exponent))) + 1
    return ranks.index(r)


@dataclass(frozen=True)
class ColdWindows:
    """Local re-access windows: length ~ Normal(mean_s, std_s), ``k`` candidates
    drawn from the global distribution, uniform choice within the window."""

    mean_s: float = 120.0
    std_s: float = 30.0
    k: int = 3

    def __post_init__(self):
        if not self.mean_s > 0 or self.std_s < 0 or self.k < 1:
            raise ValueError("cold windows need mean_s > 0, std_s >= 0 and k >= 1")


@dataclass(frozen=True)
class AccessDistribution:
    """``kind`` is "zipf" (over Sales datasets, ranked by ``ranks``) or
    "uniform" (over TPC-H templates)."""

    kind: str = "zipf"
    exponent: float = 1.0
    ranks: tuple[int, ...] = RANKS["g1"]
    cold: ColdWindows | None = None

    def __post_init__(self):
        if self.kind not in ("zipf", "uniform"):
            raise ValueError(f"unknown access distribution {self.kind!r}")
        if self.kind == "zipf":
            if self.exponent <= 0:
                raise ValueError("Zipf exponent must be positive")
            object.__setattr__(self, "ranks", _check_ranks(self.ranks, len(self.ranks)))

    @classmethod
    def named(cls, name: str, cold: ColdWindows | None = None) -> "AccessDistribution":
        if name == "h1":
            return cls("uniform", cold=cold)
        if name in RANKS:
            return cls("zipf", 1.0, RANKS[name], cold)
        raise ValueError(f"unknown distribution name {name!r}")

    def datasets(self, catalog: Catalog) -> tuple[Dataset, ...]:
        return catalog.tpch if self.kind == "uniform" else catalog.sales

    def pmf(self, catalog: Catalog) -> np.ndarray:
        """Probability of each dataset, in catalog order."""
        ds = self.datasets(catalog)
        if self.kind == "uniform":
            return np.full(len(ds), 1.0 / len(ds))
        if len(self.ranks) != len(ds):
            raise ValueError(f"{len(self.ranks)} ranks for {len(ds)} datasets")
        by_rank = zipf_pmf(len(ds), self.exponent)
        return np.array([by_rank[r - 1] for r in self.ranks])


@dataclass(frozen=True)
class TenantSpec:
    id: str
    access: AccessDistribution
    mean_interarrival_s: float = 20.0
    weight: float = 1.0

    def __post_init__(self):
        if not self.mean_interarrival_s > 0:
            raise ValueError("mean inter-arrival time must be positive")
        if not self.weight > 0:
            raise ValueError("tenant weight must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    tenants: tuple[TenantSpec, ...]
    batch_seconds: float = 40.0
    batch_count: int = 30
    cache_budget_bytes: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not self.tenants:
            raise ValueError("a scenario needs at least one tenant")
        if len({t.id for t in self.tenants}) != len(self.tenants):
            raise ValueError("tenant ids must be unique")
        if not self.batch_seconds > 0 or self.batch_count < 1:
            raise ValueError("batch_seconds and batch_count must be positive")
        if self.cache_budget_bytes < 0:
            raise ValueError("cache budget must be non-negative")

    @property
    def horizon_s(self) -> float:
        return self.batch_seconds * self.batch_count

    def catalog(self) -> Catalog:
        return combined_catalog()


def _tenant_arrivals(spec: TenantSpec, catalog: Catalog, horizon: float, rng: np.random.Generator):
    datasets = spec.access.datasets(catalog)
    pmf = spec.access.pmf(catalog)
    cold = spec.access.cold
    n = len(datasets)
    out = []
    t = 0.0
    window_end = -math.inf
    candidates: list[int] = []
    while True:
        t += float(rng.exponential(spec.mean_interarrival_s))
        if t >= horizon:
            break
        if cold is None:
            j = int(rng.choice(n, p=pmf))
        else:
            if t >= window_end:
                length = float(rng.normal(cold.mean_s, cold.std_s))
                window_end = t + max(length, 1.0)
                candidates = [int(c) for c in rng.choice(n, size=cold.k, p=pmf)]
            j = candidates[int(rng.integers(len(candidates)))]
        out.append((t, datasets[j]))
    return out


def generate_trace(spec: ScenarioSpec, seed: int) -> list[Query]:
    """All queries of the scenario, sorted by arrival time; ids number them in that order."""
    catalog = spec.catalog()
    raw = []
    for k, tenant in enumerate(spec.tenants):
        rng = np.random.default_rng([int(seed), k])
        for t, ds in _tenant_arrivals(tenant, catalog, spec.horizon_s, rng):
            raw.append((t, k, ds))
    raw.sort(key=lambda r: (r[0], r[1]))
    return [
        Query(qid, spec.tenants[k].id, t, ds.view_ids, catalog.bytes_read(ds)) for qid, (t, k, ds) in enumerate(raw)
    ]


TRACE_HEADER = ("arrival_time_s", "tenant_id", "view_ids", "bytes_read")


def trace_to_csv(queries: Sequence[Query]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for q in queries:
        w.writerow((repr(float(q.arrival_time)), q.tenant_id, ";".join(q.required_views), q.bytes_read))
    return buf.getvalue()


def trace_from_csv(text: str) -> list[Query]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"trace header must be {','.join(TRACE_HEADER)}")
    out = []
    for k, row in enumerate(rows[1:]):
        if len(row) != 4:
            raise ValueError(f"trace line {k + 2}: expected 4 fields, got {len(row)}")
        out.append(Query(k, row[1], float(row[0]), tuple(row[2].split(";")), int(row[3])))
    return out


# ---------------------------------------------------------------- presets


def _uniform_setup(name, dists, mean=20.0, batch=40.0, batches=30, cold=None):
    tenants = tuple(
        TenantSpec(f"tenant{k + 1}", AccessDistribution.named(d, cold), mean) for k, d in enumerate(dists)
    )
    return ScenarioSpec(name, tenants, batch, batches)


MIXED_SETUPS = {
    "G1": ("h1", "h1", "h1", "h1"),
    "G2": ("h1", "h1", "h1", "g1"),
    "G3": ("h1", "h1", "g1", "g2"),
    "G4": ("h1", "g1", "g2", "g3"),
}
SALES_SETUPS = {
    "G1": ("g1", "g1", "g1", "g1"),
    "G2": ("g1", "g1", "g1", "g2"),
    "G3": ("g1", "g1", "g2", "g3"),
    "G4": ("g1", "g2", "g3", "g4"),
}
ARRIVAL_SETUPS = {"low": (12.0, 12.0), "mid": (18.0, 8.0), "high": (24.0, 6.0)}
TENANT_COUNT_MEANS = {2: 10.0, 4: 20.0, 8: 40.0}


def preset(name: str, batch_count: int | None = None) -> ScenarioSpec:
    """Named setups: mixed-G1..G4, sales-G1..G4, arrival-low/mid/high, tenants-2/4/8."""
    kind, _, key = name.partition("-")
    if kind == "mixed" and key in MIXED_SETUPS:
        spec = _uniform_setup(name, MIXED_SETUPS[key])
    elif kind == "sales" and key in SALES_SETUPS:
        spec = _uniform_setup(name, SALES_SETUPS[key])
    elif kind == "arrival" and key in ARRIVAL_SETUPS:
        m1, m2 = ARRIVAL_SETUPS[key]
        tenants = (
            TenantSpec("tenant1", AccessDistribution.named("g1"), m1),
            TenantSpec("tenant2", AccessDistribution.named("g2"), m2),
        )
        spec = ScenarioSpec(name, tenants, 72.0, 30)
    elif kind == "tenants" and key.isdigit() and int(key) in TENANT_COUNT_MEANS:
        n = int(key)
        spec = _uniform_setup(name, ["g1"] * n, TENANT_COUNT_MEANS[n])
    else:
        raise ValueError(f"unknown preset {name!r}")
    if batch_count is not None:
        spec = ScenarioSpec(spec.name, spec.tenants, spec.batch_seconds, batch_count, spec.cache_budget_bytes)
    return spec


PRESET_NAMES = (
    [f"mixed-{k}" for k in MIXED_SETUPS]
    + [f"sales-{k}" for k in SALES_SETUPS]
    + [f"arrival-{k}" for k in ARRIVAL_SETUPS]
    + [f"tenants-{n}" for n in TENANT_COUNT_MEANS]
)
