import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faircache.instances import heavy_hitter, majority_minority, random_instance, spacebook
from faircache.model import (
    Allocation,
    Batch,
    BatchInstance,
    Configuration,
    InfeasibleConfiguration,
    Query,
    Tenant,
    UnknownTenant,
    UnnormalizedAllocation,
    View,
    ZeroMaxUtility,
    expected_utility,
    sample_configuration,
    scaled_utilities,
    scaled_utility,
    utility,
)

import oracles


def half_half(inst, a="R", b="S"):
    return Allocation.from_pairs([(inst.configuration([a]), 0.5), (inst.configuration([b]), 0.5)])


# ---------------------------------------------------------------- value types


def test_view_rejects_nonpositive_size():
    with pytest.raises(ValueError):
        View("v", 0)


def test_tenant_rejects_nonpositive_weight():
    with pytest.raises(ValueError):
        Tenant("t", 0.0)


def test_query_needs_views_and_bytes():
    with pytest.raises(ValueError):
        Query(0, "t", 0.0, (), 10)
    with pytest.raises(ValueError):
        Query(0, "t", 0.0, ("v",), 0)


def test_batch_window_contains_its_queries():
    q = Query(0, "t", 5.0, ("v",), 1)
    assert Batch(0, 0.0, 10.0, {"t": (q,)}).query_count == 1
    with pytest.raises(ValueError):
        Batch(1, 10.0, 20.0, {"t": (q,)})
    with pytest.raises(ValueError):
        Batch(2, 5.0, 5.0, {})


def test_instance_rejects_unknown_views_and_tenants():
    with pytest.raises(ValueError):
        BatchInstance.build([Tenant("a")], [View("R", 1)], 1, {"a": [(("X",), 1.0)]})
    with pytest.raises(UnknownTenant):
        BatchInstance.build([Tenant("a")], [View("R", 1)], 1, {"b": [(("R",), 1.0)]})


def test_allocation_support_is_canonical():
    inst = spacebook(2)
    r, s = inst.configuration(["R"]), inst.configuration(["S"])
    a = Allocation.from_pairs([(s, 0.25), (r, 0.5), (s, 0.25)])
    b = Allocation.from_pairs([(r, 0.5), (s, 0.5), (inst.configuration(["P"]), 0.0)])
    assert a == b
    assert a.total_mass == 1.0
    assert a.probability(["S"]) == 0.5


def test_allocation_rejects_excess_mass():
    inst = spacebook(2)
    with pytest.raises(ValueError):
        Allocation.from_pairs([(inst.configuration(["R"]), 0.7), (inst.configuration(["S"]), 0.7)])


def test_configuration_over_budget_is_rejected():
    with pytest.raises(InfeasibleConfiguration):
        spacebook(1).configuration(["R", "S"])


# ---------------------------------------------------------------- utility


def test_spacebook_utilities_of_r():
    inst = spacebook(1)
    r = inst.configuration(["R"])
    assert utility(inst, "Analyst", r) == 2
    assert utility(inst, "VP", r) == 0


def test_empty_configuration_gives_zero():
    inst = spacebook(2)
    assert all(utility(inst, t, Configuration.empty()) == 0 for t in inst.tenant_ids)


def test_unknown_tenant_raises():
    with pytest.raises(UnknownTenant):
        utility(spacebook(1), "nobody", Configuration.empty())


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("boost", [1.0, 2.0])
def test_utility_matches_per_query_summation(seed, boost):
    rng = np.random.default_rng(seed)
    base = random_instance(rng, 3, 4)
    cached = frozenset(v.id for v in base.candidate_views[:2])
    inst = BatchInstance(base.tenants, base.candidate_views, base.cache_budget_bytes, base.query_utilities, boost, cached)
    for ids in oracles.views_fitting(inst):
        config = inst.configuration(ids)
        for t in inst.tenant_ids:
            assert utility(inst, t, config) == pytest.approx(oracles.query_utility(inst, t, ids), abs=1e-12)


def test_boost_applies_only_when_every_view_is_cached():
    views = [View("A", 1), View("B", 1)]
    utils = {"t": [(("A",), 3.0), (("A", "B"), 5.0)]}
    inst = BatchInstance.build([Tenant("t")], views, 2, utils, boost_factor=2.0, cached_view_ids={"A"})
    assert utility(inst, "t", inst.configuration(["A", "B"])) == 2 * 3.0 + 5.0


# ---------------------------------------------------------------- scaled utility


def test_table4_half_half_gives_half_each():
    inst = majority_minority(3)
    x = half_half(inst)
    for t in inst.tenant_ids:
        assert scaled_utility(inst, t, x) == pytest.approx(0.5)


def test_table5_half_half():
    inst = heavy_hitter()
    x = half_half(inst)
    assert scaled_utility(inst, "A", x) == pytest.approx(0.5)
    assert scaled_utility(inst, "B", x) == pytest.approx(0.505)


def test_best_configuration_scales_to_one():
    inst = spacebook(1)
    best = Allocation.deterministic(inst.configuration(["P"]))
    assert scaled_utility(inst, "VP", best) == 1.0


def test_zero_max_utility_raises_and_is_nan_in_vectors():
    inst = BatchInstance.build([Tenant("a"), Tenant("b")], [View("R", 1)], 1, {"a": [(("R",), 1.0)]})
    x = Allocation.deterministic(inst.configuration(["R"]))
    with pytest.raises(ZeroMaxUtility):
        scaled_utility(inst, "b", x)
    v = scaled_utilities(inst, x)
    assert v[0] == 1.0 and math.isnan(v[1])


# ---------------------------------------------------------------- sampling


def test_singleton_support_always_sampled():
    inst = spacebook(1)
    x = Allocation.deterministic(inst.configuration(["S"]))
    assert {sample_configuration(x, s).view_ids for s in range(20)} == {("S",)}


def test_sampling_frequency_matches_probability():
    inst = majority_minority(3)
    x = half_half(inst)
    gen = np.random.default_rng(7)
    hits = sum(sample_configuration(x, gen).view_ids == ("R",) for _ in range(10_000))
    assert abs(hits / 10_000 - 0.5) <= 0.02


def test_sampling_is_reproducible():
    inst = majority_minority(3)
    x = half_half(inst)
    a = [sample_configuration(x, g).view_ids for g in [np.random.default_rng(3)] for _ in range(50)]
    b = [sample_configuration(x, g).view_ids for g in [np.random.default_rng(3)] for _ in range(50)]
    assert a == b


def test_sampling_requires_normalized_allocation():
    inst = majority_minority(3)
    x = Allocation.from_pairs([(inst.configuration(["R"]), 0.5)])
    with pytest.raises(UnnormalizedAllocation):
        sample_configuration(x, 0)


def test_sampling_frequencies_chi_square():
    from scipy.stats import chisquare

    inst = spacebook(1)
    probs = {"R": 0.2, "S": 0.3, "P": 0.5}
    x = Allocation.from_pairs([(inst.configuration([v]), p) for v, p in probs.items()])
    gen = np.random.default_rng(11)
    n = 20_000
    draws = [sample_configuration(x, gen).view_ids[0] for _ in range(n)]
    observed = [draws.count(v) for v in probs]
    assert chisquare(observed, [n * p for p in probs.values()]).pvalue > 1e-3


# ---------------------------------------------------------------- properties

instances = st.builds(
    lambda seed, n, v: random_instance(np.random.default_rng(seed), n, v),
    st.integers(0, 10_000),
    st.integers(1, 4),
    st.integers(1, 5),
)


@given(instances)
def test_utility_bounded_by_standalone_maximum(inst):
    ustar = inst.max_utilities
    for ids in oracles.views_fitting(inst):
        u = inst.utility_vector(inst.configuration(ids))
        assert np.all(u >= 0) and np.all(u <= ustar + 1e-9)


@given(instances)
def test_utility_is_monotone_in_the_view_set(inst):
    configs = oracles.views_fitting(inst)
    vecs = {c: inst.utility_vector(inst.configuration(c)) for c in configs}
    for a in configs:
        for b in configs:
            if set(a) <= set(b):
                assert np.all(vecs[a] <= vecs[b] + 1e-12)


@given(instances, st.floats(0.0, 1.0))
def test_expected_utility_is_linear_in_mixtures(inst, alpha):
    configs = oracles.views_fitting(inst)
    x = Allocation.deterministic(inst.configuration(configs[-1]))
    y = Allocation.deterministic(inst.configuration(configs[0]))
    mix = Allocation.from_pairs([(x.support[0][0], alpha), (y.support[0][0], 1 - alpha)])
    for t in inst.tenant_ids:
        lhs = expected_utility(inst, t, mix)
        rhs = alpha * expected_utility(inst, t, x) + (1 - alpha) * expected_utility(inst, t, y)
        assert lhs == pytest.approx(rhs, abs=1e-9)
