import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faircache.instances import majority_minority, matrix_instance, random_instance, spacebook
from faircache.model import BatchInstance, Tenant, TooManyViews, View
from faircache.welfare import (
    EmptyCatalog,
    WelfareMode,
    enumerate_configurations,
    max_utility,
    welfare,
)
from faircache.workload import sales_catalog

import oracles


def test_scenario3_budget1_weighted_raw():
    config, value = welfare(spacebook(1), [1, 1, 1.5], WelfareMode.RAW)
    assert config.view_ids == ("R",)
    assert value == 4


def test_scenario4_budget2_weighted_raw():
    config, value = welfare(spacebook(2), [1, 1, 1.5], WelfareMode.RAW)
    assert config.view_ids == ("R", "S")
    assert value == 7.5


def test_zero_budget_gives_empty_configuration():
    config, value = welfare(spacebook(0), [1, 1, 1], WelfareMode.RAW)
    assert config.view_ids == () and value == 0


def test_empty_catalog_raises():
    inst = BatchInstance.build([Tenant("a")], [], 1, {})
    with pytest.raises(EmptyCatalog):
        welfare(inst, [1.0], WelfareMode.RAW)


def test_max_utility_of_minority_tenant():
    assert max_utility(majority_minority(3), "T3") == 1


def test_max_utility_of_idle_tenant_is_zero():
    inst = matrix_instance({"A": {"R": 1}, "B": {}})
    assert max_utility(inst, "B") == 0


def test_max_utility_single_big_sales_view():
    views = sales_catalog()
    big = views[0]
    assert big.size_bytes == 3_540 * 10**6
    utils = {"t": [((big.id,), float(big.size_bytes))] * 3 + [((views[1].id,), 0.0)]}
    inst = BatchInstance.build([Tenant("t")], views, 6 * 10**9, utils)
    assert max_utility(inst, "t") == 3 * big.size_bytes


def test_enumeration_examples():
    three = matrix_instance({"A": {"R": 1, "S": 1, "P": 1}})
    assert [c.view_ids for c in enumerate_configurations(three)] == [(), ("P",), ("R",), ("S",)]
    assert len(enumerate_configurations(matrix_instance({"A": {"R": 1, "S": 1, "P": 1}}, budget=2))) == 7
    assert len(enumerate_configurations(matrix_instance({"A": {"R": 1, "S": 1, "P": 1}}, budget=3))) == 8


def test_enumeration_guard():
    views = [View(f"v{k:02d}", 1) for k in range(21)]
    inst = BatchInstance.build([Tenant("a")], views, 3, {"a": [(("v00",), 1.0)]})
    with pytest.raises(TooManyViews):
        enumerate_configurations(inst)


@pytest.mark.parametrize("seed", range(40))
def test_welfare_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(1, 5)), int(rng.integers(1, 11)), unit_sizes=bool(seed % 2))
    w = rng.random(inst.n_tenants)
    for scaled in (True, False):
        mode = WelfareMode.SCALED if scaled else WelfareMode.RAW
        config, value = welfare(inst, w, mode)
        ids, best = oracles.brute_welfare(inst, w, scaled)
        assert value == pytest.approx(best, rel=1e-10, abs=1e-10)
        assert config.view_ids == ids


def test_ties_prefer_fewer_views_then_smaller_ids():
    inst = matrix_instance({"A": {"R": 1, "S": 1}}, budget=2)
    config, value = welfare(inst, [1.0], WelfareMode.RAW)
    assert value == 2 and config.view_ids == ("R", "S")
    inst = matrix_instance({"A": {"R": 1}, "B": {"S": 1}}, budget=1)
    config, _ = welfare(inst, [1.0, 1.0], WelfareMode.RAW)
    assert config.view_ids == ("R",)


def test_fixed_views_are_kept():
    inst = spacebook(2)
    config, _ = welfare(inst, [1, 1, 1.5], WelfareMode.RAW, fixed=["P"])
    assert "P" in config.view_ids


instances = st.builds(
    lambda seed, n, v: random_instance(np.random.default_rng(seed), n, v),
    st.integers(0, 10_000),
    st.integers(1, 4),
    st.integers(1, 7),
)


@given(instances, st.integers(0, 100))
def test_welfare_monotone_in_budget(inst, extra):
    w = np.ones(inst.n_tenants)
    _, v0 = welfare(inst, w, WelfareMode.RAW)
    bigger = BatchInstance(
        inst.tenants, inst.candidate_views, inst.cache_budget_bytes + extra, inst.query_utilities
    )
    _, v1 = welfare(bigger, w, WelfareMode.RAW)
    assert v1 >= v0 - 1e-9


@given(instances, st.integers(0, 3), st.floats(0.0, 5.0))
def test_welfare_monotone_in_each_weight(inst, k, bump):
    w = np.ones(inst.n_tenants)
    _, v0 = welfare(inst, w, WelfareMode.SCALED)
    w2 = w.copy()
    w2[k % inst.n_tenants] += bump
    _, v1 = welfare(inst, w2, WelfareMode.SCALED)
    assert v1 >= v0 - 1e-9


@given(instances)
def test_scaled_value_at_most_weight_sum(inst):
    w = np.linspace(0.5, 2.0, inst.n_tenants)
    _, v = welfare(inst, w, WelfareMode.SCALED)
    assert v <= w.sum() + 1e-9
