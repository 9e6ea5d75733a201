import csv
import io
import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faircache import config as cfgmod
from faircache.cli import main, sweep_configs
from faircache.workload import PRESET_NAMES


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- config


def test_defaults_are_complete():
    cfg = cfgmod.default()
    assert cfg["seed"] == 0
    assert cfg["scenario"]["preset"] == "mixed-G1"
    assert cfg["policy"]["name"] == "mmf"
    assert cfg["time_model"]["cache_load_charged"] is True
    assert cfgmod.scenario_spec(cfg).name == "mixed-G1"


overrides = st.fixed_dictionaries(
    {
        "seed": st.integers(0, 10_000),
        "scenario.preset": st.sampled_from(PRESET_NAMES),
        "scenario.batch_count": st.integers(1, 50),
        "policy.name": st.sampled_from(["static", "rsd", "optp", "mmf", "fastpf"]),
        "policy.eps": st.floats(0.01, 0.15),
        "time_model.disk_bandwidth_bytes_per_s": st.floats(1e6, 1e9),
        "options.stateful": st.booleans(),
        "output.per_query": st.booleans(),
    }
)


@settings(max_examples=40)
@given(overrides)
def test_serialization_round_trip(ov):
    cfg = cfgmod.apply_overrides(cfgmod.default(), list(ov.items()))
    assert cfgmod.parse(cfgmod.dumps(cfg)) == cfg


def test_custom_tenants_round_trip_and_build():
    doc = {
        "scenario": {
            "name": "custom",
            "tenants": [
                {"id": "a", "access": "h1"},
                {"id": "b", "access": {"kind": "zipf", "exponent": 1.2, "ranks": "g3", "cold": True}, "weight": 2},
            ],
        }
    }
    cfg = cfgmod.normalize(doc)
    assert cfgmod.parse(cfgmod.dumps(cfg)) == cfg
    spec = cfgmod.scenario_spec(cfg)
    assert [t.id for t in spec.tenants] == ["a", "b"]
    assert spec.tenants[1].access.cold.k == 3
    assert spec.tenants[1].weight == 2.0


def test_errors_carry_line_numbers():
    text = '{\n  "policy": {\n    "eps": 1.5\n  }\n}\n'
    with pytest.raises(cfgmod.ConfigError) as err:
        cfgmod.parse(text, "run.json")
    assert str(err.value).startswith("run.json:3:")
    assert "eps" in str(err.value)


def test_unknown_key_and_bad_type():
    with pytest.raises(cfgmod.ConfigError, match="bogus"):
        cfgmod.parse('{"policy": {"bogus": 1}}')
    with pytest.raises(cfgmod.ConfigError) as err:
        cfgmod.parse('{\n"seed": "x"\n}')
    assert err.value.line == 2


def test_malformed_json_reports_its_line():
    with pytest.raises(cfgmod.ConfigError) as err:
        cfgmod.parse('{\n  "seed": 1,\n  oops\n}')
    assert err.value.line == 3


def test_unknown_preset_and_sweep_axis():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse('{"scenario": {"preset": "mixed-G9"}}')
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse('{"sweep": {"axes": {"policy.nothing": [1]}}}')


def test_overrides_parse_json_values_and_revalidate():
    cfg = cfgmod.apply_overrides(cfgmod.default(), ["policy.eps=0.05", "policy.name=fastpf", "options.stateful=true"])
    assert cfg["policy"]["eps"] == 0.05
    assert cfg["policy"]["name"] == "fastpf"
    assert cfg["options"]["stateful"] is True
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.apply_overrides(cfgmod.default(), ["policy.eps=2"])
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.apply_overrides(cfgmod.default(), ["noequals"])


def test_sweep_product_order():
    cfg = cfgmod.apply_overrides(
        cfgmod.default(), [("sweep.axes", {"policy.name": ["mmf", "optp"], "seed": [1, 2, 3]})]
    )
    points = [p for p, _ in sweep_configs(cfg)]
    assert points[:3] == [{"policy.name": "mmf", "seed": s} for s in (1, 2, 3)]
    assert len(points) == 6


# ---------------------------------------------------------------- CLI


def test_run_writes_three_csvs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--out-dir", str(out), "scenario.batch_count=3"])
    assert code == 0
    assert sorted(os.listdir(out)) == ["batches.csv", "queries.csv", "summary.csv"]
    (row,) = read_csv(out / "summary.csv")
    assert row["policy"] == "mmf" and row["scenario"] == "mixed-G1"
    assert float(row["hit_ratio"]) == 1.0
    assert len(read_csv(out / "batches.csv")) == 3
    assert "throughput_per_min=" in capsys.readouterr().out


def test_static_on_homogeneous_tpch_misses_everything(tmp_path):
    out = tmp_path / "s"
    assert main(["run", "--quiet", "--policy", "static", "--out-dir", str(out), "scenario.batch_count=3"]) == 0
    (row,) = read_csv(out / "summary.csv")
    assert float(row["hit_ratio"]) == 0.0
    assert float(row["fairness_index"]) == pytest.approx(1.0)


def test_reruns_are_byte_identical(tmp_path):
    args = ["run", "--quiet", "--seed", "4", "--policy", "fastpf", "scenario.preset=sales-G3", "scenario.batch_count=3"]
    main(args + ["--out-dir", str(tmp_path / "a")])
    main(args + ["--out-dir", str(tmp_path / "b")])
    for name in ("summary.csv", "batches.csv", "queries.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_config_exits_2_without_output(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "policy": {"eps": -1}\n}\n')
    out = tmp_path / "never"
    assert main(["run", "--config", str(bad), "--out-dir", str(out)]) == 2
    assert not out.exists()
    assert "bad.json:2:" in capsys.readouterr().err


def test_runtime_error_exits_1(tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text("not,a,trace\n")
    assert main(["run", "--quiet", "--out-dir", str(tmp_path / "o"), f"scenario.trace={trace}"]) == 1
    assert not (tmp_path / "o").exists()


def test_trace_then_replay(tmp_path):
    assert main(["trace", "--quiet", "--seed", "2", "--out-dir", str(tmp_path), "scenario.batch_count=2"]) == 0
    trace = tmp_path / "trace.csv"
    assert trace.read_text().startswith("arrival_time_s,tenant_id,view_ids,bytes_read\n")
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--quiet", "--seed", "2", "--out-dir", str(a), "scenario.batch_count=2"])
    main(["run", "--quiet", "--seed", "2", "--out-dir", str(b), "scenario.batch_count=2", f"scenario.trace={trace}"])
    assert (a / "queries.csv").read_bytes() == (b / "queries.csv").read_bytes()


def test_sweep_writes_summary_and_axes(tmp_path):
    cfg = cfgmod.default()
    cfg["scenario"]["batch_count"] = 2
    cfg["sweep"]["axes"] = {"policy.name": ["static", "optp"], "seed": [0, 1]}
    path = tmp_path / "sweep.json"
    path.write_text(cfgmod.dumps(cfg))
    out = tmp_path / "out"
    assert main(["sweep", "--quiet", "--config", str(path), "--out-dir", str(out)]) == 0
    rows = read_csv(out / "summary.csv")
    assert [(r["policy"], r["seed"]) for r in rows] == [("static", "0"), ("static", "1"), ("optp", "0"), ("optp", "1")]
    axes = read_csv(out / "axes.csv")
    assert [json.loads(r["policy.name"]) for r in axes] == ["static", "static", "optp", "optp"]


def test_show_config_round_trips(capsys):
    assert main(["show-config", "policy.eps=0.07"]) == 0
    cfg = cfgmod.parse(capsys.readouterr().out)
    assert cfg["policy"]["eps"] == 0.07


def test_audit_small(tmp_path, capsys):
    assert main(["audit", "--count", "4", "--max-tenants", "3", "--max-views", "3", "--out-dir", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "exactpf" in text and "static" in text
    rows = read_csv(tmp_path / "audit.csv")
    assert {r["policy"] for r in rows} == {"static", "rsd", "optp", "mmf", "fastpf", "exactpf"}
    pf = next(r for r in rows if r["policy"] == "exactpf")
    assert pf["core_violations"] == "0"


def test_audit_argument_errors():
    assert main(["audit", "--count", "1", "--max-tenants", "9"]) == 1
