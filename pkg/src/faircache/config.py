"""JSON run configuration: schema validation with line numbers, dotted-path
overrides, normalization and conversion to simulation objects.

A normalized config always has every section and every field; serializing
it and parsing the result gives the same normalized config back.
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass
from typing import Any

from faircache.policies import POLICY_NAMES, Policy
from faircache.sim import SimOptions, TimeModel
from faircache.workload import (
    PRESET_NAMES,
    RANKS,
    AccessDistribution,
    ColdWindows,
    ScenarioSpec,
    TenantSpec,
    preset,
)


class ConfigError(ValueError):
    """A schema violation; ``line`` is the 1-based line in the source text, if known."""

    def __init__(self, message: str, line: int | None = None, source: str = "config"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- locating keys


def _key_lines(text: str) -> dict[tuple, int]:
    """Line of every object key and array element, keyed by path tuple.

    Only used to point error messages at the right line; ``json`` does the parsing.
    """
    lines: dict[tuple, int] = {(): 1}
    stack: list[list] = []  # [kind, path, next_index_or_pending_key]
    line = 1
    i = 0
    n = len(text)
    expect_key = False

    def value_path():
        if not stack:
            return ()
        kind, path, slot = stack[-1]
        return path + (slot,)

    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            s = json.loads(text[i : j + 1]) if j < n else ""
            if expect_key and stack and stack[-1][0] == "obj":
                stack[-1][2] = s
                lines[stack[-1][1] + (s,)] = line
                expect_key = False
            i = j
        elif c in "{[":
            path = value_path()
            if stack and stack[-1][0] == "arr":
                lines.setdefault(path, line)
            stack.append(["obj" if c == "{" else "arr", path, 0 if c == "[" else None])
            expect_key = c == "{"
        elif c in "}]":
            if stack:
                stack.pop()
            expect_key = False
        elif c == ",":
            if stack and stack[-1][0] == "arr":
                stack[-1][2] += 1
            expect_key = bool(stack) and stack[-1][0] == "obj"
        elif not c.isspace() and c != ":" and stack and stack[-1][0] == "arr":
            lines.setdefault(value_path(), line)
        i += 1
    return lines


class _Located:
    """Resolves a dotted path to a source line (nearest known ancestor)."""

    def __init__(self, text: str | None, source: str):
        self.source = source
        self.lines = _key_lines(text) if text is not None else {}

    def line(self, path: tuple) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get(())

    def error(self, path: tuple, message: str) -> ConfigError:
        label = ".".join(str(p) for p in path)
        return ConfigError(f"{label}: {message}" if label else message, self.line(path), self.source)


# ---------------------------------------------------------------- schema

_NUM = "number"
_INT = "integer"
_BOOL = "boolean"
_STR = "string"


SECTIONS: dict[str, dict[str, tuple[str, Any]]] = {
    "scenario": {
        "preset": (_STR + "?", "mixed-G1"),
        "name": (_STR + "?", None),
        "batch_seconds": (_NUM + "?", None),
        "batch_count": (_INT + "?", None),
        "cache_budget_bytes": (_INT + "?", None),
        "tenants": ("tenants?", None),
        "trace": (_STR + "?", None),
    },
    "policy": {
        "name": (_STR, "mmf"),
        "eps": (_NUM, 0.1),
        "m": (_INT + "?", None),
        "pool": (_STR, "pruned"),
        "pool_mmf_eps": (_NUM, 0.1),
        "tol": (_NUM, 1e-9),
        "max_iters": (_INT, 10_000),
        "weighted": (_BOOL, True),
        "optp_weighted": (_BOOL, False),
        "rsd_exact_limit": (_INT, 8),
        "rsd_samples": (_INT, 10_000),
        "refine": (_BOOL, True),
    },
    "time_model": {
        "fixed_overhead_s": (_NUM, 0.5),
        "disk_bandwidth_bytes_per_s": (_NUM, 500e6),
        "cache_bandwidth_bytes_per_s": (_NUM, 10e9),
        "cache_load_charged": (_BOOL, True),
    },
    "options": {
        "stateful": (_BOOL, False),
        "gamma": (_NUM, 2.0),
    },
    "output": {
        "dir": (_STR, "out"),
        "per_batch": (_BOOL, True),
        "per_query": (_BOOL, True),
    },
    "sweep": {
        "axes": ("axes", {}),
    },
}
TOP_LEVEL = {"seed": (_INT, 0)}
TENANT_FIELDS = {
    "id": (_STR, None),
    "access": ("access", "g1"),
    "mean_interarrival_s": (_NUM, 20.0),
    "weight": (_NUM, 1.0),
}
ACCESS_FIELDS = {
    "kind": (_STR, "zipf"),
    "exponent": (_NUM, 1.0),
    "ranks": ("ranks", "g1"),
    "cold": ("cold?", None),
}
COLD_FIELDS = {"mean_s": (_NUM, 120.0), "std_s": (_NUM, 30.0), "k": (_INT, 3)}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def _check_fields(obj, schema, path, loc) -> dict:
    if not isinstance(obj, dict):
        raise loc.error(path, "expected an object")
    for k in obj:
        if k not in schema:
            raise loc.error(path + (k,), f"unknown field; expected one of {', '.join(schema)}")
    out = {}
    for k, (kind, default) in schema.items():
        if k not in obj:
            if default is None and not kind.endswith("?"):
                raise loc.error(path + (k,), "required field is missing")
            out[k] = copy.deepcopy(default)
            continue
        out[k] = _check_value(obj[k], kind, path + (k,), loc)
    return out


def _check_value(v, kind, path, loc):
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if v is None:
        if optional:
            return None
        raise loc.error(path, f"expected a {kind}, got null")
    if kind == _NUM:
        if not _is_num(v):
            raise loc.error(path, f"expected a number, got {json.dumps(v)}")
        return float(v)
    if kind == _INT:
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        if not _is_int(v):
            raise loc.error(path, f"expected an integer, got {json.dumps(v)}")
        return v
    if kind == _BOOL:
        if not isinstance(v, bool):
            raise loc.error(path, f"expected true or false, got {json.dumps(v)}")
        return v
    if kind == _STR:
        if not isinstance(v, str):
            raise loc.error(path, f"expected a string, got {json.dumps(v)}")
        return v
    if kind == "tenants":
        if not isinstance(v, list) or not v:
            raise loc.error(path, "expected a non-empty list of tenants")
        return [_check_fields(t, TENANT_FIELDS, path + (k,), loc) for k, t in enumerate(v)]
    if kind == "access":
        if isinstance(v, str):
            if v != "h1" and v not in RANKS:
                raise loc.error(path, f"unknown distribution {v!r}; expected h1 or one of {', '.join(RANKS)}")
            return v
        return _check_fields(v, ACCESS_FIELDS, path, loc)
    if kind == "ranks":
        if isinstance(v, str):
            if v not in RANKS:
                raise loc.error(path, f"unknown rank list {v!r}")
            return v
        if not isinstance(v, list) or not all(_is_int(r) for r in v):
            raise loc.error(path, "expected a rank list name or a list of integers")
        return list(v)
    if kind == "cold":
        if v is True:
            return {k: d for k, (_, d) in COLD_FIELDS.items()}
        if v is False:
            return None
        return _check_fields(v, COLD_FIELDS, path, loc)
    if kind == "axes":
        if not isinstance(v, dict):
            raise loc.error(path, "expected an object mapping dotted paths to value lists")
        for axis, values in v.items():
            if not isinstance(values, list) or not values:
                raise loc.error(path + (axis,), "expected a non-empty list of values")
            if axis.split(".")[0] == "sweep":
                raise loc.error(path + (axis,), "a sweep cannot vary itself")
        return copy.deepcopy(v)
    raise AssertionError(kind)


def normalize(doc: Any, text: str | None = None, source: str = "config") -> dict:
    """Validate ``doc`` and fill in every default."""
    loc = _Located(text, source)
    if not isinstance(doc, dict):
        raise loc.error((), "top level must be an object")
    known = set(SECTIONS) | set(TOP_LEVEL)
    for k in doc:
        if k not in known:
            raise loc.error((k,), f"unknown section; expected one of {', '.join(sorted(known))}")
    out: dict[str, Any] = {}
    for k, (kind, default) in TOP_LEVEL.items():
        out[k] = _check_value(doc[k], kind, (k,), loc) if k in doc else default
    for name, schema in SECTIONS.items():
        out[name] = _check_fields(doc.get(name, {}), schema, (name,), loc)
    _check_semantics(out, loc)
    return out


def _check_semantics(cfg: dict, loc: _Located) -> None:
    """Build every object once so value errors surface with a line number."""
    sc = cfg["scenario"]
    if sc["preset"] is not None and sc["preset"] not in PRESET_NAMES:
        raise loc.error(("scenario", "preset"), f"unknown preset; expected one of {', '.join(PRESET_NAMES)}")
    if sc["preset"] is None and sc["tenants"] is None:
        raise loc.error(("scenario",), "give either a preset or a tenant list")
    if cfg["policy"]["name"] not in POLICY_NAMES:
        raise loc.error(("policy", "name"), f"unknown policy; expected one of {', '.join(POLICY_NAMES)}")
    for section, build in (
        ("scenario", scenario_spec),
        ("policy", policy),
        ("time_model", time_model),
        ("options", sim_options),
    ):
        try:
            build(cfg)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            named = [w for w in re.findall(r"[a-z_]+", str(exc)) if w in SECTIONS[section]]
            raise loc.error((section,) + tuple(named[:1]), str(exc)) from None
    for axis in cfg["sweep"]["axes"]:
        parts = tuple(axis.split("."))
        if not _path_exists(parts):
            raise loc.error(("sweep", "axes", axis), "not a known configuration path")


def _path_exists(parts: tuple) -> bool:
    if len(parts) == 1:
        return parts[0] in TOP_LEVEL
    return len(parts) == 2 and parts[0] in SECTIONS and parts[1] in SECTIONS[parts[0]]


# ---------------------------------------------------------------- text i/o


def parse(text: str, source: str = "config") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    return normalize(doc, text, source)


def load(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse(text, str(path))


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2) + "\n"


def default() -> dict:
    return normalize({})


# ---------------------------------------------------------------- overrides


def _parse_scalar(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``path=value`` strings or (path, value) pairs and re-validate.

    Values given as strings are read as JSON when they parse, else kept as text.
    """
    doc = copy.deepcopy(cfg)
    for item in overrides:
        if isinstance(item, str):
            path, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not of the form path=value", None, "override")
            value = _parse_scalar(raw)
        else:
            path, value = item
        parts = path.strip().split(".")
        if not _path_exists(tuple(parts)):
            raise ConfigError(f"{path}: not a known configuration path", None, "override")
        if len(parts) == 1:
            doc[parts[0]] = value
        else:
            doc[parts[0]][parts[1]] = value
    return normalize(doc, None, "override")


# ---------------------------------------------------------------- builders


def _access(raw) -> AccessDistribution:
    if isinstance(raw, str):
        return AccessDistribution.named(raw)
    ranks = RANKS[raw["ranks"]] if isinstance(raw["ranks"], str) else tuple(raw["ranks"])
    cold = ColdWindows(**raw["cold"]) if raw["cold"] is not None else None
    return AccessDistribution(raw["kind"], raw["exponent"], ranks, cold)


def scenario_spec(cfg: dict) -> ScenarioSpec:
    sc = cfg["scenario"]
    if sc["tenants"] is not None:
        tenants = tuple(
            TenantSpec(t["id"], _access(t["access"]), t["mean_interarrival_s"], t["weight"]) for t in sc["tenants"]
        )
        base = ScenarioSpec(sc["name"] or sc["preset"] or "custom", tenants)
        if sc["preset"] is not None:
            p = preset(sc["preset"])
            base = ScenarioSpec(base.name, tenants, p.batch_seconds, p.batch_count, p.cache_budget_bytes)
    else:
        base = preset(sc["preset"])
    return ScenarioSpec(
        sc["name"] or base.name,
        base.tenants,
        base.batch_seconds if sc["batch_seconds"] is None else sc["batch_seconds"],
        base.batch_count if sc["batch_count"] is None else sc["batch_count"],
        base.cache_budget_bytes if sc["cache_budget_bytes"] is None else sc["cache_budget_bytes"],
    )


def policy(cfg: dict) -> Policy:
    return Policy(**cfg["policy"])


def time_model(cfg: dict) -> TimeModel:
    return TimeModel(**cfg["time_model"])


def sim_options(cfg: dict) -> SimOptions:
    return SimOptions(**cfg["options"])


@dataclass(frozen=True)
class RunPlan:
    spec: ScenarioSpec
    policy: Policy
    time_model: TimeModel
    options: SimOptions
    seed: int
    trace_path: str | None


def run_plan(cfg: dict) -> RunPlan:
    return RunPlan(
        scenario_spec(cfg), policy(cfg), time_model(cfg), sim_options(cfg), cfg["seed"], cfg["scenario"]["trace"]
    )
