"""Command line entry point: ``faircache run | sweep | audit | trace``."""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
import tempfile
import warnings

import numpy as np

from faircache import config as cfgmod
from faircache import metrics, sim
from faircache.audit import check_core, check_pe, check_si
from faircache.instances import random_instance
from faircache.model import FairCacheError
from faircache.policies import Policy, plan
from faircache.workload import generate_trace, trace_from_csv, trace_to_csv

SUMMARY_HEADER = (
    "scenario",
    "policy",
    "seed",
    "throughput_per_min",
    "fairness_index",
    "avg_cache_util",
    "hit_ratio",
    "convergence_batches",
)
BATCH_HEADER = ("batch", "configuration", "cached_bytes", "makespan_s")
QUERY_HEADER = ("query_id", "tenant", "batch", "hit", "runtime_s", "baseline_runtime_s")
AUDIT_POLICIES = ("static", "rsd", "optp", "mmf", "fastpf", "exactpf")


def fmt(x) -> str:
    """Shortest round-trip text for floats; plain text for everything else."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_outputs(out_dir: str, files: dict[str, str]) -> None:
    """Write every file or none: stage in a temporary directory, then move."""
    os.makedirs(out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out_dir, prefix=".staging-") as tmp:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))


# ---------------------------------------------------------------- run


def simulate(cfg: dict):
    """One run plus its paired Static baseline: (result, baseline, report)."""
    p = cfgmod.run_plan(cfg)
    trace = None
    if p.trace_path is not None:
        with open(p.trace_path, encoding="utf-8") as fh:
            trace = trace_from_csv(fh.read())
    if trace is None:
        trace = generate_trace(p.spec, p.seed)
    result = sim.run(p.spec, p.policy, p.time_model, p.options, p.seed, trace)
    baseline = sim.paired_baseline(p.spec, p.time_model, p.seed, trace)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = metrics.report(result, baseline) if result.query_count else None
    return result, baseline, rep


def summary_row(result, rep) -> tuple:
    if rep is None:
        return (result.scenario, result.policy, result.seed, 0.0, "", 0.0, "", 0)
    return (
        result.scenario,
        result.policy,
        result.seed,
        rep.throughput_per_min,
        rep.fairness_index,
        rep.avg_cache_utilization,
        rep.hit_ratio,
        rep.convergence_batches,
    )


def batch_rows(result):
    for b in result.batches:
        yield (b.index, ";".join(b.configuration.view_ids), b.cached_bytes, b.makespan_s)


def query_rows(result, baseline):
    base = {q.query_id: q.runtime_s for q in baseline.queries()}
    for q in result.queries():
        yield (q.query_id, q.tenant, q.batch, q.hit, q.runtime_s, base[q.query_id])


def run_files(cfg: dict):
    result, baseline, rep = simulate(cfg)
    files = {"summary.csv": _csv(SUMMARY_HEADER, [summary_row(result, rep)])}
    if cfg["output"]["per_batch"]:
        files["batches.csv"] = _csv(BATCH_HEADER, batch_rows(result))
    if cfg["output"]["per_query"]:
        files["queries.csv"] = _csv(QUERY_HEADER, query_rows(result, baseline))
    return files, result, rep


def _print_metrics(result, rep, out=None):
    out = out or sys.stdout
    if rep is None:
        print(f"{result.scenario} {result.policy} seed={result.seed}: no queries served", file=out)
        return
    print(
        f"{result.scenario} {result.policy} seed={result.seed}: "
        f"throughput_per_min={rep.throughput_per_min:.4f} "
        f"fairness_index={rep.fairness_index:.4f} "
        f"avg_cache_util={rep.avg_cache_utilization:.4f} "
        f"hit_ratio={rep.hit_ratio:.4f}",
        file=out,
    )


# ---------------------------------------------------------------- sweep


def sweep_configs(cfg: dict):
    """Cartesian product of the sweep axes, first axis varying slowest."""
    axes = cfg["sweep"]["axes"]
    base = dict(cfg)
    base["sweep"] = {"axes": {}}
    if not axes:
        yield {}, base
        return
    names = list(axes)
    for combo in itertools.product(*(axes[n] for n in names)):
        point = dict(zip(names, combo))
        yield point, cfgmod.apply_overrides(base, list(point.items()))


def sweep_files(cfg: dict, quiet: bool = True):
    points = list(sweep_configs(cfg))  # validates every point before running any
    names = list(cfg["sweep"]["axes"])
    summary, axes_rows = [], []
    for k, (point, run_cfg) in enumerate(points):
        result, _, rep = simulate(run_cfg)
        summary.append(summary_row(result, rep))
        axes_rows.append((k, *(json.dumps(point[n]) for n in names)))
        if not quiet:
            _print_metrics(result, rep)
    return {"summary.csv": _csv(SUMMARY_HEADER, summary), "axes.csv": _csv(("run", *names), axes_rows)}


# ---------------------------------------------------------------- audit


def audit_report(count: int, max_tenants: int, max_views: int, seed: int, tol: float, weighted: bool):
    """Violation counts per (policy, property) over random instances."""
    if max_tenants < 2 or max_views < 2:
        raise ValueError("need at least 2 tenants and 2 views")
    if max_tenants > 6:
        raise ValueError("the core audit supports at most 6 tenants")
    if max_views > 20:
        raise ValueError("the audit enumerates configurations; use at most 20 views")
    rng = np.random.default_rng(seed)
    counts = {p: {"SI": 0, "PE": 0, "core": 0} for p in AUDIT_POLICIES}
    for k in range(count):
        n = int(rng.integers(2, max_tenants + 1))
        v = int(rng.integers(2, max_views + 1))
        inst = random_instance(rng, n, v, weighted=weighted and k % 2 == 1)
        plan_seed = int(rng.integers(2**32))
        for name in AUDIT_POLICIES:
            alloc = plan(Policy(name), inst, plan_seed)
            c = counts[name]
            c["SI"] += not check_si(inst, alloc, tol)
            c["PE"] += not check_pe(inst, alloc, tol)
            c["core"] += not check_core(inst, alloc, tol)
    return counts


def format_audit(counts: dict, count: int) -> str:
    lines = [f"property matrix over {count} random instances (violations in parentheses)"]
    lines.append(f"{'policy':<10}{'SI':>12}{'PE':>12}{'core':>12}")
    for name, c in counts.items():
        cells = [f"{'yes' if c[p] == 0 else 'no'} ({c[p]})" for p in ("SI", "PE", "core")]
        lines.append(f"{name:<10}" + "".join(f"{x:>12}" for x in cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- argument handling


def _base_config(args) -> dict:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.default()
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(("seed", args.seed))
    if getattr(args, "policy", None) is not None:
        overrides.append(("policy.name", args.policy))
    if args.out_dir is not None:
        overrides.append(("output.dir", args.out_dir))
    return cfgmod.apply_overrides(cfg, overrides) if overrides else cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="faircache", description="Fair shared-cache allocation: simulate, sweep, audit.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, with_policy=True):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        if with_policy:
            p.add_argument("--policy", help="policy name (shorthand for policy.name=...)")
        p.add_argument("--out-dir", help="output directory (shorthand for output.dir=...)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
        p.add_argument("overrides", nargs="*", metavar="path=value", help="dotted-path overrides, e.g. policy.eps=0.05")

    common(sub.add_parser("run", help="simulate one scenario under one policy"))
    common(sub.add_parser("sweep", help="simulate the cartesian product of the sweep axes"))
    common(sub.add_parser("trace", help="write the generated query trace as CSV"), with_policy=False)
    common(sub.add_parser("show-config", help="print the normalized configuration"))

    a = sub.add_parser("audit", help="property matrix of every policy on random instances")
    a.add_argument("--count", type=int, default=100)
    a.add_argument("--max-tenants", type=int, default=4)
    a.add_argument("--max-views", type=int, default=5)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--tol", type=float, default=1e-3)
    a.add_argument("--weighted", action="store_true", help="give every other instance random tenant weights")
    a.add_argument("--out-dir", help="also write audit.csv here")
    a.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "audit":
            counts = audit_report(args.count, args.max_tenants, args.max_views, args.seed, args.tol, args.weighted)
            if args.out_dir:
                rows = [(p, c["SI"], c["PE"], c["core"]) for p, c in counts.items()]
                write_outputs(args.out_dir, {"audit.csv": _csv(("policy", "si_violations", "pe_violations", "core_violations"), rows)})
            if not args.quiet:
                sys.stdout.write(format_audit(counts, args.count))
            return 0

        cfg = _base_config(args)
        out_dir = cfg["output"]["dir"]
        if args.command == "show-config":
            sys.stdout.write(cfgmod.dumps(cfg))
        elif args.command == "run":
            files, result, rep = run_files(cfg)
            write_outputs(out_dir, files)
            if not args.quiet:
                _print_metrics(result, rep)
        elif args.command == "sweep":
            write_outputs(out_dir, sweep_files(cfg, args.quiet))
        elif args.command == "trace":
            spec = cfgmod.scenario_spec(cfg)
            write_outputs(out_dir, {"trace.csv": trace_to_csv(generate_trace(spec, cfg["seed"]))})
            if not args.quiet:
                print(f"wrote {os.path.join(out_dir, 'trace.csv')}")
        return 0
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FairCacheError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
