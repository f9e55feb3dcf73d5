"""Command-line entry point.

Exit codes:
  0  success
  2  usage error
  3  missing input file
  4  malformed input (schema, JSON, CSV, model text, scenario spec)
  5  inconsistent ids (unknown callee, site or block; malformed CFG)
  6  trace or runtime error (bad nesting, unknown site in a trace)
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import ScenarioSpec, SpecError, builtin_scenarios, generate
from .divergence import classify_divergence
from .ir import CFGError, Program, SchemaError, load_program
from .metrics import (benchmark_row, load_cve_list, report_csv, report_json, surface_metrics)
from .planner import dump_plans, load_plans, plan_program
from .predictor import DEFAULT_MAX_DEPTH, ModelFormatError, dumps, loads, train_tree
from .profiler import (TraceError, TrainingSummary, build_profile, read_trace,
                       records_from_csv, records_to_csv)
from .runtime import (CleanReplayOracle, Policy, SimulationReport, sim_event_from_json,
                      sim_event_to_json, simulate)

log = logging.getLogger("libblank")

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_SCHEMA, EXIT_IDS, EXIT_TRACE = 0, 2, 3, 4, 5, 6


class MissingInput(Exception):
    pass


# --------------------------------------------------------------------------
# small io helpers


def _need(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"no such file: {path}")
    return p


def _read_json(path):
    try:
        return json.loads(_need(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _write(path, text: str) -> None:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _program(path) -> Program:
    return load_program(_need(path))


def _trace(path) -> list:
    return list(read_trace(_need(path)))


def _on_off(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return v == "on"


# --------------------------------------------------------------------------
# stages (shared by the subcommands and `pipeline`)


def stage_plan(program_path, out) -> None:
    plans = plan_program(_program(program_path))
    _write(out, dump_plans(plans) + "\n")


def stage_profile(program_path, plan_path, traces: Sequence, out_csv, chains_out,
                  label: str = "chain") -> None:
    program = _program(program_path)
    plans = load_plans(_need(plan_path).read_text())
    _check_plans(program, plans)
    profile = build_profile([_trace(t) for t in traces], plans)
    _write(out_csv, records_to_csv(profile.records, label))
    if chains_out:
        _write(chains_out, _dump(profile.summary_json()))


def stage_train(csv_path, depth: int, out) -> None:
    records = records_from_csv(_need(csv_path).read_text())
    _write(out, dumps(train_tree(records, depth)))


def stage_simulate(program_path, plan_path, model_path, trace_path, chains_path, oracle_path,
                   policy: Policy, report_out, events_out=None) -> SimulationReport:
    program = _program(program_path)
    plans = load_plans(_need(plan_path).read_text())
    _check_plans(program, plans)
    model = loads(_need(model_path).read_text())
    summary = TrainingSummary.from_json(_read_json(chains_path))
    oracle = CleanReplayOracle.from_json(_read_json(oracle_path)) if oracle_path else None
    report, events = simulate(program, _trace(trace_path), model, summary, plans, policy, oracle)
    _write(report_out, _dump(report.to_json()))
    if events_out:
        _write(events_out, "".join(json.dumps(sim_event_to_json(e), sort_keys=True) + "\n"
                                   for e in events))
    return report


def stage_report_row(name, program_path, events_path, sim_path, cve_path) -> dict:
    program = _program(program_path)
    events = []
    with open(_need(events_path)) as fh:
        for line in fh:
            if line.strip():
                events.append(sim_event_from_json(json.loads(line)))
    cve = load_cve_list(_read_json(cve_path)) if cve_path else None
    metrics = surface_metrics(program, events, cve)
    return benchmark_row(name, metrics, _read_json(sim_path))


def _check_plans(program: Program, plans) -> None:
    for sid, sp in plans.items():
        entry = program.sites.get(sid)
        if entry is None or entry[0] != sp.fn or entry[3].callee != sp.callee:
            raise CFGError(f"plan for site {sid} does not match the program")


# --------------------------------------------------------------------------
# pipeline


PIPELINE_DEFAULTS = {
    "mode": "set", "lazy_blanking": True, "depth": DEFAULT_MAX_DEPTH,
    "unknown_site_policy": "conservative", "train_scales": ["small", "medium"],
    "test_scale": "large", "log_level": "warning",
}


def load_config(path) -> dict:
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("pipeline config must be a JSON object")
    known = set(PIPELINE_DEFAULTS) | {"out_dir", "scenarios", "benchmarks", "cve"}
    extra = set(doc) - known
    if extra:
        raise SchemaError(f"unknown config fields: {sorted(extra)}")
    cfg = dict(PIPELINE_DEFAULTS)
    cfg.update(doc)
    if "out_dir" not in cfg:
        raise SchemaError("pipeline config needs 'out_dir'")
    base = Path(path).resolve().parent

    def rel(p):
        return str(p if os.path.isabs(p) else base / p)

    cfg["out_dir"] = rel(cfg["out_dir"])
    scen = cfg.get("scenarios", [])
    if scen == "standard":
        scen = [n for n in builtin_scenarios() if n.startswith("suite-")]
    specs = []
    builtins = builtin_scenarios()
    for s in scen:
        if isinstance(s, str):
            if s not in builtins:
                raise SchemaError(f"unknown built-in scenario {s!r}")
            specs.append(builtins[s].to_json())
        elif isinstance(s, dict):
            specs.append(ScenarioSpec.from_json(s).to_json())
        else:
            raise SchemaError(f"bad scenario entry {s!r}")
    cfg["scenarios"] = specs
    benches = []
    for b in cfg.get("benchmarks", []):
        try:
            entry = {"name": b["name"], "program": rel(b["program"]),
                     "train": [rel(t) for t in b["train"]], "test": rel(b["test"]),
                     "oracle": rel(b["oracle"]) if b.get("oracle") else None,
                     "cve": rel(b["cve"]) if b.get("cve") else None}
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad benchmark entry {b!r}: {exc}") from None
        for key in ("program", "test", "oracle", "cve"):
            if entry[key]:
                _need(entry[key])
        for t in entry["train"]:
            _need(t)
        benches.append(entry)
    cfg["benchmarks"] = benches
    if cfg.get("cve"):
        cfg["cve"] = rel(cfg["cve"])
        _need(cfg["cve"])
    if not specs and not benches:
        raise SchemaError("pipeline config lists no scenarios and no benchmarks")
    names = [s["name"] for s in specs] + [b["name"] for b in benches]
    if len(set(names)) != len(names):
        raise SchemaError("benchmark and scenario names must be unique")
    Policy(cfg["mode"], bool(cfg["lazy_blanking"]), unknown_site=cfg["unknown_site_policy"])
    return cfg


def _run_benchmark(job: tuple[dict, dict]) -> dict:
    cfg, bench = job
    out = Path(cfg["out_dir"]) / bench["name"]
    out.mkdir(parents=True, exist_ok=True)
    if "spec" in bench:
        generate(ScenarioSpec.from_json(bench["spec"])).write(out)
        bench = {"name": bench["name"], "program": str(out / "program.json"),
                 "train": [str(out / f"trace.{s}.jsonl") for s in cfg["train_scales"]],
                 "test": str(out / f"trace.{cfg['test_scale']}.jsonl"),
                 "oracle": str(out / "oracle.json"),
                 "cve": cfg.get("cve") or str(out / "cve.json")}
    cve = bench.get("cve") or cfg.get("cve")
    label = "chain" if cfg["mode"] == "set" else "sequence"
    stage_plan(bench["program"], out / "plan.json")
    div = classify_divergence(_program(bench["program"]))
    _write(out / "divergence.json", _dump(div.to_json()))
    stage_profile(bench["program"], out / "plan.json", bench["train"], out / "train.csv",
                  out / "chains.json", label)
    stage_train(out / "train.csv", int(cfg["depth"]), out / "tree.txt")
    policy = Policy(cfg["mode"], bool(cfg["lazy_blanking"]),
                    unknown_site=cfg["unknown_site_policy"])
    stage_simulate(bench["program"], out / "plan.json", out / "tree.txt", bench["test"],
                   out / "chains.json", bench.get("oracle"), policy, out / "simulation.json",
                   out / "events.jsonl")
    return stage_report_row(bench["name"], bench["program"], out / "events.jsonl",
                            out / "simulation.json", cve)


def run_pipeline(config_path, jobs: int = 1) -> list[dict]:
    cfg = load_config(config_path)
    logging.getLogger("libblank").setLevel(cfg["log_level"].upper())
    work = [(cfg, {"name": s["name"], "spec": s}) for s in cfg["scenarios"]]
    work += [(cfg, b) for b in cfg["benchmarks"]]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_benchmark, work))
    else:
        rows = [_run_benchmark(w) for w in work]
    out = Path(cfg["out_dir"])
    _write(out / "report.json", report_json(rows))
    _write(out / "report.csv", report_csv(rows))
    log.info("pipeline wrote %d benchmark rows to %s", len(rows), out)
    return rows


# --------------------------------------------------------------------------
# argparse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="libblank",
        description="Call-chain prediction and library blanking: static analysis, "
                    "profiling, training and deterministic replay.",
        epilog=__doc__.split("\n", 1)[1], formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen", help="generate a synthetic scenario")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="scenario spec JSON")
    src.add_argument("--scenario", help="name of a built-in scenario",
                     choices=sorted(builtin_scenarios()))
    g.add_argument("--out", required=True, help="output directory")

    d = sub.add_parser("divergence", help="classify library functions")
    d.add_argument("--program", required=True)
    d.add_argument("--out", help="write the full classification JSON here")

    p = sub.add_parser("plan", help="compute per-site instrumentation plans")
    p.add_argument("--program", required=True)
    p.add_argument("--out", required=True)

    pr = sub.add_parser("profile", help="turn traces into a training table")
    pr.add_argument("--program", required=True)
    pr.add_argument("--plan", required=True)
    pr.add_argument("--trace", required=True, action="append", help="repeatable")
    pr.add_argument("--out", required=True, help="training CSV")
    pr.add_argument("--chains", required=True, help="chain table JSON")
    pr.add_argument("--label", choices=("chain", "sequence"), default="chain")

    t = sub.add_parser("train", help="train a decision tree from a CSV")
    t.add_argument("--csv", required=True)
    t.add_argument("--depth", type=int, default=DEFAULT_MAX_DEPTH)
    t.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="replay a trace through the runtime")
    s.add_argument("--program", required=True)
    s.add_argument("--plan", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--chains", required=True)
    s.add_argument("--mode", choices=("set", "fullchain"), default="set")
    s.add_argument("--lazy-blanking", type=_on_off, default=True, metavar="on|off")
    s.add_argument("--unknown-site", choices=("conservative", "empty"), default="conservative")
    s.add_argument("--oracle")
    s.add_argument("--report", required=True)
    s.add_argument("--events", help="stream the event log as JSONL")

    r = sub.add_parser("report", help="compute surface metrics for one run")
    r.add_argument("--name", required=True)
    r.add_argument("--program", required=True)
    r.add_argument("--events", required=True)
    r.add_argument("--simulation", required=True)
    r.add_argument("--cve")
    r.add_argument("--out", required=True)
    r.add_argument("--csv")

    pl = sub.add_parser("pipeline", help="run every stage from a config file")
    pl.add_argument("--config", required=True)
    pl.add_argument("--jobs", type=int, default=1)
    return ap


def _dispatch(a) -> None:
    if a.command == "gen":
        spec = ScenarioSpec.from_json(_read_json(a.spec)) if a.spec else builtin_scenarios()[a.scenario]
        generate(spec).write(a.out)
    elif a.command == "divergence":
        report = classify_divergence(_program(a.program))
        sys.stdout.write(report.summary_table())
        if a.out:
            _write(a.out, _dump(report.to_json()))
    elif a.command == "plan":
        stage_plan(a.program, a.out)
    elif a.command == "profile":
        stage_profile(a.program, a.plan, a.trace, a.out, a.chains, a.label)
    elif a.command == "train":
        if a.depth < 1:
            raise _Usage("--depth must be positive")
        stage_train(a.csv, a.depth, a.out)
    elif a.command == "simulate":
        policy = Policy(a.mode, a.lazy_blanking, unknown_site=a.unknown_site)
        stage_simulate(a.program, a.plan, a.model, a.trace, a.chains, a.oracle, policy,
                       a.report, a.events)
    elif a.command == "report":
        row = stage_report_row(a.name, a.program, a.events, a.simulation, a.cve)
        _write(a.out, report_json([row]))
        if a.csv:
            _write(a.csv, report_csv([row]))
    elif a.command == "pipeline":
        if a.jobs < 1:
            raise _Usage("--jobs must be positive")
        run_pipeline(a.config, a.jobs)


class _Usage(Exception):
    pass


def _fail(code: int, kind: str, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * a.verbose),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(a)
    except _Usage as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except (MissingInput, FileNotFoundError) as exc:
        return _fail(EXIT_MISSING, "missing_file", exc)
    except TraceError as exc:
        return _fail(EXIT_TRACE, "trace", exc)
    except CFGError as exc:
        return _fail(EXIT_IDS, "inconsistent_ids", exc)
    except (SchemaError, SpecError, ModelFormatError, NotImplementedError, ValueError) as exc:
        return _fail(EXIT_SCHEMA, "schema", exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
