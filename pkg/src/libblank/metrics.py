"""Attack-surface metrics computed from program metadata and a simulator log.

All arithmetic is exact (integers and ``Fraction``); conversion to a
rounded float happens only when a report is serialised.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .ir import Program, SchemaError
from .runtime import Blank, Copy, Hit, Kind, Mispredict, SimEvent, SimulationReport

CSV_COLUMNS = ("benchmark", "reduction", "gadget_reduction", "cve_reduction", "accuracy")


def compute_exposed(p_count: int, s_count: int, c_max: int) -> int:
    for name, v in (("p_count", p_count), ("s_count", s_count), ("c_max", c_max)):
        if not isinstance(v, int) or v < 0:
            raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
    return p_count + s_count + c_max


def compute_reduction(total: int, exposed: int) -> Fraction:
    """Percentage of library functions not exposed."""
    if total <= 0:
        raise ValueError("total function count must be positive")
    if not 0 <= exposed <= total:
        raise ValueError(f"exposed count {exposed} outside [0, {total}]")
    return Fraction(100 * (total - exposed), total)


def compute_cve_exposure(p_count: int, s_count: int, called_cve_fns: Iterable,
                         cve_total: int) -> tuple[int, Fraction]:
    """``p_count``/``s_count`` are the permanent functions on the CVE list,
    ``called_cve_fns`` the listed functions the run loaded beyond those."""
    if cve_total <= 0:
        raise ValueError("CVE function list is empty")
    exposed = p_count + s_count + len(set(called_cve_fns))
    if exposed > cve_total:
        raise ValueError(f"{exposed} exposed CVE functions exceed the list size {cve_total}")
    return exposed, Fraction(100 * (cve_total - exposed), cve_total)


def compute_gadget_reduction(program: Program, loaded_max_set: Iterable[int]) -> Fraction:
    lib = program.library_ids
    total = sum(program.functions[f].gadget_count for f in lib)
    if total == 0:
        return Fraction(100)
    exposed = sum(program.functions[f].gadget_count for f in set(loaded_max_set) if f in lib)
    return Fraction(100 * (total - exposed), total)


# --------------------------------------------------------------------------
# log replay


@dataclass(frozen=True)
class LogSummary:
    c_max: int
    worst_gadget_set: frozenset[int]
    max_exposed_set: frozenset[int]
    called: frozenset[int]


def replay_log(program: Program, log: Sequence[SimEvent]) -> LogSummary:
    """Recomputes exposure quantities by scanning the whole event log."""
    perm = program.permanent_ids
    gad = {f: program.functions[f].gadget_count for f in program.library_ids}
    loaded: set[int] = set()
    c_max = 0
    best_g, worst = sum(gad[f] for f in perm), frozenset(perm)
    largest = frozenset(perm)
    called: set[int] = set()
    for ev in log:
        if isinstance(ev, Copy):
            loaded.add(ev.fn)
        elif isinstance(ev, Blank):
            loaded.difference_update(ev.fns)
        elif isinstance(ev, Hit):
            called.add(ev.fn)
            continue
        elif isinstance(ev, Mispredict) and ev.kind is Kind.UNDER:
            called.add(ev.fn)
            continue
        else:
            continue
        if len(loaded) > c_max:
            c_max = len(loaded)
            largest = frozenset(loaded | perm)
        g = sum(gad[f] for f in perm) + sum(gad.get(f, 0) for f in loaded)
        if g > best_g:
            best_g, worst = g, frozenset(loaded | perm)
    return LogSummary(c_max, worst, largest, frozenset(called))


def recount_accuracy(log: Sequence[SimEvent]) -> dict[int, tuple[int, int]]:
    """Per site (calls, mispredicted calls) counted straight from the log."""
    from .runtime import Predict, Return
    out: dict[int, list[int]] = {}
    missed = False
    for ev in log:
        if isinstance(ev, Predict):
            missed = False
        elif isinstance(ev, Mispredict):
            missed = True
        elif isinstance(ev, Return):
            c = out.setdefault(ev.site, [0, 0])
            c[0] += 1
            c[1] += missed
            missed = False
    return {s: (c[0], c[1]) for s, c in sorted(out.items())}


# --------------------------------------------------------------------------
# combined


@dataclass(frozen=True)
class SurfaceMetrics:
    p_count: int
    s_count: int
    c_max: int
    exposed: int
    total_functions: int
    reduction_percent: Fraction
    exposed_gadgets: int
    total_gadgets: int
    gadget_reduction_percent: Fraction
    cve_exposed: int | None
    cve_total: int | None
    cve_reduction_percent: Fraction | None

    def to_json(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, Fraction):
                d[k] = round(float(v), 4)
        return d


def load_cve_list(src) -> list[str]:
    doc = json.loads(src) if isinstance(src, str) else src
    if not isinstance(doc, list) or not all(isinstance(x, str) for x in doc):
        raise SchemaError("CVE list must be a JSON array of function names")
    return doc


def surface_metrics(program: Program, log: Sequence[SimEvent],
                    cve_names: Sequence[str] | None = None) -> SurfaceMetrics:
    lib = program.library_ids
    fns = program.functions
    p_ids = {f for f in lib if not fns[f].instrumentable}
    s_ids = {f for f in lib if fns[f].instrumentable and not fns[f].blankable}
    summary = replay_log(program, log)
    exposed = compute_exposed(len(p_ids), len(s_ids), summary.c_max)
    total = len(lib)
    total_g = sum(fns[f].gadget_count for f in lib)
    exposed_g = sum(fns[f].gadget_count for f in summary.worst_gadget_set)
    cve_exp = cve_total = cve_red = None
    if cve_names is not None:
        names = set(cve_names)
        cve_ids = {f for f in lib if fns[f].name in names}
        a = (summary.called & cve_ids) - p_ids - s_ids
        cve_exp, cve_red = compute_cve_exposure(len(p_ids & cve_ids), len(s_ids & cve_ids), a,
                                                len(names))
        cve_total = len(names)
    return SurfaceMetrics(
        p_count=len(p_ids), s_count=len(s_ids), c_max=summary.c_max, exposed=exposed,
        total_functions=total, reduction_percent=compute_reduction(total, exposed),
        exposed_gadgets=exposed_g, total_gadgets=total_g,
        gadget_reduction_percent=compute_gadget_reduction(program, summary.worst_gadget_set),
        cve_exposed=cve_exp, cve_total=cve_total, cve_reduction_percent=cve_red)


def benchmark_row(name: str, metrics: SurfaceMetrics, sim) -> dict:
    """One report row; ``sim`` is a ``SimulationReport`` or its JSON form."""
    row = {"benchmark": name}
    m = metrics.to_json()
    row.update(m)
    row["reduction"] = m["reduction_percent"]
    row["gadget_reduction"] = m["gadget_reduction_percent"]
    row["cve_reduction"] = m["cve_reduction_percent"]
    sim_json = sim.to_json() if isinstance(sim, SimulationReport) else sim
    for k in ("accuracy", "calls", "hits", "underpredictions", "overpredictions", "breakdown",
              "max_exposed_functions", "max_exposed_gadgets", "faults", "attacks_detected",
              "audits", "audit_count", "audit_latency_geomean_us", "invariant_violations",
              "mode", "lazy_blanking"):
        row[k] = sim_json[k]
    return row


def report_json(rows: Sequence[dict]) -> str:
    rows = sorted(rows, key=lambda r: r["benchmark"])
    return json.dumps({"benchmarks": rows}, sort_keys=True, indent=1) + "\n"


def report_csv(rows: Sequence[dict]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(rows, key=lambda r: r["benchmark"]):
        w.writerow(["" if r.get(c) is None else r[c] for c in CSV_COLUMNS])
    return out.getvalue()
