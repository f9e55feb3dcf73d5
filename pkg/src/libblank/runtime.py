"""Deterministic replay of a trace through the blanking runtime.

Library functions start blanked. At every application call site the
predictor names a chain; the prediction probe blanks the previous chain
(lazily: not at all if the new prediction is the same set) and copies the
new one back. Entering a function that is still blank is an underprediction
and triggers an audit against a clean replay of the call from the argument
snapshot. Functions that cannot be instrumented or are too small to blank
stay loaded throughout and are counted as permanent exposure.
"""
from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

from .dominance import reachable_library_functions
from .divergence import DivergenceReport, classify_divergence, static_chain
from .ir import Program, SchemaError
from .planner import SitePlan
from .predictor import UNKNOWN_SITE, DecisionTreeModel, predict_site
from .profiler import (BlockExec, FeatureTracker, LibEnter, LibExit, SiteReached,
                       TraceError, TraceEvent, TrainingSummary)


class Mode(str, enum.Enum):
    SET = "set"
    FULL_CHAIN = "fullchain"


class Verdict(str, enum.Enum):
    LEGAL = "Legal"
    ATTACK = "Attack"
    UNKNOWN = "Unknown"


class Kind(str, enum.Enum):
    UNDER = "Under"
    OVER = "Over"


@dataclass(frozen=True)
class Policy:
    mode: Mode = Mode.SET
    lazy_blanking: bool = True
    audit_latency_us: float | None = None
    on_alarm: str = "continue"
    unknown_site: str = "conservative"               # or "empty"
    attack_jumps: tuple[tuple[int, int], ...] = ()   # (trace event index, target fn)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.unknown_site not in ("conservative", "empty"):
            raise ValueError(f"unknown-site policy must be 'conservative' or 'empty', "
                             f"got {self.unknown_site!r}")
        if self.on_alarm != "continue":
            raise NotImplementedError(f"alarm policy {self.on_alarm!r} is not implemented; "
                                      "only 'continue' is supported")


# --------------------------------------------------------------------------
# event log


@dataclass(frozen=True)
class Predict:
    site: int
    label: int
    fns: tuple[int, ...]


@dataclass(frozen=True)
class Copy:
    fn: int


@dataclass(frozen=True)
class Blank:
    fns: tuple[int, ...]


@dataclass(frozen=True)
class Hit:
    fn: int


@dataclass(frozen=True)
class Mispredict:
    fn: int
    site: int
    kind: Kind


@dataclass(frozen=True)
class Audit:
    fn: int
    verdict: Verdict
    latency_us: float


@dataclass(frozen=True)
class Fault:
    fn: int


@dataclass(frozen=True)
class Return:
    site: int


SimEvent = Union[Predict, Copy, Blank, Hit, Mispredict, Audit, Fault, Return]

STATIC_LABEL = -1      # prediction taken from the static chain of a non-divergent callee
CONSERVATIVE_LABEL = -2  # unseen call site, conservative subset


def sim_event_to_json(e: SimEvent) -> dict:
    if isinstance(e, Predict):
        return {"ev": "predict", "site": e.site, "label": e.label, "fns": list(e.fns)}
    if isinstance(e, Copy):
        return {"ev": "copy", "fn": e.fn}
    if isinstance(e, Blank):
        return {"ev": "blank", "fns": list(e.fns)}
    if isinstance(e, Hit):
        return {"ev": "hit", "fn": e.fn}
    if isinstance(e, Mispredict):
        return {"ev": "mispredict", "fn": e.fn, "site": e.site, "kind": e.kind.value}
    if isinstance(e, Audit):
        return {"ev": "audit", "fn": e.fn, "verdict": e.verdict.value, "latency_us": e.latency_us}
    if isinstance(e, Fault):
        return {"ev": "fault", "fn": e.fn}
    return {"ev": "return", "site": e.site}


def sim_event_from_json(d) -> SimEvent:
    try:
        return _event_from_json(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad simulator event {d!r}: {exc}") from None


def _event_from_json(d) -> SimEvent:
    ev = d["ev"]
    if ev == "predict":
        return Predict(d["site"], d["label"], tuple(d["fns"]))
    if ev == "copy":
        return Copy(d["fn"])
    if ev == "blank":
        return Blank(tuple(d["fns"]))
    if ev == "hit":
        return Hit(d["fn"])
    if ev == "mispredict":
        return Mispredict(d["fn"], d["site"], Kind(d["kind"]))
    if ev == "audit":
        return Audit(d["fn"], Verdict(d["verdict"]), d["latency_us"])
    if ev == "fault":
        return Fault(d["fn"])
    if ev == "return":
        return Return(d["site"])
    raise SchemaError(f"unknown simulator event {ev!r}")


# --------------------------------------------------------------------------
# clean replay oracle


class Region(NamedTuple):
    bounds: tuple[tuple[float | None, float | None], ...]
    chain: tuple[int, ...]
    sequence: tuple[int, ...]
    safe: bool

    def contains(self, args: Sequence[float]) -> bool:
        if len(args) < len(self.bounds):
            return False
        for (lo, hi), x in zip(self.bounds, args):
            if lo is not None and not x > lo:
                return False
            if hi is not None and not x <= hi:
                return False
        return True


class CleanReplayOracle:
    """Ground-truth behaviour of library entry functions keyed by argument region.

    Stands in for re-running the call on the snapshot arguments under a
    memory-safety checker: ``lookup`` returns the chain that call would
    take and whether it is memory-safe.
    """

    def __init__(self, entries: Mapping[int, list[Region]], audit_latency_us: float = 0.0):
        self.entries = {int(k): list(v) for k, v in entries.items()}
        self.audit_latency_us = float(audit_latency_us)

    def lookup(self, fn: int, args: Sequence[float]) -> Region | None:
        for r in self.entries.get(fn, ()):
            if r.contains(args):
                return r
        return None

    @classmethod
    def from_json(cls, doc) -> "CleanReplayOracle":
        if isinstance(doc, str):
            doc = json.loads(doc)
        try:
            entries = {}
            for e in doc["entries"]:
                entries[int(e["fn"])] = [
                    Region(tuple((lo, hi) for lo, hi in r["bounds"]), tuple(r["chain"]),
                           tuple(r.get("sequence", r["chain"])), bool(r.get("safe", True)))
                    for r in e["regions"]]
            return cls(entries, doc.get("audit_latency_us", 0.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad oracle document: {exc}") from None

    def to_json(self) -> dict:
        return {
            "audit_latency_us": self.audit_latency_us,
            "entries": [{"fn": fn, "regions": [
                {"bounds": [list(b) for b in r.bounds], "chain": list(r.chain),
                 "sequence": list(r.sequence), "safe": r.safe} for r in regions]}
                for fn, regions in sorted(self.entries.items())],
        }


def audit(fn: int, snapshot_args: Sequence[float], observed_chain: Sequence[int],
          predicted_chain: Sequence[int], reference: CleanReplayOracle | None,
          mode: Mode = Mode.SET, latency_us: float | None = None) -> tuple[Verdict, float]:
    """Classifies an underprediction as a legal misprediction or an attack.

    The clean replay runs the entry function on the snapshot arguments. If
    it is unsafe the call is an attack; if it reproduces what executed the
    miss was an honest misprediction. Any other outcome means the arguments
    changed after the snapshot, whether the clean chain equals
    ``predicted_chain`` (the usual tampering signature) or not.
    """
    latency = float(latency_us if latency_us is not None
                    else (reference.audit_latency_us if reference else 0.0))
    region = reference.lookup(fn, snapshot_args) if reference is not None else None
    if region is None:
        return Verdict.UNKNOWN, latency
    if not region.safe:
        return Verdict.ATTACK, latency
    if mode is Mode.SET:
        same = set(region.chain) == set(observed_chain)
    else:
        same = tuple(region.sequence) == tuple(observed_chain)
    return (Verdict.LEGAL if same else Verdict.ATTACK), latency


# --------------------------------------------------------------------------
# loader state


@dataclass
class LoaderState:
    permanent: frozenset[int]
    loaded: set[int] = field(default_factory=set)     # non-permanent, currently unblanked
    last_predicted_label: int | None = None
    last_predicted: frozenset[int] | None = None
    current_site: int | None = None
    mode: Mode = Mode.SET
    lazy_blanking: bool = True

    def is_loaded(self, fn: int) -> bool:
        return fn in self.permanent or fn in self.loaded

    def copy(self, fn: int) -> bool:
        """Unblanks ``fn``; returns False when nothing changed."""
        if self.is_loaded(fn):
            return False
        self.loaded.add(fn)
        return True

    def blank(self, fns: Iterable[int]) -> tuple[int, ...]:
        gone = tuple(sorted(f for f in fns if f in self.loaded))
        self.loaded.difference_update(gone)
        return gone

    def exposed(self) -> frozenset[int]:
        return self.permanent | self.loaded


def inject_attack_jump(state: LoaderState, target_fn: int) -> Union[Fault, Hit]:
    """Control transfer to an arbitrary library function: faults unless it is loaded."""
    return Hit(target_fn) if state.is_loaded(target_fn) else Fault(target_fn)


# --------------------------------------------------------------------------
# report


@dataclass
class SiteStats:
    calls: int = 0
    hits: int = 0
    underpredictions: int = 0
    overpredictions: int = 0

    @property
    def accuracy(self) -> Fraction:
        if not self.calls:
            return Fraction(100)
        return Fraction(100 * (self.calls - self.underpredictions - self.overpredictions), self.calls)

    def to_json(self) -> dict:
        return {"calls": self.calls, "hits": self.hits,
                "underpredictions": self.underpredictions,
                "overpredictions": self.overpredictions,
                "accuracy": _num(self.accuracy)}


@dataclass
class SimulationReport:
    mode: Mode
    lazy_blanking: bool
    per_site: dict[int, SiteStats]
    total: SiteStats
    permanent_count: int
    permanent_gadgets: int
    c_max: int
    max_exposed_functions: int
    max_exposed_gadgets: int
    worst_case_gadget_set: tuple[int, ...]
    max_exposed_set: tuple[int, ...]
    called_functions: tuple[int, ...]
    faults: int
    jump_hits: int
    attacks_detected: int
    audits: dict[str, int]
    audit_latencies: list[float]
    invariant_violations: int

    @property
    def accuracy(self) -> Fraction:
        return self.total.accuracy

    def breakdown(self) -> dict:
        mis = self.total.underpredictions + self.total.overpredictions
        if not mis:
            return {"under_percent": 0.0, "over_percent": 0.0}
        return {"under_percent": _num(Fraction(100 * self.total.underpredictions, mis)),
                "over_percent": _num(Fraction(100 * self.total.overpredictions, mis))}

    def to_json(self) -> dict:
        lat = self.audit_latencies
        geo = math.exp(sum(math.log(x) for x in lat) / len(lat)) if lat and min(lat) > 0 else 0.0
        return {
            "mode": self.mode.value,
            "lazy_blanking": self.lazy_blanking,
            "calls": self.total.calls,
            "hits": self.total.hits,
            "underpredictions": self.total.underpredictions,
            "overpredictions": self.total.overpredictions,
            "accuracy": _num(self.accuracy),
            "breakdown": self.breakdown(),
            "per_site": {str(s): st.to_json() for s, st in sorted(self.per_site.items())},
            "permanent_count": self.permanent_count,
            "c_max": self.c_max,
            "max_exposed_functions": self.max_exposed_functions,
            "max_exposed_gadgets": self.max_exposed_gadgets,
            "max_exposed_set": list(self.max_exposed_set),
            "worst_case_gadget_set": list(self.worst_case_gadget_set),
            "called_functions": list(self.called_functions),
            "faults": self.faults,
            "jump_hits": self.jump_hits,
            "attacks_detected": self.attacks_detected,
            "audits": dict(sorted(self.audits.items())),
            "audit_count": len(lat),
            "audit_latency_geomean_us": round(geo, 6),
            "invariant_violations": self.invariant_violations,
        }


def _num(x: Fraction) -> float:
    return round(float(x), 6)


# --------------------------------------------------------------------------
# simulator


class _Call(NamedTuple):
    site: int
    callee: int
    snapshot: tuple
    predicted: tuple[int, ...]


class Simulator:
    def __init__(self, program: Program, model: DecisionTreeModel, summary: TrainingSummary,
                 plans: dict[int, SitePlan], policy: Policy = Policy(),
                 oracle: CleanReplayOracle | None = None,
                 divergence: DivergenceReport | None = None):
        self.p = program
        self.model = model
        self.summary = summary
        self.plans = plans
        self.policy = policy
        self.oracle = oracle
        self.div = divergence if divergence is not None else classify_divergence(program)
        self.table = summary.chains if policy.mode is Mode.SET else summary.sequences
        missing = sorted(lab for lab in model.labels() if lab not in self.table)
        if missing:
            raise SchemaError(f"model predicts labels missing from the chain table: {missing}")
        self.state = LoaderState(program.permanent_ids, mode=policy.mode,
                                 lazy_blanking=policy.lazy_blanking)
        self.tracker = FeatureTracker(plans)
        self.log: list[SimEvent] = []
        self.per_site: dict[int, SiteStats] = defaultdict(SiteStats)
        self.total = SiteStats()
        self.called: set[int] = set()
        self.audits = {v.value: 0 for v in Verdict}
        self.latencies: list[float] = []
        self.attacks = 0
        self.faults = 0
        self.jump_hits = 0
        gad = {i: program.functions[i].gadget_count for i in program.library_ids}
        self._gadgets = gad
        self.perm_gadgets = sum(gad[i] for i in program.permanent_ids)
        self.c_max = 0
        self.max_fns = len(program.permanent_ids)
        self.max_gadgets = self.perm_gadgets
        self.max_set: frozenset[int] = frozenset(program.permanent_ids)
        self.worst_gadget_set: frozenset[int] = frozenset(program.permanent_ids)
        self._jumps: dict[int, list[int]] = defaultdict(list)
        for idx, target in policy.attack_jumps:
            self._jumps[idx].append(target)
        self._pending: _Call | None = None
        self._conservative_cache: dict[int, tuple[int, ...]] = {}

    # -- bookkeeping
    def _emit(self, ev: SimEvent) -> None:
        self.log.append(ev)
        if isinstance(ev, (Copy, Blank)):
            self._track_exposure()

    def _track_exposure(self) -> None:
        n = len(self.state.loaded)
        if n > self.c_max:
            self.c_max = n
        total = len(self.state.permanent) + n
        if total > self.max_fns:
            self.max_fns = total
            self.max_set = self.state.exposed()
        g = self.perm_gadgets + sum(self._gadgets.get(f, 0) for f in self.state.loaded)
        if g > self.max_gadgets:
            self.max_gadgets = g
            self.worst_gadget_set = self.state.exposed()

    def _copy(self, fn: int) -> None:
        if self.state.copy(fn):
            self._emit(Copy(fn))

    def _blank(self, fns: Iterable[int]) -> None:
        gone = self.state.blank(fns)
        if gone:
            self._emit(Blank(gone))

    # -- prediction probe
    def _predict(self, site: int, snapshot: tuple) -> tuple[int, tuple[int, ...]]:
        callee = self.plans[site].callee
        if self.policy.mode is Mode.SET and not self.div.is_divergent(callee) \
                and callee in self.p.library_ids:
            return STATIC_LABEL, static_chain(self.p, callee)
        feats = self.tracker.features(site, snapshot)
        width = self.model.n_features
        if len(feats) < width:
            feats = feats + (0,) * (width - len(feats))
        label = predict_site(self.model, feats, self.summary.sites)
        if label is UNKNOWN_SITE:
            if self.policy.unknown_site == "empty":
                return CONSERVATIVE_LABEL, ()
            return CONSERVATIVE_LABEL, self._conservative(callee)
        return label, self.table.chain(label)

    def _conservative(self, callee: int) -> tuple[int, ...]:
        """Static chain from the entry function, cut down to functions training saw
        it reach; empty if the entry function itself was never seen."""
        if callee not in self._conservative_cache:
            reach = reachable_library_functions(self.p, {callee}).functions
            out: list[int] = []
            for _, chain in self.table.items():
                if chain and chain[0] == callee:
                    out.extend(f for f in chain if f in reach and f not in out)
            self._conservative_cache[callee] = tuple(out)
        return self._conservative_cache[callee]

    def _probe(self, ev: SiteReached) -> None:
        if ev.site not in self.plans:
            raise TraceError(f"unknown call site {ev.site}")
        label, chain = self._predict(ev.site, ev.snapshot)
        st = self.state
        predicted = frozenset(chain)
        if self.policy.mode is Mode.SET and st.lazy_blanking and st.last_predicted == predicted:
            self._blank(st.loaded - predicted)
        else:
            self._blank(st.loaded)
        self._emit(Predict(ev.site, label, chain))
        if self.policy.mode is Mode.SET:
            for f in chain:
                self._copy(f)
        st.last_predicted = predicted
        st.last_predicted_label = label
        st.current_site = ev.site
        self._pending = _Call(ev.site, self.plans[ev.site].callee, tuple(ev.snapshot), chain)

    # -- one dynamic library call
    def _run_call(self, call: _Call | None, events: list[tuple[int, TraceEvent]]) -> None:
        if call is None:
            raise TraceError("library entry without a preceding site event", events[0][0])
        observed: list[int] = []
        sequence: list[int] = []
        for _, ev in events:
            if isinstance(ev, LibEnter):
                sequence.append(ev.fn)
                if ev.fn not in observed:
                    observed.append(ev.fn)
        self.called.update(observed)
        under = False
        audited: Verdict | None = None
        st = self.state
        stack: list[int] = []
        pos = 0
        seq = call.predicted
        for index, ev in events:
            if isinstance(ev, LibEnter):
                f = ev.fn
                if self.policy.mode is Mode.SET:
                    if st.is_loaded(f):
                        self._emit(Hit(f))
                    else:
                        under = True
                        audited = self._alarm(f, call, observed)
                        self._copy(f)
                else:
                    expected = pos < len(seq) and seq[pos] == f
                    if expected:
                        pos += 1
                    elif f not in st.permanent:
                        under = True
                        audited = self._alarm(f, call, sequence)
                        if f in seq[pos:]:
                            pos = seq.index(f, pos) + 1
                    self._blank(st.loaded - {f})
                    self._copy(f)
                    if expected or f in st.permanent:
                        self._emit(Hit(f))
                stack.append(f)
            elif isinstance(ev, LibExit):
                stack.pop()
                if stack and self.policy.mode is Mode.FULL_CHAIN:
                    caller = stack[-1]
                    self._blank(st.loaded - {caller})
                    self._copy(caller)
            elif isinstance(ev, BlockExec):
                self.tracker.block(ev.fn, ev.block)
            else:
                raise TraceError("site event inside a library call", index)
            self._fire_jumps(index)
        self._finish(call, observed, under, audited,
                     over_count=(len(seq) - pos) if self.policy.mode is Mode.FULL_CHAIN else None)

    def _alarm(self, f: int, call: _Call, observed: Sequence[int]) -> Verdict:
        self._emit(Mispredict(f, call.site, Kind.UNDER))
        verdict, latency = audit(call.callee, call.snapshot, observed, call.predicted,
                                 self.oracle, self.policy.mode, self.policy.audit_latency_us)
        self._emit(Audit(call.callee, verdict, latency))
        self.audits[verdict.value] += 1
        self.latencies.append(latency)
        return verdict

    def _finish(self, call: _Call, observed: Sequence[int], under: bool,
                verdict: Verdict | None, over_count: int | None = None) -> None:
        st = self.state
        entered = set(observed)
        if over_count is None:
            extra = [f for f in call.predicted if f not in entered and f not in st.permanent]
        else:
            extra = [f for f in call.predicted[len(call.predicted) - over_count:]
                     if f not in st.permanent] if over_count > 0 else []
        if not under:
            for f in extra:
                self._emit(Mispredict(f, call.site, Kind.OVER))
        stats = self.per_site[call.site]
        for s in (stats, self.total):
            s.calls += 1
            if under:
                s.underpredictions += 1
            elif extra:
                s.overpredictions += 1
            else:
                s.hits += 1
        if verdict is Verdict.ATTACK:
            self.attacks += 1
        self._emit(Return(call.site))
        if not st.lazy_blanking:
            self._blank(st.loaded)
        self._pending = None

    def _fire_jumps(self, index: int) -> None:
        for target in self._jumps.get(index, ()):
            ev = inject_attack_jump(self.state, target)
            self._emit(ev)
            if isinstance(ev, Fault):
                self.faults += 1
            else:
                self.jump_hits += 1

    # -- driver
    def run(self, trace: Iterable[TraceEvent], until: int | None = None) -> "Simulator":
        it: Iterator[tuple[int, TraceEvent]] = iter(enumerate(trace))
        for index, ev in it:
            if until is not None and index >= until:
                break
            if isinstance(ev, BlockExec):
                self.tracker.block(ev.fn, ev.block)
            elif isinstance(ev, SiteReached):
                if self._pending is not None:
                    self._finish(self._pending, (), False, None,
                                 0 if self.policy.mode is Mode.FULL_CHAIN else None)
                self._probe(ev)
            elif isinstance(ev, LibEnter):
                events = [(index, ev)]
                depth = 1
                while depth:
                    try:
                        j, nxt = next(it)
                    except StopIteration:
                        raise TraceError(f"trace ends inside library call to {ev.fn}") from None
                    events.append((j, nxt))
                    if isinstance(nxt, LibEnter):
                        depth += 1
                    elif isinstance(nxt, LibExit):
                        depth -= 1
                _check_nesting(events)
                self._run_call(self._pending, events)
                continue
            else:
                raise TraceError(f"unmatched exit of function {ev.fn}", index)
            self._fire_jumps(index)
        return self

    def finish(self) -> tuple[SimulationReport, list[SimEvent]]:
        if self._pending is not None:
            self._finish(self._pending, (), False, None,
                         0 if self.policy.mode is Mode.FULL_CHAIN else None)
        violations = check_invariants(self.log, self.state.permanent, self.policy)
        report = SimulationReport(
            mode=self.policy.mode, lazy_blanking=self.policy.lazy_blanking,
            per_site=dict(self.per_site), total=self.total,
            permanent_count=len(self.state.permanent), permanent_gadgets=self.perm_gadgets,
            c_max=self.c_max, max_exposed_functions=self.max_fns,
            max_exposed_gadgets=self.max_gadgets,
            worst_case_gadget_set=tuple(sorted(self.worst_gadget_set)),
            max_exposed_set=tuple(sorted(self.max_set)),
            called_functions=tuple(sorted(self.called)),
            faults=self.faults, jump_hits=self.jump_hits, attacks_detected=self.attacks,
            audits=self.audits, audit_latencies=self.latencies,
            invariant_violations=len(violations))
        return report, self.log


def _check_nesting(events: list[tuple[int, TraceEvent]]) -> None:
    stack = []
    for index, ev in events:
        if isinstance(ev, LibEnter):
            stack.append(ev.fn)
        elif isinstance(ev, LibExit):
            if not stack or stack[-1] != ev.fn:
                raise TraceError(f"unmatched exit of function {ev.fn}", index)
            stack.pop()
        elif isinstance(ev, SiteReached):
            raise TraceError("site event inside a library call", index)


def simulate(program: Program, trace: Iterable[TraceEvent], model: DecisionTreeModel,
             summary: TrainingSummary, plans: dict[int, SitePlan], policy: Policy = Policy(),
             oracle: CleanReplayOracle | None = None,
             divergence: DivergenceReport | None = None) -> tuple[SimulationReport, list[SimEvent]]:
    sim = Simulator(program, model, summary, plans, policy, oracle, divergence)
    return sim.run(trace).finish()


# --------------------------------------------------------------------------
# invariant pass over the log


def check_invariants(log: Sequence[SimEvent], permanent: frozenset[int],
                     policy: Policy) -> list[str]:
    """Replays Copy/Blank events and checks the loaded-set invariants at every event.

    Set mode with lazy blanking: loaded functions are a subset of the last
    prediction plus functions copied after an underprediction since then.
    Full-chain mode: at most one non-permanent function is loaded.
    """
    loaded: set[int] = set()
    window: frozenset[int] = frozenset()
    copied_after_miss: set[int] = set()
    last_under: int | None = None
    out = []
    for i, ev in enumerate(log):
        if isinstance(ev, Predict):
            window = frozenset(ev.fns)
            copied_after_miss = set()
        elif isinstance(ev, Mispredict) and ev.kind is Kind.UNDER:
            last_under = ev.fn
        elif isinstance(ev, Copy):
            if ev.fn in loaded:
                out.append(f"{i}: copy of already loaded function {ev.fn}")
            loaded.add(ev.fn)
            if ev.fn == last_under:
                copied_after_miss.add(ev.fn)
        elif isinstance(ev, Blank):
            for f in ev.fns:
                if f not in loaded:
                    out.append(f"{i}: blank of function {f} that is not loaded")
            loaded.difference_update(ev.fns)
        if loaded & permanent:
            out.append(f"{i}: permanent function tracked as copied")
        if policy.mode is Mode.FULL_CHAIN:
            if len(loaded) > 1:
                out.append(f"{i}: {len(loaded)} chain functions loaded in full-chain mode")
        elif policy.lazy_blanking:
            stray = loaded - window - copied_after_miss
            if stray:
                out.append(f"{i}: functions {sorted(stray)} outside the current prediction")
    return out
