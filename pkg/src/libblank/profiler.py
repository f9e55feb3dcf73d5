"""Trace ingestion and training-table construction.

Traces are JSONL, one event per line::

    {"ev":"bb","fn":3,"bb":2}
    {"ev":"site","site":17,"args":[5, 2.5]}            # optional "snap":[...]
    {"ev":"enter","fn":40}
    {"ev":"exit","fn":40}

``snap`` carries the argument values copied at the snapshot point; when it is
absent the call-time ``args`` are used. Feature vectors are always built
from the snapshot values, the library executes with ``args``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Union

from .ir import SchemaError
from .planner import SitePlan


class TraceError(ValueError):
    def __init__(self, msg, index=None):
        super().__init__(msg if index is None else f"event {index}: {msg}")
        self.index = index


@dataclass(frozen=True)
class BlockExec:
    fn: int
    block: int


@dataclass(frozen=True)
class SiteReached:
    site: int
    args: tuple
    snap: tuple | None = None

    @property
    def snapshot(self) -> tuple:
        return self.args if self.snap is None else self.snap


@dataclass(frozen=True)
class LibEnter:
    fn: int


@dataclass(frozen=True)
class LibExit:
    fn: int


TraceEvent = Union[BlockExec, SiteReached, LibEnter, LibExit]


def event_from_json(d) -> TraceEvent:
    try:
        ev = d["ev"]
        if ev == "bb":
            return BlockExec(int(d["fn"]), int(d["bb"]))
        if ev == "site":
            snap = d.get("snap")
            return SiteReached(int(d["site"]), tuple(d["args"]),
                               None if snap is None else tuple(snap))
        if ev == "enter":
            return LibEnter(int(d["fn"]))
        if ev == "exit":
            return LibExit(int(d["fn"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad trace event {d!r}: {exc}") from None
    raise SchemaError(f"unknown trace event kind {d.get('ev')!r}")


def event_to_json(e: TraceEvent) -> dict:
    if isinstance(e, BlockExec):
        return {"ev": "bb", "fn": e.fn, "bb": e.block}
    if isinstance(e, SiteReached):
        d = {"ev": "site", "site": e.site, "args": list(e.args)}
        if e.snap is not None:
            d["snap"] = list(e.snap)
        return d
    if isinstance(e, LibEnter):
        return {"ev": "enter", "fn": e.fn}
    return {"ev": "exit", "fn": e.fn}


def read_trace(path) -> Iterator[TraceEvent]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield event_from_json(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None


def write_trace(events: Iterable[TraceEvent], fh) -> None:
    for e in events:
        fh.write(json.dumps(event_to_json(e), separators=(",", ":")))
        fh.write("\n")


# --------------------------------------------------------------------------
# features


class FeatureTracker:
    """Holds the "last executed watched block" slot of every (site, argument)."""

    def __init__(self, plans: dict[int, SitePlan]):
        self.plans = plans
        self.watch: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for sp in plans.values():
            for _, ws in sp.arg_features:
                for block, fid in ws:
                    self.watch.setdefault((sp.fn, block), []).append((sp.site_id, fid))
        self.slots: dict[tuple[int, int], int] = {}

    def block(self, fn: int, block: int) -> None:
        for key in self.watch.get((fn, block), ()):
            self.slots[key] = block

    def features(self, site: int, values) -> tuple:
        sp = self.plans[site]
        vec = [site]
        for _, ws in sp.arg_features:
            vec.append(self.slots.get((site, ws[0][1]), 0))
        if len(values) < len(sp.value_features):
            raise TraceError(f"site {site} expects {len(sp.value_features)} argument values, "
                             f"got {len(values)}")
        for arg, _ in sp.value_features:
            vec.append(values[arg])
        return tuple(vec)


# --------------------------------------------------------------------------
# chains


class ChainTable:
    """Bijection between integer labels and call chains (tuples of function ids).

    Label 0 is the empty chain. ``canonical`` renumbers the rest by
    (length, contents) so labels do not depend on trace order.
    """

    def __init__(self, chains: Iterable[tuple[int, ...]] = ()):
        self._by_label: list[tuple[int, ...]] = [()]
        self._by_chain: dict[tuple[int, ...], int] = {(): 0}
        for c in chains:
            self.intern(c)

    def intern(self, chain) -> int:
        chain = tuple(chain)
        lab = self._by_chain.get(chain)
        if lab is None:
            lab = len(self._by_label)
            self._by_label.append(chain)
            self._by_chain[chain] = lab
        return lab

    def chain(self, label: int) -> tuple[int, ...]:
        return self._by_label[label]

    def label(self, chain) -> int | None:
        return self._by_chain.get(tuple(chain))

    def __contains__(self, label) -> bool:
        return isinstance(label, int) and 0 <= label < len(self._by_label)

    def __len__(self) -> int:
        return len(self._by_label)

    def items(self):
        return enumerate(self._by_label)

    def canonical(self) -> tuple["ChainTable", dict[int, int]]:
        ordered = sorted(self._by_label[1:], key=lambda c: (len(c), c))
        table = ChainTable(ordered)
        remap = {old: table.label(c) for old, c in enumerate(self._by_label)}
        return table, remap

    def to_json(self) -> list:
        return [[lab, list(c)] for lab, c in enumerate(self._by_label)]

    @classmethod
    def from_json(cls, doc) -> "ChainTable":
        t = cls()
        for expect, (lab, fns) in enumerate(doc):
            if lab != expect:
                raise SchemaError(f"chain labels must be dense, got {lab} at position {expect}")
            if expect == 0:
                if fns:
                    raise SchemaError("label 0 is reserved for the empty chain")
                continue
            if t.intern(tuple(int(x) for x in fns)) != lab:
                raise SchemaError(f"duplicate chain for label {lab}")
        return t

    def __eq__(self, other):
        return isinstance(other, ChainTable) and self._by_label == other._by_label


@dataclass(frozen=True)
class ProfileRecord:
    site_id: int
    features: tuple
    chain_label: int
    sequence_label: int = 0


class Profile(NamedTuple):
    records: list[ProfileRecord]
    chains: ChainTable
    sequences: ChainTable

    @property
    def sites(self) -> list[int]:
        return sorted({r.site_id for r in self.records})

    def summary_json(self) -> dict:
        return {"chains": self.chains.to_json(), "sequences": self.sequences.to_json(),
                "sites": self.sites}


class TrainingSummary(NamedTuple):
    """What the runtime needs from profiling besides the tree itself."""
    chains: ChainTable
    sequences: ChainTable
    sites: frozenset[int]

    @classmethod
    def from_json(cls, doc) -> "TrainingSummary":
        if isinstance(doc, str):
            doc = json.loads(doc)
        try:
            return cls(ChainTable.from_json(doc["chains"]),
                       ChainTable.from_json(doc.get("sequences", [[0, []]])),
                       frozenset(int(s) for s in doc.get("sites", [])))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad chain table document: {exc}") from None


class _CallWalker:
    """Tracks library call nesting for one trace and reports finished calls."""

    def __init__(self):
        self.stack: list[int] = []
        self.order: list[int] = []
        self.seen: set[int] = set()
        self.sequence: list[int] = []

    def enter(self, fn: int, index: int) -> bool:
        outermost = not self.stack
        if outermost:
            self.order, self.seen, self.sequence = [], set(), []
        self.stack.append(fn)
        self.sequence.append(fn)
        if fn not in self.seen:
            self.seen.add(fn)
            self.order.append(fn)
        return outermost

    def exit(self, fn: int, index: int) -> bool:
        if not self.stack or self.stack[-1] != fn:
            raise TraceError(f"unmatched exit of function {fn}", index)
        self.stack.pop()
        return not self.stack


def build_profile(traces, plans: dict[int, SitePlan]) -> Profile:
    """Builds training records from one trace or a list of traces.

    ``traces`` is an iterable of events, or a list of such iterables that
    share the label space. One record is produced per site event.
    """
    traces = list(traces)
    if traces and not isinstance(traces[0], (BlockExec, SiteReached, LibEnter, LibExit)):
        streams = traces
    else:
        streams = [traces]

    chains, seqs = ChainTable(), ChainTable()
    raw: list[tuple[int, tuple, int, int]] = []
    for stream in streams:
        tracker = FeatureTracker(plans)
        walker = _CallWalker()
        pending: tuple[int, tuple] | None = None
        for index, ev in enumerate(stream):
            if isinstance(ev, BlockExec):
                tracker.block(ev.fn, ev.block)
            elif isinstance(ev, SiteReached):
                if walker.stack:
                    raise TraceError("site event inside a library call", index)
                if ev.site not in plans:
                    raise TraceError(f"unknown call site {ev.site}", index)
                if pending is not None:
                    raw.append((pending[0], pending[1], 0, 0))
                pending = (ev.site, tracker.features(ev.site, ev.snapshot))
            elif isinstance(ev, LibEnter):
                if walker.enter(ev.fn, index) and pending is None:
                    raise TraceError(f"library entry to {ev.fn} without a preceding site event", index)
            elif isinstance(ev, LibExit):
                if walker.exit(ev.fn, index):
                    raw.append((pending[0], pending[1], chains.intern(walker.order),
                                seqs.intern(walker.sequence)))
                    pending = None
        if walker.stack:
            raise TraceError(f"trace ends inside library call to {walker.stack[-1]}")
        if pending is not None:
            raw.append((pending[0], pending[1], 0, 0))

    chains, cmap = chains.canonical()
    seqs, smap = seqs.canonical()
    records = [ProfileRecord(s, f, cmap[c], smap[q]) for s, f, c, q in raw]
    return Profile(records, chains, seqs)


# --------------------------------------------------------------------------
# CSV


def records_to_csv(records: list[ProfileRecord], label: str = "chain") -> str:
    width = max((len(r.features) for r in records), default=1)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["site"] + [f"f{i}" for i in range(width)] + ["label"])
    for r in records:
        lab = r.chain_label if label == "chain" else r.sequence_label
        feats = list(r.features) + [0] * (width - len(r.features))
        w.writerow([r.site_id] + [_fmt(v) for v in feats] + [lab])
    return out.getvalue()


def records_from_csv(text: str) -> list[ProfileRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:1] != ["site"] or rows[0][-1:] != ["label"]:
        raise SchemaError("training CSV header must be 'site,f0,...,label'")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(rows[0]):
            raise SchemaError(f"training CSV line {lineno}: expected {len(rows[0])} columns")
        try:
            out.append(ProfileRecord(int(row[0]), tuple(_num(v) for v in row[1:-1]), int(row[-1])))
        except ValueError as exc:
            raise SchemaError(f"training CSV line {lineno}: {exc}") from None
    return out


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _num(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)
