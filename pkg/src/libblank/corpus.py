"""Seeded synthetic scenarios: a program, its ground-truth oracle and traces.

A library is a forest of call trees hanging off a set of entry functions.
Every library function takes one argument and passes it unchanged to its
callees; a "diamond" in a function's CFG branches on that argument
(``x <= bound`` takes the first successor), so the chain an entry function
runs is a step function of its argument and the oracle can be written down
as a list of half-open intervals.

Application functions are straight sequences of call-site gadgets:

* ``value``  passes an application parameter straight through
* ``const``  passes a literal
* ``rdf``    branches on a parameter and feeds a phi of two literals
* ``fnptr``  like ``rdf`` but the phi merges two function addresses and the
  callee is a dispatcher that calls whichever function it was handed

Mispredictions are introduced only deliberately, through "unseen region"
templates whose upper region never appears in the small and medium traces.
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from .ir import (BasicBlock, Branch, Call, Const, FnAddr, FunctionDef, Param, Phi, Program,
                 SSAValue)
from .profiler import BlockExec, LibEnter, LibExit, SiteReached, TraceEvent, write_trace
from .runtime import CleanReplayOracle, Region

SCALES = ("small", "medium", "large")
ATTACK_KINDS = ("tamper", "overflow", "benign")
SITE_KINDS = ("value", "const", "rdf", "fnptr")
OVERFLOW_LIMIT = 4080
POOL = 8


class SpecError(ValueError):
    """The scenario description is contradictory or out of range."""


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    count: int = 1


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "scenario"
    seed: int = 0
    n_app_functions: int = 3
    n_sites: int = 8
    n_lib_functions: int = 60
    n_reachable: int | None = None        # default: every library function is reachable
    n_entries: int = 6
    max_chain_depth: int = 4
    divergence_ratio: float = 0.3
    n_uninstrumentable: int = 1
    n_small: int = 1
    site_mix: tuple[tuple[str, float], ...] = (("value", 0.5), ("rdf", 0.2),
                                              ("const", 0.15), ("fnptr", 0.15))
    unseen_rate: float = 0.0
    unseen_mode: str = "mixed"            # mixed | under | over
    wide_large: bool = False              # large traces sample ten times wider intervals
    attacks: tuple[AttackSpec, ...] = ()
    trace_calls: tuple[tuple[str, int], ...] = (("small", 120), ("medium", 240), ("large", 480))
    audit_latency_us: float = 1500.0
    n_cve: int = 47

    def __post_init__(self):
        # sorted so equality ignores the order the mapping was written in
        object.__setattr__(self, "site_mix",
                           tuple(sorted((str(k), float(w)) for k, w in self.site_mix)))
        object.__setattr__(self, "trace_calls",
                           tuple(sorted((str(k), int(n)) for k, n in self.trace_calls)))
        object.__setattr__(self, "attacks", tuple(
            a if isinstance(a, AttackSpec) else AttackSpec(**a) for a in self.attacks))

    @property
    def reachable(self) -> int:
        return self.n_lib_functions if self.n_reachable is None else self.n_reachable

    def validate(self) -> None:
        if self.n_app_functions < 1 or self.n_sites < 1:
            raise SpecError("need at least one application function and one call site")
        if self.n_entries < 1:
            raise SpecError("need at least one library entry function")
        if self.max_chain_depth < 1:
            raise SpecError("max_chain_depth must be at least 1")
        if self.reachable > self.n_lib_functions:
            raise SpecError(f"n_reachable {self.reachable} exceeds n_lib_functions "
                            f"{self.n_lib_functions}")
        perm = self.n_uninstrumentable + self.n_small
        if self.n_entries + perm > self.reachable:
            raise SpecError(f"{self.n_entries} entries plus {perm} permanent functions do not fit "
                            f"in {self.reachable} reachable functions")
        if self.max_chain_depth > self.reachable:
            raise SpecError(f"chain depth {self.max_chain_depth} exceeds the library size")
        if not 0.0 <= self.divergence_ratio <= 1.0:
            raise SpecError("divergence_ratio must lie in [0, 1]")
        if not 0.0 <= self.unseen_rate < 1.0:
            raise SpecError("unseen_rate must lie in [0, 1)")
        if self.unseen_mode not in ("mixed", "under", "over"):
            raise SpecError(f"unknown unseen_mode {self.unseen_mode!r}")
        kinds = dict(self.site_mix)
        if set(kinds) - set(SITE_KINDS) or sum(kinds.values()) <= 0 or min(kinds.values()) < 0:
            raise SpecError(f"site_mix must weight a subset of {SITE_KINDS}")
        scales = dict(self.trace_calls)
        if set(scales) != set(SCALES) or min(scales.values()) < 1:
            raise SpecError(f"trace_calls needs a positive count for each of {SCALES}")
        for a in self.attacks:
            if a.kind not in ATTACK_KINDS or a.count < 1:
                raise SpecError(f"bad attack injection {a}")
        if self.n_cve < 1:
            raise SpecError("n_cve must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["site_mix"] = dict(self.site_mix)
        d["trace_calls"] = dict(self.trace_calls)
        d["attacks"] = [asdict(a) for a in self.attacks]
        return d

    @classmethod
    def from_json(cls, doc) -> "ScenarioSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise SpecError(f"unknown scenario fields: {sorted(extra)}")
        d = dict(doc)
        if "site_mix" in d and isinstance(d["site_mix"], dict):
            d["site_mix"] = tuple(d["site_mix"].items())
        if "trace_calls" in d and isinstance(d["trace_calls"], dict):
            d["trace_calls"] = tuple(d["trace_calls"].items())
        if "attacks" in d:
            d["attacks"] = tuple(AttackSpec(**a) for a in d["attacks"])
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise SpecError(str(exc)) from None


# --------------------------------------------------------------------------
# library construction


@dataclass
class _LibFn:
    id: int
    name: str
    segments: list = field(default_factory=list)   # ("call", g) | ("diamond", bound, [g..], [g..])
    size: int = 64
    gadgets: int = 4
    instrumentable: bool = True
    blankable: bool = True


class _Builder:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.lib: dict[int, _LibFn] = {}
        self.next_fn = 1000
        self.next_lib_site = 100000
        self.unsafe_above: dict[int, int] = {}

    def new_fn(self, name=None, **kw) -> _LibFn:
        fid = self.next_fn
        self.next_fn += 1
        size = kw.pop("size", self.rng.randint(48, 640))
        gadgets = kw.pop("gadgets", max(1, size // 20 + self.rng.randint(-2, 6)))
        f = _LibFn(fid, name or f"lf{fid}", size=size, gadgets=gadgets, **kw)
        self.lib[fid] = f
        return f

    # -- generic trees
    def build_forest(self, n_funcs: int, n_roots: int, helpers: list[int],
                     bounds_for_root) -> list[int]:
        """Creates ``n_funcs`` functions as ``n_roots`` call trees; returns the roots."""
        rng = self.rng
        depth_cap = self.spec.max_chain_depth
        quotas = [n_funcs // n_roots + (1 if i < n_funcs % n_roots else 0) for i in range(n_roots)]
        roots = []
        for quota in quotas:
            root = self.new_fn()
            roots.append(root.id)
            bounds = bounds_for_root()
            kids: dict[int, list[int]] = {root.id: []}
            level = {root.id: 1}
            left = quota - 1
            queue = [root.id]
            while queue and left > 0:
                fid = queue.pop(0)
                if level[fid] >= depth_cap:
                    continue
                for _ in range(min(left, rng.choice((1, 1, 2, 2, 3)))):
                    c = self.new_fn().id
                    kids[fid].append(c)
                    kids[c] = []
                    level[c] = level[fid] + 1
                    queue.append(c)
                    left -= 1
            while left > 0:
                # frontier exhausted under the depth cap: hang the rest anywhere legal
                open_ = [f for f in kids if level[f] < depth_cap]
                if not open_:
                    raise SpecError(f"max_chain_depth {depth_cap} cannot hold {quota} "
                                    "functions under one entry")
                fid = rng.choice(open_)
                c = self.new_fn().id
                kids[fid].append(c)
                kids[c] = []
                level[c] = level[fid] + 1
                left -= 1
            for fid in kids:
                children = list(kids[fid])
                if helpers and level[fid] < depth_cap and rng.random() < 0.35:
                    children.append(rng.choice(helpers))
                self._shape(self.lib[fid], children, bounds)
        return roots

    def _shape(self, f: _LibFn, children: list[int], bounds: Sequence[int]) -> None:
        rng = self.rng
        if children and rng.random() < self.spec.divergence_ratio:
            children = list(children)
            rng.shuffle(children)
            cut = rng.randint(0, len(children) - 1)
            straight, armed = children[:cut], children[cut:]
            split = rng.randint(1, len(armed)) if len(armed) > 1 else rng.randint(0, 1)
            arm0, arm1 = armed[:split], armed[split:]
            for g in straight[:len(straight) // 2]:
                f.segments.append(("call", g))
            f.segments.append(("diamond", rng.choice(bounds), arm0, arm1))
            for g in straight[len(straight) // 2:]:
                f.segments.append(("call", g))
        else:
            for g in children:
                f.segments.append(("call", g))

    # -- lowering to IR
    def lower(self, f: _LibFn) -> tuple[FunctionDef, dict[int, int]]:
        blocks: list[BasicBlock] = []
        bounds: dict[int, int] = {}
        cur_id, cur_calls = 0, []
        next_id = 1

        def call(g):
            self.next_lib_site += 1
            return Call(self.next_lib_site, g, (Param(0),))

        for seg in f.segments:
            if seg[0] == "call":
                cur_calls.append(call(seg[1]))
                continue
            _, bound, arm0, arm1 = seg
            a0, a1, join = next_id, next_id + 1, next_id + 2
            next_id += 3
            blocks.append(BasicBlock(cur_id, tuple(cur_calls) + (Branch(Param(0)),), (a0, a1)))
            bounds[cur_id] = bound
            blocks.append(BasicBlock(a0, tuple(call(g) for g in arm0), (join,)))
            blocks.append(BasicBlock(a1, tuple(call(g) for g in arm1), (join,)))
            cur_id, cur_calls = join, []
        blocks.append(BasicBlock(cur_id, tuple(cur_calls), ()))
        blocks.sort(key=lambda b: b.id)
        fd = FunctionDef(f.id, f.name, 0, tuple(blocks), size_bytes=f.size,
                         gadget_count=f.gadgets, instrumentable=f.instrumentable,
                         blankable=f.blankable, is_library=True)
        return fd, bounds


# --------------------------------------------------------------------------
# execution semantics


class Semantics:
    """Executable meaning of the generated library: branch bounds per block."""

    def __init__(self, program: Program, bounds: dict[tuple[int, int], int]):
        self.p = program
        self.bounds = bounds

    def run(self, fn: int, x, out: list | None = None) -> list:
        out = [] if out is None else out
        f = self.p.functions[fn]
        out.append(LibEnter(fn))
        blocks = f.block_map
        b = f.entry_block
        while True:
            blk = blocks[b]
            for ins in blk.instructions:
                if isinstance(ins, Call):
                    self.run(ins.callee, x, out)
            if not blk.successors:
                break
            if len(blk.successors) == 1:
                b = blk.successors[0]
            else:
                b = blk.successors[0] if x <= self.bounds[(fn, b)] else blk.successors[1]
        out.append(LibExit(fn))
        return out

    def chain(self, fn: int, x) -> tuple[tuple[int, ...], tuple[int, ...]]:
        seq = [e.fn for e in self.run(fn, x) if isinstance(e, LibEnter)]
        order: list[int] = []
        for g in seq:
            if g not in order:
                order.append(g)
        return tuple(order), tuple(seq)

    def boundaries(self, fn: int) -> list[int]:
        seen, stack, out = set(), [fn], set()
        while stack:
            g = stack.pop()
            if g in seen:
                continue
            seen.add(g)
            for (h, _), b in self.bounds.items():
                if h == g:
                    out.add(b)
            stack.extend(self.p.call_graph.get(g, {}))
        return sorted(out)

    def regions(self, fn: int, unsafe_above: int | None = None) -> list[Region]:
        bs = self.boundaries(fn)
        if unsafe_above is not None and unsafe_above not in bs:
            bs = sorted(bs + [unsafe_above])
        edges = [None] + bs + [None]
        out = []
        for lo, hi in zip(edges, edges[1:]):
            rep = hi if hi is not None else (lo + 1 if lo is not None else 0)
            chain, seq = self.chain(fn, rep)
            safe = unsafe_above is None or rep <= unsafe_above
            out.append(Region(((lo, hi),), chain, seq, safe))
        return out


# --------------------------------------------------------------------------
# application side


@dataclass
class _Site:
    id: int
    kind: str
    entry: int
    regions: list[tuple[float | None, float | None]]   # sampling regions (lo, hi]
    seen: list[int]                                      # indices of regions used for training
    unseen: list[int] = field(default_factory=list)
    param: int | None = None
    const: int | None = None
    arms: tuple = ()                                    # (value0, value1) for rdf/fnptr
    blocks: tuple[int, ...] = ()                        # (head, arm0, arm1, join) or (block,)
    fn: int = 0


@dataclass
class Scenario:
    spec: ScenarioSpec
    program: Program
    oracle: CleanReplayOracle
    traces: dict[str, list[TraceEvent]]
    cve: list[str]
    semantics: Semantics

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def put(name, text):
            path = out / name
            path.write_text(text)
            written.append(path)

        put("scenario.json", json.dumps(self.spec.to_json(), sort_keys=True, indent=1) + "\n")
        put("program.json", self.program.dumps() + "\n")
        put("oracle.json", json.dumps(self.oracle.to_json(), sort_keys=True) + "\n")
        put("cve.json", json.dumps(self.cve) + "\n")
        for scale in SCALES:
            path = out / f"trace.{scale}.jsonl"
            with open(path, "w") as fh:
                write_trace(self.traces[scale], fh)
            written.append(path)
        return written


def generate(spec: ScenarioSpec) -> Scenario:
    spec.validate()
    b = _Builder(spec)
    rng = b.rng

    # permanent helpers shared as leaves
    helpers = []
    for i in range(spec.n_uninstrumentable):
        helpers.append(b.new_fn(f"pin{i}", instrumentable=False).id)
    for i in range(spec.n_small):
        helpers.append(b.new_fn(f"tiny{i}", size=rng.randint(4, 13), gadgets=rng.randint(0, 1),
                                blankable=False).id)

    def root_bounds():
        return sorted(rng.sample(range(10, 100, 10), 2))

    # templates hanging off their own entries
    templates: dict[str, list[int]] = {}
    fixed = 0
    if spec.unseen_rate > 0:
        fixed += 3
    fixed += 3 * len(spec.attacks)
    kinds = _site_kinds(spec, rng)
    fixed += 3 * kinds.count("fnptr")
    n_generic = spec.reachable - len(helpers) - fixed
    if n_generic < spec.n_entries:
        raise SpecError("not enough reachable functions left for the requested entries")
    n_direct = sum(1 for k in kinds if k != "fnptr")
    if n_direct == 0:
        raise SpecError("every site is a function-pointer site; no site reaches the library trees")
    roots = b.build_forest(n_generic, min(spec.n_entries, n_direct), helpers, root_bounds)

    if spec.unseen_rate > 0:
        mode = spec.unseen_mode
        if mode == "mixed":
            mode = "under" if spec.seed % 2 == 0 else "over"
        e, g, extra = b.new_fn("qentry"), b.new_fn("qalloc"), b.new_fn("qrelease")
        e.segments.append(("call", g.id))
        if mode == "under":
            e.segments.append(("diamond", 50, [], [extra.id]))
        else:
            e.segments.append(("diamond", 50, [extra.id], []))
        templates["unseen"] = [e.id]
    for a in spec.attacks:
        if a.kind == "tamper":
            e = b.new_fn("grant_access")
            su, nu = b.new_fn("call_super_user"), b.new_fn("call_normal_user")
            e.segments.append(("diamond", 0, [su.id], [nu.id]))
        elif a.kind == "overflow":
            e = b.new_fn("resolve_path")
            g, ex = b.new_fn("path_copy"), b.new_fn("spawn_shell")
            e.segments.append(("call", g.id))
            e.segments.append(("diamond", OVERFLOW_LIMIT, [], [ex.id]))
            b.unsafe_above[e.id] = OVERFLOW_LIMIT
        else:
            e = b.new_fn("parse_number")
            g, slow = b.new_fn("scan_digits"), b.new_fn("parse_negative")
            e.segments.append(("call", g.id))
            e.segments.append(("diamond", 0, [slow.id], []))
        templates.setdefault(a.kind, []).append(e.id)

    # unreachable remainder
    rest = spec.n_lib_functions - spec.reachable
    if rest:
        b.build_forest(rest, max(1, rest // 8), [], root_bounds)

    # application sites
    sites: list[_Site] = []
    next_site = 1
    direct = 0
    for i, kind in enumerate(kinds):
        if kind == "fnptr":
            d = b.new_fn(f"dispatch{i}")
            t0, t1 = b.new_fn(f"callback{i}a"), b.new_fn(f"callback{i}b")
            d.segments.append(("diamond", t0.id, [t0.id], [t1.id]))
            entry = d.id
        else:
            entry = roots[direct % len(roots)]
            direct += 1
        sites.append(_Site(next_site, kind, entry, [], []))
        if kind == "fnptr":
            sites[-1].arms = (FnAddr(t0.id), FnAddr(t1.id))
        next_site += 1
    special: list[_Site] = []
    for key in sorted(templates):
        for e in templates[key]:
            special.append(_Site(next_site, "value", e, [], [], fn=-1))
            special[-1].const = key     # marker only
            next_site += 1

    # lower library
    funcs: list[FunctionDef] = []
    all_bounds: dict[tuple[int, int], int] = {}
    for fid in sorted(b.lib):
        fd, bounds = b.lower(b.lib[fid])
        funcs.append(fd)
        for blk, bound in bounds.items():
            all_bounds[(fid, blk)] = bound
    lib_prog = Program.of(funcs)
    sem = Semantics(lib_prog, all_bounds)

    # sampling regions per site
    for s in sites + special:
        regs = sem.regions(s.entry, b.unsafe_above.get(s.entry))
        s.regions = [r.bounds[0] for r in regs]
        s.seen = list(range(len(regs)))
    for s in special:
        tag = s.const
        s.const = None
        if tag == "unseen":
            s.unseen = [len(s.regions) - 1]
        elif tag == "tamper":
            s.unseen = [0]
        elif tag == "overflow":
            s.unseen = [len(s.regions) - 1]
        elif tag == "benign":
            s.unseen = [0]
        s.seen = [i for i in s.seen if i not in s.unseen]
        s.kind = f"template:{tag}"

    app_funcs = _build_app(spec, rng, sites, special)
    program = Program.of(app_funcs + funcs)
    sem = Semantics(program, all_bounds)

    entries = sorted({s.entry for s in sites + special})
    oracle = CleanReplayOracle(
        {e: sem.regions(e, b.unsafe_above.get(e)) for e in entries}, spec.audit_latency_us)

    traces = {scale: _trace(spec, sem, program, sites, special, scale) for scale in SCALES}

    lib_names = sorted(program.name_of(f) for f in program.library_ids)
    cve = sorted(random.Random(spec.seed * 7919 + 1).sample(lib_names, min(spec.n_cve, len(lib_names))))
    return Scenario(spec, program, oracle, traces, cve, sem)


def _site_kinds(spec: ScenarioSpec, rng: random.Random) -> list[str]:
    mix = dict(spec.site_mix)
    names = [k for k in SITE_KINDS if k in mix]     # canonical order; spec order is irrelevant
    weights = [mix[k] for k in names]
    kinds = []
    # deterministic coverage of every positively weighted kind, then weighted draws
    for k, w in zip(names, weights):
        if w > 0 and len(kinds) < spec.n_sites:
            kinds.append(k)
    while len(kinds) < spec.n_sites:
        kinds.append(rng.choices(names, weights)[0])
    return kinds


def _build_app(spec, rng, sites: list[_Site], special: list[_Site]) -> list[FunctionDef]:
    n = spec.n_app_functions
    groups: list[list[_Site]] = [[] for _ in range(n)]
    for i, s in enumerate(sites):
        groups[i % n].append(s)
    for s in special:
        groups.append([s])      # each template lives in its own host function
    out = []
    for fid, group in enumerate(groups):
        blocks: list[tuple[int, list, list]] = []
        params = 0
        next_block = 0
        next_val = 0
        for s in group:
            s.fn = fid
            if s.kind in ("rdf", "fnptr"):
                h, a0, a1, j = range(next_block, next_block + 4)
                next_block += 4
                s.param = params
                params += 1
                if s.kind == "fnptr":
                    v0, v1 = s.arms
                else:
                    vals = [_pick(rng, s.regions[i]) for i in s.seen]
                    c0 = vals[0]
                    c1 = vals[-1] if len(vals) > 1 else vals[0]
                    v0, v1 = Const(c0), Const(c1)
                s.arms = (v0, v1)
                dst = SSAValue(next_val)
                next_val += 1
                blocks.append((h, [Branch(Param(s.param))], [a0, a1]))
                blocks.append((a0, [], [j]))
                blocks.append((a1, [], [j]))
                blocks.append((j, [Phi(dst, ((a0, v0), (a1, v1))), Call(s.id, s.entry, (dst,))], []))
                s.blocks = (h, a0, a1, j)
            else:
                blk = next_block
                next_block += 1
                if s.kind == "const":
                    s.const = _pick(rng, s.regions[rng.choice(s.seen)])
                    arg = Const(s.const)
                else:
                    s.param = params
                    params += 1
                    arg = Param(s.param)
                blocks.append((blk, [Call(s.id, s.entry, (arg,))], []))
                s.blocks = (blk,)
        # chain gadgets: each gadget's exits flow into the next gadget's head
        heads = [s.blocks[0] for s in group]
        built = []
        for bid, instrs, succs in blocks:
            if not succs:
                owner = next(i for i, s in enumerate(group) if bid in s.blocks)
                succs = [heads[owner + 1]] if owner + 1 < len(group) else []
            built.append(BasicBlock(bid, tuple(instrs), tuple(succs)))
        if not built:           # more application functions than sites
            built.append(BasicBlock(0))
        out.append(FunctionDef(fid, f"app{fid}", 0, tuple(built), size_bytes=256,
                               gadget_count=0, is_library=False))
    return out


def _pick(rng: random.Random, region, width: int = 0) -> int:
    lo, hi = _span(region, width)
    return rng.randint(lo, hi)


def _span(region, width: int = 0) -> tuple[int, int]:
    """Sampling interval of a region.

    By default a dense run of at most ``POOL`` integers at the region's
    lower edge (upper edge for the leftmost region), so training can
    enumerate every value. A positive ``width`` spans the region more widely.
    """
    lo, hi = region
    w = width or POOL
    if lo is None and hi is None:
        return (-w, w) if width else (0, POOL - 1)
    if lo is None:
        return int(hi) - w + 1, int(hi)
    top = int(lo) + w
    return int(lo) + 1, top if hi is None else min(top, int(hi))


def _trace(spec: ScenarioSpec, sem: Semantics, program: Program, sites: list[_Site],
           special: list[_Site], scale: str) -> list[TraceEvent]:
    rng = random.Random(f"{spec.seed}:{scale}")
    width = 500 if scale == "large" and spec.wide_large else 0
    by_fn: dict[int, list[_Site]] = {}
    for s in sites + special:
        by_fn.setdefault(s.fn, []).append(s)
    hosts = sorted(by_fn)
    events: list[TraceEvent] = []

    def invoke(fn: int, forced: dict[int, tuple] | None = None) -> None:
        forced = forced or {}
        for s in by_fn[fn]:
            args, snap = forced.get(s.id, (None, None))
            if s.kind in ("rdf", "fnptr"):
                arm = rng.randint(0, 1) if args is None else args
                h, a0, a1, j = s.blocks
                for blk in (h, (a0, a1)[arm], j):
                    events.append(BlockExec(fn, blk))
                v = s.arms[arm]
                x = v.fn if isinstance(v, FnAddr) else v.value
                snap = None
            else:
                events.append(BlockExec(fn, s.blocks[0]))
                if s.kind == "const":
                    x = s.const
                elif args is None:
                    x = _pick(rng, s.regions[rng.choice(s.seen)], width)
                else:
                    x = args
            events.append(SiteReached(s.id, (x,), None if snap is None else (snap,)))
            sem.run(s.entry, x, events)

    # small traces first walk every region edge so split thresholds land on bounds
    if scale == "small":
        for fn in hosts:
            for s in by_fn[fn]:
                if s.kind == "rdf" or s.kind == "fnptr":
                    for arm in (0, 1):
                        invoke(fn, {s.id: (arm, None)})
                elif s.kind != "const":
                    for i in s.seen:
                        lo, hi = _span(s.regions[i])
                        for x in range(lo, hi + 1):
                            invoke(fn, {s.id: (x, None)})

    n = dict(spec.trace_calls)[scale]
    unseen_host = next((s for s in special if s.kind == "template:unseen"), None)
    q = 0.0
    if scale == "large" and unseen_host is not None:
        per_call = sum(len(by_fn[f]) for f in hosts) / len(hosts)
        u = spec.unseen_rate
        q = u * per_call / (1 - u + u * per_call)
    injections: dict[int, list[_Site]] = {}
    if scale == "large":
        for s in special:
            kind = s.kind.split(":", 1)[1]
            count = sum(a.count for a in spec.attacks if a.kind == kind)
            for k in range(count):
                injections.setdefault((k + 1) * n // (count + 1), []).append(s)
    for i in range(n):
        for s in injections.get(i, ()):
            invoke(s.fn, {s.id: _attack_args(s, rng)})
        if q and rng.random() < q:
            s = unseen_host
            invoke(s.fn, {s.id: (_pick(rng, s.regions[s.unseen[0]], width), None)})
        else:
            invoke(rng.choice(hosts))
    return events


def _attack_args(s: _Site, rng: random.Random) -> tuple:
    kind = s.kind.split(":", 1)[1]
    if kind == "tamper":
        # snapshot holds an ordinary user id; the value reaching the call was overwritten
        return 0, _pick(rng, s.regions[s.seen[0]])
    if kind == "overflow":
        return OVERFLOW_LIMIT + 15, None
    return _pick(rng, s.regions[s.unseen[0]]), None


# --------------------------------------------------------------------------
# built-in scenario catalogue

# per-scenario share of large-trace calls drawn from a never-trained region
_SUITE_UNSEEN = (0.0, 0.0, 0.005, 0.01, 0.01, 0.015, 0.02, 0.02, 0.025,
                 0.03, 0.03, 0.035, 0.04, 0.045, 0.05, 0.06)


def standard_suite() -> list[ScenarioSpec]:
    """Seventeen scenarios; the last draws 40% of its large-trace calls from an
    argument region the training traces never reach."""
    out = []
    for i, u in enumerate(_SUITE_UNSEEN):
        out.append(ScenarioSpec(
            name=f"suite-{i + 1:02d}", seed=101 + i,
            n_app_functions=2 + i % 3, n_sites=5 + i % 5,
            n_lib_functions=50 + 10 * (i % 6), n_entries=3 + i % 4,
            max_chain_depth=3 + i % 4, divergence_ratio=0.15 + 0.05 * (i % 6),
            unseen_rate=u))
    out.append(ScenarioSpec(
        name="suite-17-unseen", seed=117, n_app_functions=2, n_sites=6,
        n_lib_functions=70, n_entries=4, max_chain_depth=4, divergence_ratio=0.3,
        unseen_rate=0.4, unseen_mode="under"))
    return out


def regime_scenario(seed: int = 7) -> ScenarioSpec:
    """Library of 400 functions, 170 reachable, chains at most 7 deep, 5 permanent."""
    return ScenarioSpec(
        name="regime", seed=seed, n_app_functions=4, n_sites=24, n_lib_functions=400,
        n_reachable=170, n_entries=20, max_chain_depth=7, divergence_ratio=0.3,
        n_uninstrumentable=2, n_small=3)


def attack_scenario(seed: int = 11) -> ScenarioSpec:
    return ScenarioSpec(
        name="attacks", seed=seed, n_sites=6, n_lib_functions=60,
        attacks=(AttackSpec("tamper", 2), AttackSpec("overflow", 2), AttackSpec("benign", 2)))


def builtin_scenarios() -> dict[str, ScenarioSpec]:
    specs = {s.name: s for s in standard_suite()}
    for s in (regime_scenario(), attack_scenario()):
        specs[s.name] = s
    return specs
