"""Per-call-site instrumentation plans.

For every library call site in application code, each argument is traced
back through its SSA definitions to the phi nodes that merge it; the
control dependences (reverse dominance frontier) of those phis' incoming
blocks decide which definition reaches the call, so the successors of
those branch blocks are the blocks to watch. Each argument gets one
"last executed watched block" feature plus one raw-value feature.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .dominance import compute_rdf
from .ir import (Call, CFGError, FunctionDef, Instruction, Phi, Program,
                 SchemaError, SSAValue)


def trace_parent_phi(instr: Instruction, f: FunctionDef) -> frozenset[Phi]:
    """Phi nodes reached by walking operands backwards, stopping at each phi."""
    found: set[Phi] = set()
    visited: set[int] = set()
    work = [instr]
    while work:
        ins = work.pop()
        for op in ins.operands:
            if not isinstance(op, SSAValue) or op.id in visited:
                continue
            visited.add(op.id)
            d = f.definitions.get(op.id)
            if d is None:
                raise CFGError(f"function {f.name}: v{op.id} is used but never defined")
            src = d[2]
            if isinstance(src, Phi):
                found.add(src)
            else:
                work.append(src)
    return frozenset(found)


@dataclass(frozen=True)
class SitePlan:
    site_id: int
    fn: int
    callee: int
    arg_features: tuple[tuple[int, tuple[tuple[int, int], ...]], ...]
    value_features: tuple[tuple[int, int], ...]
    snapshot_points: tuple[tuple[int, int, int], ...]   # (arg, block, instruction index)

    @property
    def n_features(self) -> int:
        return 1 + len(self.arg_features) + len(self.value_features)

    @property
    def watched_blocks(self) -> frozenset[int]:
        return frozenset(b for _, ws in self.arg_features for b, _ in ws)

    def to_json(self) -> dict:
        return {
            "site": self.site_id, "fn": self.fn, "callee": self.callee,
            "arg_features": [[a, [[b, i] for b, i in ws]] for a, ws in self.arg_features],
            "value_features": [[a, i] for a, i in self.value_features],
            "snapshot_points": [list(s) for s in self.snapshot_points],
            "n_features": self.n_features,
        }

    @classmethod
    def from_json(cls, d) -> "SitePlan":
        try:
            return cls(
                int(d["site"]), int(d["fn"]), int(d["callee"]),
                tuple((int(a), tuple((int(b), int(i)) for b, i in ws)) for a, ws in d["arg_features"]),
                tuple((int(a), int(i)) for a, i in d["value_features"]),
                tuple(tuple(int(x) for x in s) for s in d["snapshot_points"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad site plan {d!r}: {exc}") from None


def _watched_for_arg(f: FunctionDef, definition: Instruction) -> list[int]:
    phis = set(trace_parent_phi(definition, f))
    if isinstance(definition, Phi):
        phis.add(definition)
    watched: set[int] = set()
    for phi in phis:
        for incoming, _ in phi.incomings:
            for rdf_block in compute_rdf(f, incoming):
                watched.update(f.block_map[rdf_block].successors)
    return sorted(watched)


def plan_site(p: Program, f: FunctionDef, block: int, index: int, call: Call) -> SitePlan:
    if call.callee not in p.functions:
        raise CFGError(f"site {call.site_id}: unknown callee #{call.callee}")
    arg_watch = []
    snaps = []
    for a, arg in enumerate(call.args):
        if isinstance(arg, SSAValue):
            d = f.definitions.get(arg.id)
            if d is None:
                raise CFGError(f"site {call.site_id}: argument v{arg.id} is never defined")
            dblock, dindex, dins = d
            snaps.append((a, dblock, dindex))
            watched = _watched_for_arg(f, dins)
            if watched:
                arg_watch.append((a, watched))
        else:
            snaps.append((a, block, index))
    fid = 1
    arg_features = []
    for a, watched in arg_watch:
        arg_features.append((a, tuple((b, fid) for b in watched)))
        fid += 1
    value_features = []
    for a in range(len(call.args)):
        value_features.append((a, fid))
        fid += 1
    return SitePlan(call.site_id, f.id, call.callee, tuple(arg_features),
                    tuple(value_features), tuple(snaps))


def plan_instrumentation(p: Program, f: FunctionDef) -> list[SitePlan]:
    out = []
    for block, index, call in f.call_sites():
        if call.callee not in p.functions:
            raise CFGError(f"site {call.site_id}: unknown callee #{call.callee}")
        if p.functions[call.callee].is_library:
            out.append(plan_site(p, f, block, index, call))
    return sorted(out, key=lambda s: s.site_id)


def plan_program(p: Program) -> dict[int, SitePlan]:
    plans = {}
    for f in p.functions.values():
        if f.is_library:
            continue
        for sp in plan_instrumentation(p, f):
            plans[sp.site_id] = sp
    return dict(sorted(plans.items()))


def dump_plans(plans: dict[int, SitePlan]) -> str:
    return json.dumps({"plans": [sp.to_json() for sp in plans.values()]},
                      sort_keys=True, indent=1)


def load_plans(src) -> dict[int, SitePlan]:
    doc = json.loads(src) if isinstance(src, str) else src
    if not isinstance(doc, dict) or "plans" not in doc:
        raise SchemaError("plan document needs a 'plans' list")
    out = {}
    for d in doc["plans"]:
        sp = SitePlan.from_json(d)
        out[sp.site_id] = sp
    return dict(sorted(out.items()))
