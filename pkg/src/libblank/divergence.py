"""Static call-flow divergence of library functions.

A library function is non-divergent when every library call site in it
postdominates its entry block and every library callee is non-divergent.
Classification is the greatest fixpoint of that rule: everything starts
non-divergent and is lowered on violation, so a recursive cycle whose
members all satisfy the postdomination rule stays non-divergent.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .dominance import _sccs, postdominance, postdominates
from .ir import CFGError, Program


class Divergence(str, enum.Enum):
    NON_DIVERGENT = "NonDivergent"
    DIVERGENT = "Divergent"


class Reason(str, enum.Enum):
    NOT_POSTDOMINATING = "NotPostdominating"
    CALLEE_DIVERGENT = "CalleeDivergent"
    IN_CYCLE = "InCycle"


@dataclass(frozen=True)
class DivergenceReport:
    classification: dict[int, Divergence]
    reasons: dict[int, list[tuple[int, Reason]]] = field(default_factory=dict)

    @property
    def counts(self) -> tuple[int, int]:
        nd = sum(1 for c in self.classification.values() if c is Divergence.DIVERGENT)
        return nd, len(self.classification) - nd

    def is_divergent(self, fid: int) -> bool:
        return self.classification.get(fid) is Divergence.DIVERGENT

    def to_json(self) -> dict:
        n_div, n_non = self.counts
        return {
            "classification": {str(k): v.value for k, v in sorted(self.classification.items())},
            "counts": {"divergent": n_div, "non_divergent": n_non},
            "reasons": {str(k): [[s, r.value] for s, r in v]
                        for k, v in sorted(self.reasons.items()) if v},
        }

    @classmethod
    def from_json(cls, doc) -> "DivergenceReport":
        if isinstance(doc, str):
            doc = json.loads(doc)
        cls_map = {int(k): Divergence(v) for k, v in doc["classification"].items()}
        given = doc.get("reasons", {})
        reasons = {k: [(s, Reason(r)) for s, r in given.get(str(k), [])] for k in cls_map}
        return cls(cls_map, reasons)

    def summary_table(self) -> str:
        n_div, n_non = self.counts
        return f"#Divergent\t#Non-divergent\n{n_div}\t{n_non}\n"


def classify_divergence(p: Program) -> DivergenceReport:
    lib = p.library_ids
    local_bad: dict[int, list[tuple[int, Reason]]] = {}
    lib_edges: dict[int, list[tuple[int, int]]] = {}   # fn -> [(site, library callee)]
    for fid in sorted(lib):
        f = p.functions[fid]
        bad = []
        edges = []
        for block, _, call in f.call_sites():
            if call.callee not in p.functions:
                raise CFGError(f"function {f.name}: callee #{call.callee} at site "
                               f"{call.site_id} has no CFG")
            if call.callee not in lib:
                continue
            edges.append((call.site_id, call.callee))
            if not postdominates(f, block, f.entry_block):
                bad.append((call.site_id, Reason.NOT_POSTDOMINATING))
        local_bad[fid] = bad
        lib_edges[fid] = edges

    divergent = {fid for fid, bad in local_bad.items() if bad}
    callers: dict[int, set[int]] = {fid: set() for fid in lib}
    for fid, edges in lib_edges.items():
        for _, callee in edges:
            callers[callee].add(fid)
    work = sorted(divergent)
    while work:
        v = work.pop()
        for c in callers[v]:
            if c not in divergent:
                divergent.add(c)
                work.append(c)

    comp_of = {}
    for i, comp in enumerate(_sccs({fid: [c for _, c in lib_edges[fid]] for fid in lib})):
        for v in comp:
            comp_of[v] = i
    reasons: dict[int, list[tuple[int, Reason]]] = {}
    for fid in sorted(lib):
        rs = list(local_bad[fid])
        for site, callee in lib_edges[fid]:
            if callee in divergent:
                rs.append((site, Reason.IN_CYCLE if comp_of[callee] == comp_of[fid]
                           else Reason.CALLEE_DIVERGENT))
        reasons[fid] = sorted(set(rs), key=lambda r: (r[0], r[1].value))
    classification = {fid: (Divergence.DIVERGENT if fid in divergent else Divergence.NON_DIVERGENT)
                      for fid in sorted(lib)}
    return DivergenceReport(classification, reasons)


def static_chain(p: Program, fid: int) -> tuple[int, ...]:
    """Library functions a non-divergent function always enters, in first-entry order.

    Walks call sites in postdominator order, which for a non-divergent
    function is the order every execution first reaches them.
    """
    out: list[int] = []
    seen: set[int] = set()

    def visit(g: int):
        if g in seen or g not in p.library_ids:
            return
        seen.add(g)
        out.append(g)
        for site in _sites_in_execution_order(p, g):
            visit(site.callee)

    visit(fid)
    return tuple(out)


def _sites_in_execution_order(p: Program, fid: int):
    f = p.functions[fid]
    info = postdominance(f)
    chain = []
    cur = f.entry_block
    while cur is not None:
        chain.append(cur)
        cur = info.ipdom[cur]
    rank = {b: i for i, b in enumerate(chain)}
    sites = [(rank.get(b, len(chain)), b, i, call) for b, i, call in f.call_sites()
             if call.callee in p.library_ids]
    sites.sort(key=lambda t: t[:3])
    return [t[3] for t in sites]
