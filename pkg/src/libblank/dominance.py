"""Postdominance and reverse dominance frontiers, plus call-graph reachability.

Postdominators are computed as dominators of the edge-reversed CFG rooted at
a synthesized virtual exit. The virtual exit receives an edge from every
block without successors and from the lowest-numbered block of every
terminal strongly connected component that cannot reach a real exit, so
every block has a postdominator chain even inside infinite loops.
"""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Iterable, NamedTuple

from . import kernels
from .ir import CFGError, FunctionDef, Program

log = logging.getLogger(__name__)


class PostDominance(NamedTuple):
    blocks: tuple[int, ...]
    succs: dict[int, tuple[int, ...]]     # forward successors, deduplicated
    exit_edges: frozenset[int]            # blocks wired to the virtual exit
    ipdom: dict[int, int | None]          # None = virtual exit
    rdf: dict[int, frozenset[int]]


def exit_sources(succs: dict[int, tuple[int, ...]]) -> frozenset[int]:
    """Blocks that get an edge to the virtual exit."""
    out = {b for b, ss in succs.items() if not ss}
    preds: dict[int, list[int]] = {b: [] for b in succs}
    for b, ss in succs.items():
        for s in ss:
            preds[s].append(b)

    def reaching(seeds):
        seen = set(seeds)
        work = list(seeds)
        while work:
            v = work.pop()
            for p in preds[v]:
                if p not in seen:
                    seen.add(p)
                    work.append(p)
        return seen

    can_exit = reaching(out)
    stuck = [b for b in sorted(succs) if b not in can_exit]
    if not stuck:
        return frozenset(out)
    comp = _sccs({b: [s for s in succs[b] if s not in can_exit] for b in stuck})
    for members in comp:
        mset = set(members)
        terminal = all(s in mset for b in members for s in succs[b] if s not in can_exit)
        if terminal:
            out.add(min(members))
    return frozenset(out)


def _sccs(graph: dict[int, list[int]]) -> list[list[int]]:
    """Tarjan, iterative. Only nodes that are keys of ``graph`` are visited."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    result: list[list[int]] = []
    counter = 0
    for root in sorted(graph):
        if root in index:
            continue
        work = [(root, iter(graph[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in graph:
                    continue
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(graph[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                members = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    members.append(w)
                    if w == v:
                        break
                result.append(sorted(members))
    return result


def _check(f: FunctionDef) -> None:
    known = set(f.block_map)
    for b in f.blocks:
        for s in b.successors:
            if s not in known:
                raise CFGError(f"function {f.name}: block {b.id} has dangling edge to {s}")


@lru_cache(maxsize=512)
def postdominance(f: FunctionDef) -> PostDominance:
    _check(f)
    blocks = tuple(sorted(f.block_map))
    succs = {b: tuple(dict.fromkeys(f.block_map[b].successors)) for b in blocks}
    exits = exit_sources(succs)

    # reversed graph: node i <-> blocks[i], virtual exit = len(blocks)
    pos = {b: i for i, b in enumerate(blocks)}
    n = len(blocks) + 1
    vexit = n - 1
    rev: list[list[int]] = [[] for _ in range(n)]
    for b in blocks:
        for s in succs[b]:
            rev[pos[s]].append(pos[b])
    for b in sorted(exits):
        rev[vexit].append(pos[b])
    ptr = [0]
    idx: list[int] = []
    for adj in rev:
        idx.extend(adj)
        ptr.append(len(idx))
    idom = kernels.immediate_dominators(n, vexit, ptr, idx)

    ipdom: dict[int, int | None] = {}
    for b in blocks:
        d = idom[pos[b]]
        if d == -1:
            raise CFGError(f"function {f.name}: block {b} cannot reach an exit")
        ipdom[b] = None if d == vexit else blocks[d]

    # dominance frontier on the reversed graph (Cytron et al.)
    rdf: dict[int, set[int]] = {b: set() for b in blocks}
    for b in blocks:
        rpreds = list(succs[b]) + ([None] if b in exits else [])
        if len(rpreds) < 2:
            continue
        stop = ipdom[b]
        for p in rpreds:
            runner = p
            while runner is not None and runner != stop:
                rdf[runner].add(b)
                runner = ipdom[runner]
    return PostDominance(blocks, succs, exits, ipdom,
                         {b: frozenset(s) for b, s in rdf.items()})


def compute_postdominators(f: FunctionDef) -> dict[int, frozenset[int]]:
    """Block id -> set of blocks postdominating it (reflexive)."""
    info = postdominance(f)
    out = {}
    for b in info.blocks:
        chain = []
        cur: int | None = b
        while cur is not None:
            chain.append(cur)
            cur = info.ipdom[cur]
        out[b] = frozenset(chain)
    return out


def postdominates(f: FunctionDef, a: int, b: int) -> bool:
    """True if block ``a`` postdominates block ``b``."""
    ipdom = postdominance(f).ipdom
    cur: int | None = b
    while cur is not None:
        if cur == a:
            return True
        cur = ipdom[cur]
    return False


def compute_rdf(f: FunctionDef, b: int) -> frozenset[int]:
    """Reverse dominance frontier of ``b``: the blocks ``b`` is control dependent on."""
    info = postdominance(f)
    if b not in info.rdf:
        raise CFGError(f"function {f.name}: unknown block {b}")
    return info.rdf[b]


# --------------------------------------------------------------------------
# call graph


class ReachableSet(NamedTuple):
    functions: frozenset[int]
    unknown_roots: int


def _library_graph(p: Program) -> dict[int, list[int]]:
    lib = p.library_ids
    return {caller: [c for c in edges if c in lib]
            for caller, edges in p.call_graph.items() if caller in lib}


def reachable_library_functions(p: Program, roots: Iterable[int]) -> ReachableSet:
    roots = set(roots)
    unknown = sum(1 for r in roots if r not in p.functions)
    if unknown:
        log.warning("%d unknown root function(s) ignored", unknown)
    graph = _library_graph(p)
    seen = {r for r in roots if r in p.library_ids}
    work = sorted(seen)
    while work:
        v = work.pop()
        for w in graph.get(v, ()):
            if w not in seen:
                seen.add(w)
                work.append(w)
    return ReachableSet(frozenset(seen), unknown)


def max_static_callchain_depth(p: Program, roots: Iterable[int]) -> int:
    """Number of functions on the longest simple call path from a library root."""
    graph = _library_graph(p)
    starts = sorted(r for r in set(roots) if r in p.library_ids)
    if not starts:
        return 0
    reach = reachable_library_functions(p, starts).functions
    sub = {v: [w for w in graph.get(v, ()) if w in reach] for v in reach}
    if all(len(c) == 1 and c[0] not in sub[c[0]] for c in _sccs(sub)):
        memo: dict[int, int] = {}
        for comp in _sccs(sub):  # reverse topological order
            v = comp[0]
            memo[v] = 1 + max((memo[w] for w in sub[v]), default=0)
        return max(memo[r] for r in starts)
    # cyclic: exhaustive simple-path search
    best = 0
    for r in starts:
        on_path = {r}
        stack = [(r, iter(sub[r]))]
        best = max(best, 1)
        while stack:
            v, it = stack[-1]
            for w in it:
                if w not in on_path:
                    on_path.add(w)
                    stack.append((w, iter(sub[w])))
                    best = max(best, len(stack))
                    break
            else:
                stack.pop()
                on_path.discard(v)
    return best


def call_graph_edges(p: Program, within: Iterable[int]) -> int:
    within = set(within)
    graph = _library_graph(p)
    return sum(1 for v in within for w in set(graph.get(v, ())) if w in within)
