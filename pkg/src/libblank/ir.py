"""Program interchange model: functions, basic blocks, SSA instructions.

Everything here is immutable once built. ``Program.from_json`` /
``Program.to_json`` implement the single-document JSON interchange format
documented in ``docs/formats.md``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Iterator, Mapping, Union

MIN_BLANKABLE_BYTES = 14


class CFGError(ValueError):
    """Malformed control-flow graph or IR."""


class SchemaError(ValueError):
    """Interchange document does not match the expected shape."""


# --------------------------------------------------------------------------
# Values


@dataclass(frozen=True)
class SSAValue:
    id: int


@dataclass(frozen=True)
class Const:
    value: Union[int, float]


@dataclass(frozen=True)
class Param:
    index: int


@dataclass(frozen=True)
class FnAddr:
    fn: int


ValueRef = Union[SSAValue, Const, Param, FnAddr]


def value_from_json(obj: Mapping[str, Any]) -> ValueRef:
    if not isinstance(obj, Mapping) or len(obj) != 1:
        raise SchemaError(f"bad valueref: {obj!r}")
    (key, val), = obj.items()
    if key == "v":
        return SSAValue(_int(val, "v"))
    if key == "const":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(f"bad const payload: {val!r}")
        return Const(val)
    if key == "param":
        return Param(_int(val, "param"))
    if key == "fnaddr":
        return FnAddr(_int(val, "fnaddr"))
    raise SchemaError(f"unknown valueref kind {key!r}")


def value_to_json(v: ValueRef) -> dict:
    if isinstance(v, SSAValue):
        return {"v": v.id}
    if isinstance(v, Const):
        return {"const": v.value}
    if isinstance(v, Param):
        return {"param": v.index}
    return {"fnaddr": v.fn}


# --------------------------------------------------------------------------
# Instructions


@dataclass(frozen=True)
class Call:
    site_id: int
    callee: int
    args: tuple[ValueRef, ...] = ()

    @property
    def operands(self) -> tuple[ValueRef, ...]:
        return self.args


@dataclass(frozen=True)
class Phi:
    dst: SSAValue
    incomings: tuple[tuple[int, ValueRef], ...]

    @property
    def operands(self) -> tuple[ValueRef, ...]:
        return tuple(v for _, v in self.incomings)


@dataclass(frozen=True)
class Def:
    dst: SSAValue
    operands: tuple[ValueRef, ...] = ()


@dataclass(frozen=True)
class Branch:
    cond: ValueRef

    @property
    def operands(self) -> tuple[ValueRef, ...]:
        return (self.cond,)


Instruction = Union[Call, Phi, Def, Branch]


def instr_from_json(obj: Mapping[str, Any]) -> Instruction:
    op = obj.get("op")
    try:
        if op == "call":
            return Call(_int(obj["site"], "site"), _int(obj["callee"], "callee"),
                        tuple(value_from_json(a) for a in obj.get("args", [])))
        if op == "phi":
            dst = value_from_json(obj["dst"])
            if not isinstance(dst, SSAValue):
                raise SchemaError("phi dst must be an SSA value")
            inc = tuple((_int(b, "phi block"), value_from_json(v)) for b, v in obj["in"])
            return Phi(dst, inc)
        if op == "def":
            dst = value_from_json(obj["dst"])
            if not isinstance(dst, SSAValue):
                raise SchemaError("def dst must be an SSA value")
            return Def(dst, tuple(value_from_json(v) for v in obj.get("src", [])))
        if op == "branch":
            return Branch(value_from_json(obj["cond"]))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"bad instruction {obj!r}: {exc}") from None
    raise SchemaError(f"unknown op {op!r}")


def instr_to_json(ins: Instruction) -> dict:
    if isinstance(ins, Call):
        return {"op": "call", "site": ins.site_id, "callee": ins.callee,
                "args": [value_to_json(a) for a in ins.args]}
    if isinstance(ins, Phi):
        return {"op": "phi", "dst": value_to_json(ins.dst),
                "in": [[b, value_to_json(v)] for b, v in ins.incomings]}
    if isinstance(ins, Def):
        return {"op": "def", "dst": value_to_json(ins.dst),
                "src": [value_to_json(v) for v in ins.operands]}
    return {"op": "branch", "cond": value_to_json(ins.cond)}


# --------------------------------------------------------------------------
# Blocks and functions


@dataclass(frozen=True)
class BasicBlock:
    id: int
    instructions: tuple[Instruction, ...] = ()
    successors: tuple[int, ...] = ()

    def __post_init__(self):
        seen_other = False
        for i, ins in enumerate(self.instructions):
            if isinstance(ins, Branch) and i != len(self.instructions) - 1:
                raise CFGError(f"block {self.id}: branch must be the last instruction")
            if isinstance(ins, Phi):
                if seen_other:
                    raise CFGError(f"block {self.id}: phi after non-phi instruction")
            else:
                seen_other = True

    @property
    def calls(self) -> Iterator[Call]:
        return (i for i in self.instructions if isinstance(i, Call))


@dataclass(frozen=True)
class FunctionDef:
    id: int
    name: str
    entry_block: int
    blocks: tuple[BasicBlock, ...]
    size_bytes: int = 64
    gadget_count: int = 0
    instrumentable: bool = True
    blankable: bool = True
    is_library: bool = True

    def __post_init__(self):
        if self.size_bytes < 0 or self.gadget_count < 0:
            raise CFGError(f"function {self.name}: negative size or gadget count")
        if self.size_bytes < MIN_BLANKABLE_BYTES and self.blankable:
            raise CFGError(
                f"function {self.name}: {self.size_bytes} bytes is too small to be blankable")
        ids = [b.id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise CFGError(f"function {self.name}: duplicate block ids")
        known = set(ids)
        if self.entry_block not in known:
            raise CFGError(f"function {self.name}: entry block {self.entry_block} missing")
        for b in self.blocks:
            for s in b.successors:
                if s not in known:
                    raise CFGError(
                        f"function {self.name}: block {b.id} has dangling edge to {s}")

    @cached_property
    def block_map(self) -> dict[int, BasicBlock]:
        return {b.id: b for b in self.blocks}

    @cached_property
    def definitions(self) -> dict[int, tuple[int, int, Instruction]]:
        """SSA value id -> (block id, instruction index, defining instruction)."""
        out: dict[int, tuple[int, int, Instruction]] = {}
        for b in self.blocks:
            for i, ins in enumerate(b.instructions):
                if isinstance(ins, (Phi, Def)):
                    if ins.dst.id in out:
                        raise CFGError(f"function {self.name}: value v{ins.dst.id} defined twice")
                    out[ins.dst.id] = (b.id, i, ins)
        return out

    def call_sites(self) -> Iterator[tuple[int, int, Call]]:
        """Yields (block id, instruction index, call) in block order."""
        for b in self.blocks:
            for i, ins in enumerate(b.instructions):
                if isinstance(ins, Call):
                    yield b.id, i, ins

    @property
    def permanent(self) -> bool:
        """Never blanked: not instrumentable or too small."""
        return not (self.instrumentable and self.blankable)

    def successors(self) -> dict[int, tuple[int, ...]]:
        return {b.id: b.successors for b in self.blocks}


def function_from_json(obj: Mapping[str, Any]) -> FunctionDef:
    try:
        blocks = tuple(
            BasicBlock(_int(b["id"], "block id"),
                       tuple(instr_from_json(i) for i in b.get("instrs", [])),
                       tuple(_int(s, "succ") for s in b.get("succs", [])))
            for b in obj["blocks"])
        return FunctionDef(
            id=_int(obj["id"], "function id"),
            name=str(obj.get("name", f"f{obj['id']}")),
            entry_block=_int(obj["entry_block"], "entry_block"),
            blocks=blocks,
            size_bytes=_int(obj.get("size_bytes", 64), "size_bytes"),
            gadget_count=_int(obj.get("gadget_count", 0), "gadget_count"),
            instrumentable=bool(obj.get("instrumentable", True)),
            blankable=bool(obj.get("blankable", True)),
            is_library=bool(obj.get("is_library", True)),
        )
    except KeyError as exc:
        raise SchemaError(f"function is missing field {exc}") from None


def function_to_json(f: FunctionDef) -> dict:
    return {
        "id": f.id, "name": f.name, "size_bytes": f.size_bytes,
        "gadget_count": f.gadget_count, "instrumentable": f.instrumentable,
        "blankable": f.blankable, "is_library": f.is_library,
        "entry_block": f.entry_block,
        "blocks": [{"id": b.id, "succs": list(b.successors),
                    "instrs": [instr_to_json(i) for i in b.instructions]}
                   for b in f.blocks],
    }


# --------------------------------------------------------------------------
# Program


@dataclass(frozen=True)
class Program:
    functions: Mapping[int, FunctionDef] = field(default_factory=dict)

    def __post_init__(self):
        seen: dict[int, str] = {}
        for fid, f in self.functions.items():
            if fid != f.id:
                raise CFGError(f"function id mismatch: key {fid} vs {f.id}")
            for _, _, call in f.call_sites():
                if call.site_id in seen:
                    raise CFGError(
                        f"call site {call.site_id} appears in both {seen[call.site_id]} and {f.name}")
                seen[call.site_id] = f.name

    @classmethod
    def of(cls, functions: Iterable[FunctionDef]) -> "Program":
        fs = {}
        for f in functions:
            if f.id in fs:
                raise CFGError(f"duplicate function id {f.id}")
            fs[f.id] = f
        return cls(dict(sorted(fs.items())))

    @cached_property
    def library_ids(self) -> frozenset[int]:
        return frozenset(i for i, f in self.functions.items() if f.is_library)

    @cached_property
    def call_graph(self) -> dict[int, dict[int, tuple[int, ...]]]:
        """caller id -> {callee id -> sorted site ids}. Derived from Call instructions."""
        return derive_call_graph(self.functions.values())

    @cached_property
    def sites(self) -> dict[int, tuple[int, int, int, Call]]:
        """site id -> (caller fn id, block id, instruction index, call)."""
        out = {}
        for f in self.functions.values():
            for b, i, call in f.call_sites():
                out[call.site_id] = (f.id, b, i, call)
        return out

    @cached_property
    def permanent_ids(self) -> frozenset[int]:
        return frozenset(i for i in self.library_ids if self.functions[i].permanent)

    def name_of(self, fid: int) -> str:
        f = self.functions.get(fid)
        return f.name if f is not None else f"#{fid}"

    # -- interchange
    @classmethod
    def from_json(cls, doc: Union[str, Mapping[str, Any]]) -> "Program":
        if isinstance(doc, str):
            doc = json.loads(doc)
        if not isinstance(doc, Mapping) or not isinstance(doc.get("functions"), list):
            raise SchemaError("program document needs a 'functions' list")
        return cls.of(function_from_json(f) for f in doc["functions"])

    def to_json(self) -> dict:
        return {"functions": [function_to_json(f) for f in self.functions.values()]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def derive_call_graph(functions: Iterable[FunctionDef]) -> dict[int, dict[int, tuple[int, ...]]]:
    graph: dict[int, dict[int, list[int]]] = {}
    for f in functions:
        edges = graph.setdefault(f.id, {})
        for _, _, call in f.call_sites():
            edges.setdefault(call.callee, []).append(call.site_id)
    return {caller: {callee: tuple(sorted(sites)) for callee, sites in sorted(edges.items())}
            for caller, edges in sorted(graph.items())}


def load_program(path) -> Program:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from None
    return Program.from_json(doc)


def _int(v: Any, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{what} must be an integer, got {v!r}")
    return v
