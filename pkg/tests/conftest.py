import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from libblank.ir import BasicBlock, Call, Const, FunctionDef, Param, Program  # noqa: E402

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def lib_fn(fid, name, calls=(), **kw):
    """Single-block library function calling ``calls`` (site, callee) in order."""
    ins = tuple(Call(s, c, (Param(0),)) for s, c in calls)
    return FunctionDef(fid, name, 0, (BasicBlock(0, ins, ()),), **kw)


@pytest.fixture
def malloc_program():
    """main calls malloc (which calls mmap64) at site 1 and free at site 2; memcpy is tiny."""
    app = FunctionDef(0, "main", 0, (BasicBlock(0, (Call(1, 10, (Const(5),)),
                                                    Call(2, 12, (Const(1),))), ()),),
                      is_library=False)
    return Program.of([
        app,
        lib_fn(10, "malloc", [(100, 11)], gadget_count=5),
        lib_fn(11, "mmap64", gadget_count=3),
        lib_fn(12, "free", gadget_count=2),
        lib_fn(13, "memcpy", size_bytes=8, blankable=False, gadget_count=7),
    ])
