"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``LIBBLANK_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("LIBBLANK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass


def immediate_dominators(n, root, succ_ptr, succ_idx, *, backend=None):
    impl = _select(backend)
    return impl.immediate_dominators(n, root, succ_ptr, succ_idx)


def best_split(X, y, n_classes, *, backend=None):
    impl = _select(backend)
    if impl is not _pykernels and len(y) >= (1 << 20):
        impl = _pykernels
    return impl.best_split(X, y, n_classes)


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        out.append("cython")
    except ImportError:
        pass
    return out


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {backend!r}")
