import os
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from libblank import kernels
from libblank._pykernels import best_split as py_split, immediate_dominators as py_idom, midpoint

needs_ext = pytest.mark.skipif("cython" not in kernels.available_backends(),
                               reason="compiled kernels not built")


def csr(succ):
    ptr, idx = [0], []
    for v in range(len(succ)):
        idx.extend(succ[v])
        ptr.append(len(idx))
    return np.array(ptr, dtype=np.int64), np.array(idx, dtype=np.int64)


def test_idom_diamond():
    ptr, idx = csr([[1, 2], [3], [3], []])
    assert list(py_idom(4, 0, ptr.tolist(), idx.tolist())) == [0, 0, 0, 0]


def test_idom_unreachable_is_marked():
    ptr, idx = csr([[1], [], []])
    assert list(py_idom(3, 0, ptr.tolist(), idx.tolist()))[2] == -1


def test_midpoint_rule():
    assert midpoint(1.0, 2.0) == 1.5
    a = 1.0
    b = np.nextafter(a, 2.0)
    assert midpoint(a, b) == a       # no representable value strictly between


def test_best_split_prefers_lowest_feature_on_ties():
    X = [[0, 0], [1, 1]]
    f, t, num, den = py_split(X, [0, 1], 2)
    assert (f, t) == (0, 0.5)


def test_best_split_no_gain():
    assert py_split([[1], [1]], [0, 1], 2)[0] == -1


graphs = st.integers(1, 9).flatmap(lambda n: st.lists(
    st.lists(st.integers(0, n - 1), max_size=3, unique=True), min_size=n, max_size=n))


@needs_ext
@settings(max_examples=300, deadline=None)
@given(graphs)
def test_backends_agree_on_dominators(succ):
    ptr, idx = csr(succ)
    a = kernels.immediate_dominators(len(succ), 0, ptr, idx, backend="python")
    b = kernels.immediate_dominators(len(succ), 0, ptr, idx, backend="cython")
    assert list(a) == list(b)


tables = st.integers(1, 5).flatmap(lambda w: st.lists(
    st.tuples(st.lists(st.integers(-3, 3), min_size=w, max_size=w), st.integers(0, 3)),
    min_size=1, max_size=40))


@needs_ext
@settings(max_examples=300, deadline=None)
@given(tables)
def test_backends_agree_on_splits(rows):
    X = np.array([r for r, _ in rows], dtype=np.float64)
    y = np.array([c for _, c in rows], dtype=np.int64)
    a = kernels.best_split(X, y, 4, backend="python")
    b = kernels.best_split(X, y, 4, backend="cython")
    assert a[:2] == b[:2]
    if a[0] != -1:
        assert Fraction(a[2], a[3]) == Fraction(b[2], b[3])


@settings(max_examples=200, deadline=None)
@given(tables)
def test_split_score_is_optimal(rows):
    """Brute force over every (feature, midpoint) candidate."""
    X = [r for r, _ in rows]
    y = [c for _, c in rows]
    f, t, num, den = py_split(X, y, 4)
    n = len(y)

    def score(left, right):
        s = Fraction(0)
        for part in (left, right):
            counts = {}
            for c in part:
                counts[c] = counts.get(c, 0) + 1
            s += Fraction(sum(v * v for v in counts.values()), len(part))
        return s

    parent = score(y, []) if False else Fraction(sum(y.count(c) ** 2 for c in set(y)), n)
    best = None
    for feat in range(len(X[0])):
        vals = sorted(set(r[feat] for r in X))
        for a, b in zip(vals, vals[1:]):
            thr = midpoint(float(a), float(b))
            left = [y[i] for i in range(n) if X[i][feat] <= thr]
            right = [y[i] for i in range(n) if X[i][feat] > thr]
            s = score(left, right)
            if s > parent and (best is None or s > best[0]):
                best = (s, feat, thr)
    if best is None:
        assert f == -1
    else:
        assert (f, t) == (best[1], best[2])
        assert Fraction(num, den) == best[0]


def test_pure_python_switch():
    env = dict(os.environ, LIBBLANK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import libblank.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.best_split(np.zeros((2, 1)), np.zeros(2, dtype=np.int64), 1, backend="fortran")
