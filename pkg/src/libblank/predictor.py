"""Decision-tree call-chain predictor.

One global tree per program with the call-site id as feature 0. Training is
greedy top-down CART with Gini impurity and midpoint thresholds
(``x[f] <= t`` goes left). Split scores are compared as exact rationals, so
the compiled and pure-Python split kernels pick identical trees.

Text format::

    dtree v1 depth=<max depth> nodes=<n>
    N <id> f=<feature> t=<threshold> L=<id> R=<id>
    L <id> label=<chain label> n=<support>
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from . import kernels

DEFAULT_MAX_DEPTH = 10


class ModelFormatError(ValueError):
    def __init__(self, msg, lineno=None):
        super().__init__(msg if lineno is None else f"line {lineno}: {msg}")
        self.lineno = lineno


class _UnknownSite:
    __slots__ = ()

    def __repr__(self):
        return "UNKNOWN_SITE"


UNKNOWN_SITE = _UnknownSite()


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class Leaf:
    label: int
    support: int


Node = Union[Split, Leaf]


@dataclass(frozen=True)
class DecisionTreeModel:
    nodes: tuple[Node, ...]
    max_depth: int = DEFAULT_MAX_DEPTH
    root: int = 0

    def depth(self) -> int:
        def d(i):
            n = self.nodes[i]
            return 0 if isinstance(n, Leaf) else 1 + max(d(n.left), d(n.right))
        return d(self.root)

    def labels(self) -> set[int]:
        return {n.label for n in self.nodes if isinstance(n, Leaf)}

    def features_used(self) -> set[int]:
        return {n.feature for n in self.nodes if isinstance(n, Split)}

    @property
    def n_features(self) -> int:
        return max(self.features_used(), default=-1) + 1


# --------------------------------------------------------------------------
# training


def train_tree(records, max_depth: int = DEFAULT_MAX_DEPTH, *, backend=None) -> DecisionTreeModel:
    """Fits a tree on ``ProfileRecord``-like objects or ``(features, label)`` pairs."""
    rows, labels = _as_table(records)
    if not rows:
        raise ValueError("cannot train on an empty record set")
    width = max(len(r) for r in rows)
    X = np.zeros((len(rows), width), dtype=np.float64)
    for i, r in enumerate(rows):
        X[i, :len(r)] = r
    classes = sorted(set(labels))
    cls_index = {c: i for i, c in enumerate(classes)}
    y = np.array([cls_index[c] for c in labels], dtype=np.int64)
    use_python = (backend == "python") or (backend is None and kernels.BACKEND == "python")
    Xl = X.tolist() if use_python else None

    nodes: list = []

    def leaf(idx):
        counts = Counter(y[idx].tolist())
        best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))[0]
        return Leaf(classes[best], int(len(idx)))

    def grow(idx: np.ndarray, depth: int) -> int:
        me = len(nodes)
        nodes.append(None)
        yi = y[idx]
        if depth >= max_depth or len(idx) < 2 or (yi == yi[0]).all():
            nodes[me] = leaf(idx)
            return me
        if use_python:
            f, t, _, _ = kernels.best_split([Xl[i] for i in idx], yi.tolist(), len(classes),
                                            backend="python")
        else:
            f, t, _, _ = kernels.best_split(X[idx], yi, len(classes), backend=backend)
        if f == -1:
            nodes[me] = leaf(idx)
            return me
        mask = X[idx, f] <= t
        left = grow(idx[mask], depth + 1)
        right = grow(idx[~mask], depth + 1)
        nodes[me] = Split(int(f), float(t), left, right)
        return me

    grow(np.arange(len(rows)), 0)
    return DecisionTreeModel(tuple(nodes), max_depth)


def _as_table(records) -> tuple[list[Sequence[float]], list[int]]:
    rows, labels = [], []
    for r in records:
        if hasattr(r, "features"):
            rows.append(r.features)
            labels.append(r.chain_label)
        else:
            feats, lab = r
            rows.append(feats)
            labels.append(lab)
    return rows, labels


# --------------------------------------------------------------------------
# prediction


def predict(model: DecisionTreeModel, features: Sequence[float]) -> int:
    i = model.root
    nodes = model.nodes
    while True:
        n = nodes[i]
        if isinstance(n, Leaf):
            return n.label
        v = features[n.feature] if n.feature < len(features) else 0
        i = n.left if v <= n.threshold else n.right


def predict_site(model: DecisionTreeModel, features: Sequence[float], known_sites) -> int | _UnknownSite:
    """Like ``predict`` but returns ``UNKNOWN_SITE`` for sites absent from training."""
    if features[0] not in known_sites:
        return UNKNOWN_SITE
    return predict(model, features)


def prune_constant_paths(model: DecisionTreeModel,
                         known_constants: Mapping[int, float]) -> DecisionTreeModel:
    """Folds away every test on a feature whose value is fixed."""
    if not known_constants:
        return model
    nodes: list = []

    def copy(i: int) -> int:
        n = model.nodes[i]
        while isinstance(n, Split) and n.feature in known_constants:
            i = n.left if known_constants[n.feature] <= n.threshold else n.right
            n = model.nodes[i]
        me = len(nodes)
        nodes.append(None)
        if isinstance(n, Leaf):
            nodes[me] = n
        else:
            left = copy(n.left)
            right = copy(n.right)
            nodes[me] = Split(n.feature, n.threshold, left, right)
        return me

    copy(model.root)
    return DecisionTreeModel(tuple(nodes), model.max_depth)


def specialize_per_site(model: DecisionTreeModel, sites: Iterable[int]) -> dict[int, DecisionTreeModel]:
    return {s: prune_constant_paths(model, {0: s}) for s in sites}


# --------------------------------------------------------------------------
# text format


def dumps(model: DecisionTreeModel) -> str:
    order = _preorder(model)
    ids = {old: new for new, old in enumerate(order)}
    lines = [f"dtree v1 depth={model.max_depth} nodes={len(order)}"]
    for old in order:
        n = model.nodes[old]
        if isinstance(n, Leaf):
            lines.append(f"L {ids[old]} label={n.label} n={n.support}")
        else:
            lines.append(f"N {ids[old]} f={n.feature} t={float(n.threshold)!r} "
                         f"L={ids[n.left]} R={ids[n.right]}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> DecisionTreeModel:
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise ModelFormatError("empty model", 1)
    head = lines[0].split()
    try:
        if head[:2] != ["dtree", "v1"] or len(head) != 4:
            raise ValueError
        depth = int(_kv(head[2], "depth"))
        count = int(_kv(head[3], "nodes"))
    except ValueError:
        raise ModelFormatError(f"bad header {lines[0]!r}", 1) from None
    body = [(no, ln) for no, ln in enumerate(lines[1:], 2) if ln.strip()]
    if len(body) != count:
        raise ModelFormatError(f"header promises {count} nodes, found {len(body)}", 1)
    nodes: list = [None] * count
    for no, ln in body:
        parts = ln.split()
        try:
            nid = int(parts[1])
            if not 0 <= nid < count or nodes[nid] is not None:
                raise ValueError(f"bad node id {parts[1]}")
            if parts[0] == "N" and len(parts) == 6:
                node = Split(int(_kv(parts[2], "f")), float(_kv(parts[3], "t")),
                             int(_kv(parts[4], "L")), int(_kv(parts[5], "R")))
                if not (0 <= node.left < count and 0 <= node.right < count):
                    raise ValueError("child id out of range")
            elif parts[0] == "L" and len(parts) == 4:
                node = Leaf(int(_kv(parts[2], "label")), int(_kv(parts[3], "n")))
            else:
                raise ValueError(f"unrecognised line {ln!r}")
        except (ValueError, IndexError) as exc:
            raise ModelFormatError(str(exc) or f"unrecognised line {ln!r}", no) from None
        nodes[nid] = node
    model = DecisionTreeModel(tuple(nodes), depth)
    _check_tree(model)
    return model


def _kv(token: str, key: str) -> str:
    k, sep, v = token.partition("=")
    if k != key or not sep:
        raise ValueError(f"expected {key}=..., got {token!r}")
    return v


def _preorder(model: DecisionTreeModel) -> list[int]:
    out = []
    stack = [model.root]
    while stack:
        i = stack.pop()
        out.append(i)
        n = model.nodes[i]
        if isinstance(n, Split):
            stack.append(n.right)
            stack.append(n.left)
    return out


def _check_tree(model: DecisionTreeModel) -> None:
    seen = set()
    stack = [model.root]
    while stack:
        i = stack.pop()
        if i in seen:
            raise ModelFormatError(f"node {i} is reachable twice")
        seen.add(i)
        n = model.nodes[i]
        if isinstance(n, Split):
            stack.extend((n.left, n.right))
    if len(seen) != len(model.nodes):
        raise ModelFormatError("model has unreachable nodes")
