import random
from collections import Counter
from fractions import Fraction

import pytest

from libblank.predictor import (UNKNOWN_SITE, DecisionTreeModel, Leaf, ModelFormatError, Split,
                                dumps, loads, predict, predict_site, prune_constant_paths,
                                specialize_per_site, train_tree)


def gini(labels):
    n = len(labels)
    return 1 - sum(Fraction(c * c, n * n) for c in Counter(labels).values())


def reference_tree(rows, labels, max_depth):
    """Textbook greedy CART, returned as nested tuples."""
    def majority(ls):
        counts = Counter(ls)
        top = max(counts.values())
        return min(c for c, k in counts.items() if k == top)

    def grow(idx, depth):
        ls = [labels[i] for i in idx]
        if depth >= max_depth or len(set(ls)) == 1:
            return ("leaf", majority(ls))
        parent = gini(ls)
        best = None
        for f in range(len(rows[0])):
            vals = sorted({rows[i][f] for i in idx})
            for a, b in zip(vals, vals[1:]):
                t = (a + b) / 2
                left = [labels[i] for i in idx if rows[i][f] <= t]
                right = [labels[i] for i in idx if rows[i][f] > t]
                n = len(idx)
                w = Fraction(len(left), n) * gini(left) + Fraction(len(right), n) * gini(right)
                if w < parent and (best is None or w < best[0]):
                    best = (w, f, t)
        if best is None:
            return ("leaf", majority(ls))
        _, f, t = best
        return ("split", f, t,
                grow([i for i in idx if rows[i][f] <= t], depth + 1),
                grow([i for i in idx if rows[i][f] > t], depth + 1))

    return grow(list(range(len(rows))), 0)


def as_nested(model, i=None):
    n = model.nodes[model.root if i is None else i]
    if isinstance(n, Leaf):
        return ("leaf", n.label)
    return ("split", n.feature, n.threshold, as_nested(model, n.left), as_nested(model, n.right))


def random_table(rng):
    width = rng.randint(1, 4)
    n = rng.randint(1, 30)
    rows = [tuple(rng.randint(0, 5) for _ in range(width)) for _ in range(n)]
    labels = [rng.randint(0, 3) for _ in range(n)]
    return rows, labels


@pytest.mark.parametrize("backend", ["python", None])
def test_matches_reference_cart(backend):
    rng = random.Random(77)
    for _ in range(200):
        rows, labels = random_table(rng)
        depth = rng.randint(1, 6)
        model = train_tree(list(zip(rows, labels)), depth, backend=backend)
        assert as_nested(model) == reference_tree(rows, labels, depth)
        assert model.depth() <= depth


def test_fits_training_data_when_separable():
    recs = [((s, v), s * 10 + (v > 3)) for s in (1, 2, 3) for v in range(8)]
    model = train_tree(recs)
    assert all(predict(model, f) == lab for f, lab in recs)


def test_tie_breaks_to_lowest_feature():
    model = train_tree([((0, 0), 0), ((1, 1), 1)])
    assert model.nodes[0] == Split(0, 0.5, 1, 2)


def test_empty_training_set():
    with pytest.raises(ValueError):
        train_tree([])


def test_short_vectors_pad_with_zero():
    model = DecisionTreeModel((Split(3, 0.5, 1, 2), Leaf(1, 1), Leaf(2, 1)))
    assert predict(model, (1,)) == 1


def test_unknown_site():
    model = train_tree([((1, 0), 4), ((2, 0), 5)])
    assert predict_site(model, (9, 0), {1, 2}) is UNKNOWN_SITE
    assert predict_site(model, (2, 0), {1, 2}) == 5


def test_text_round_trip():
    rng = random.Random(5)
    for _ in range(50):
        rows, labels = random_table(rng)
        model = train_tree(list(zip(rows, labels)), 5)
        text = dumps(model)
        again = loads(text)
        assert dumps(again) == text
        for r in rows:
            assert predict(again, r) == predict(model, r)


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("dtree v2 depth=3 nodes=1\nL 0 label=1 n=1\n", 1),
    ("dtree v1 depth=3 nodes=2\nL 0 label=1 n=1\n", 1),
    ("dtree v1 depth=3 nodes=1\nX 0 label=1 n=1\n", 2),
    ("dtree v1 depth=3 nodes=3\nN 0 f=0 t=0.5 L=1 R=7\nL 1 label=0 n=1\nL 2 label=1 n=1\n", 2),
    ("dtree v1 depth=3 nodes=2\nL 0 label=1 n=1\nL 0 label=2 n=1\n", 3),
    ("dtree v1 depth=3 nodes=1\nL 0 label=x n=1\n", 2),
])
def test_format_errors_carry_line_numbers(text, line):
    with pytest.raises(ModelFormatError) as exc:
        loads(text)
    assert exc.value.lineno == line


def test_unreachable_nodes_rejected():
    with pytest.raises(ModelFormatError):
        loads("dtree v1 depth=3 nodes=2\nL 0 label=1 n=1\nL 1 label=2 n=1\n")


def test_pruning_preserves_predictions():
    rng = random.Random(11)
    for _ in range(60):
        rows, labels = random_table(rng)
        rows = [(rng.randint(1, 3),) + r for r in rows]
        model = train_tree(list(zip(rows, labels)), 6)
        per_site = specialize_per_site(model, {1, 2, 3})
        for r in rows:
            pruned = per_site[r[0]]
            assert 0 not in pruned.features_used()
            assert predict(pruned, r) == predict(model, r)
        assert prune_constant_paths(model, {}) is model
