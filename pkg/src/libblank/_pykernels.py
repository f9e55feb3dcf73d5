"""Pure-Python kernels. Same contracts as the compiled ``_ckernels`` module."""
from __future__ import annotations


def immediate_dominators(n, root, succ_ptr, succ_idx):
    """Cooper-Harvey-Kennedy iterative dominators over a CSR successor graph.

    Returns a list ``idom`` with ``idom[root] == root`` and ``-1`` for nodes
    unreachable from ``root``.
    """
    succ_ptr = list(succ_ptr)
    succ_idx = list(succ_idx)
    preds = [[] for _ in range(n)]
    for u in range(n):
        for k in range(succ_ptr[u], succ_ptr[u + 1]):
            preds[succ_idx[k]].append(u)

    # iterative postorder from root
    order = [-1] * n
    post = []
    visited = [False] * n
    visited[root] = True
    stack = [(root, succ_ptr[root])]
    while stack:
        u, k = stack[-1]
        if k < succ_ptr[u + 1]:
            stack[-1] = (u, k + 1)
            v = succ_idx[k]
            if not visited[v]:
                visited[v] = True
                stack.append((v, succ_ptr[v]))
        else:
            stack.pop()
            post.append(u)
    rpo = post[::-1]
    for i, u in enumerate(rpo):
        order[u] = i

    idom = [-1] * n
    idom[root] = root
    changed = True
    while changed:
        changed = False
        for b in rpo[1:]:
            new = -1
            for p in preds[b]:
                if idom[p] == -1:
                    continue
                if new == -1:
                    new = p
                    continue
                a, c = p, new
                while a != c:
                    while order[a] > order[c]:
                        a = idom[a]
                    while order[c] > order[a]:
                        c = idom[c]
                new = a
            if idom[b] != new:
                idom[b] = new
                changed = True
    return idom


def midpoint(a, b):
    t = (a + b) / 2.0
    return a if t >= b else t


def best_split(X, y, n_classes):
    """Best Gini split of rows ``X`` (list of sequences) with labels ``y`` in 0..k-1.

    Maximises ``SL/nL + SR/nR`` (sum of squared class counts over child size),
    which is equivalent to minimising weighted Gini impurity. Comparisons are
    exact rationals. Ties go to the lowest feature, then the lowest threshold.
    Returns ``(feature, threshold, num, den)``, or ``(-1, 0.0, 0, 0)`` when no
    split strictly lowers impurity.
    """
    n = len(y)
    if n < 2:
        return -1, 0.0, 0, 0
    m = len(X[0])
    total = [0] * n_classes
    for c in y:
        total[c] += 1
    parent = sum(c * c for c in total)

    best = (-1, 0.0, 0, 1)
    for f in range(m):
        col = [row[f] for row in X]
        idx = sorted(range(n), key=col.__getitem__)
        left = [0] * n_classes
        right = list(total)
        sl, sr = 0, parent
        for i in range(n - 1):
            c = y[idx[i]]
            sl += 2 * left[c] + 1
            sr -= 2 * right[c] - 1
            left[c] += 1
            right[c] -= 1
            a, b = col[idx[i]], col[idx[i + 1]]
            if a == b:
                continue
            nl = i + 1
            nr = n - nl
            num = sl * nr + sr * nl
            den = nl * nr
            if best[0] == -1 or num * best[3] > best[2] * den:
                best = (f, midpoint(a, b), num, den)
    f, t, num, den = best
    if f == -1 or num * n <= parent * den:
        return -1, 0.0, 0, 0
    return f, t, num, den
