"""Pure-Python/numpy versions of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation (same summation order,
same tie rules) so both backends return bit-identical results.
"""

import numpy as np

NAME = "python"


def pava(y, w):
    """Weighted pool-adjacent-violators on pre-sorted, tie-pooled points.

    Returns the fitted (non-decreasing) value for every input position.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = len(y)
    sums = [0.0] * n
    weights = [0.0] * n
    sizes = [0] * n
    top = -1
    for i in range(n):
        top += 1
        sums[top] = float(w[i] * y[i])
        weights[top] = float(w[i])
        sizes[top] = 1
        while top > 0 and sums[top - 1] / weights[top - 1] > sums[top] / weights[top]:
            sums[top - 1] += sums[top]
            weights[top - 1] += weights[top]
            sizes[top - 1] += sizes[top]
            top -= 1
    out = np.empty(n, dtype=np.float64)
    pos = 0
    for b in range(top + 1):
        out[pos:pos + sizes[b]] = sums[b] / weights[b]
        pos += sizes[b]
    return out


def best_split(X, y, idx, features, max_features, min_leaf):
    """Best axis-aligned SSE split of the node holding rows ``idx``.

    Features are visited in the order given; only features that are not
    constant in the node count towards ``max_features``. The returned score is
    ``S_L**2/n_L + S_R**2/n_R`` (larger is better); ``feature == -1`` means no
    admissible split exists.
    """
    idx = np.asarray(idx, dtype=np.int64)
    n = len(idx)
    yv = y[idx]
    total = np.cumsum(yv)[-1] if n else 0.0
    best_f, best_thr, best_score = -1, 0.0, -np.inf
    if n < 2 * min_leaf or n < 2:
        return best_f, best_thr, best_score
    nl = np.arange(1, n)
    nr = n - nl
    visited = 0
    for f in features:
        if visited >= max_features:
            break
        xv = X[idx, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        if xs[0] == xs[-1]:
            continue
        visited += 1
        cs = np.cumsum(yv[order])[:-1]
        sr = total - cs
        score = cs * cs / nl + sr * sr / nr
        valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        s = score[i]
        if s > best_score or (s == best_score and f < best_f):
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:
                thr = xs[i]
            best_f, best_thr, best_score = int(f), float(thr), float(s)
    return best_f, best_thr, best_score


def forest_apply(X, roots, feature, threshold, left, right, value):
    """Leaf values for every (tree, row); shape ``(len(roots), len(X))``.

    Trees are packed into flat node arrays; ``feature < 0`` marks a leaf and
    child indices are absolute.
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    out = np.empty((len(roots), n), dtype=np.float64)
    rows = np.arange(n)
    for t, root in enumerate(roots):
        node = np.full(n, root, dtype=np.int64)
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            ni = node[inner]
            go_left = X[rows[inner], f[inner]] <= threshold[ni]
            node[inner] = np.where(go_left, left[ni], right[ni])
        out[t] = value[node]
    return out
