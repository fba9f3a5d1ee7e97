# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see ``_pykernels`` for the contract)."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort
from libc.math cimport INFINITY

cnp.import_array()

NAME = "compiled"


def pava(y, w):
    cdef const double[:] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef double[:] sums = np.empty(n, dtype=np.float64)
    cdef double[:] weights = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[:] sizes = np.empty(n, dtype=np.intp)
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef Py_ssize_t i, b, k, pos, top = -1
    cdef double mean
    with nogil:
        for i in range(n):
            top += 1
            sums[top] = wv[i] * yv[i]
            weights[top] = wv[i]
            sizes[top] = 1
            while top > 0 and sums[top - 1] / weights[top - 1] > sums[top] / weights[top]:
                sums[top - 1] += sums[top]
                weights[top - 1] += weights[top]
                sizes[top - 1] += sizes[top]
                top -= 1
        pos = 0
        for b in range(top + 1):
            mean = sums[b] / weights[b]
            for k in range(sizes[b]):
                out[pos + k] = mean
            pos += sizes[b]
    return out_arr


cdef struct KeyPos:
    double key
    Py_ssize_t pos


cdef int _cmp_keypos(const void* a, const void* b) noexcept nogil:
    cdef const KeyPos* pa = <const KeyPos*> a
    cdef const KeyPos* pb = <const KeyPos*> b
    if pa.key < pb.key:
        return -1
    if pa.key > pb.key:
        return 1
    # position order makes the sort equivalent to a stable argsort
    if pa.pos < pb.pos:
        return -1
    if pa.pos > pb.pos:
        return 1
    return 0


def best_split(X, y, idx, features, Py_ssize_t max_features, Py_ssize_t min_leaf):
    cdef const double[:, :] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const cnp.int64_t[:] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const cnp.int64_t[:] fv = np.ascontiguousarray(features, dtype=np.int64)
    cdef Py_ssize_t n = iv.shape[0]
    cdef Py_ssize_t n_feat = fv.shape[0]
    cdef Py_ssize_t best_f = -1
    cdef double best_thr = 0.0
    cdef double best_score = -INFINITY
    if n < 2 * min_leaf or n < 2:
        return best_f, best_thr, best_score

    cdef KeyPos* buf = <KeyPos*> malloc(n * sizeof(KeyPos))
    if buf == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, fi, f, visited = 0, nl, nr, arg
    cdef double total = 0.0, cs, sr, score, fbest, thr
    try:
        with nogil:
            for i in range(n):
                total = total + yv[iv[i]]
            for fi in range(n_feat):
                if visited >= max_features:
                    break
                f = fv[fi]
                for i in range(n):
                    buf[i].key = Xv[iv[i], f]
                    buf[i].pos = i
                qsort(buf, n, sizeof(KeyPos), _cmp_keypos)
                if buf[0].key == buf[n - 1].key:
                    continue
                visited += 1
                cs = 0.0
                fbest = -INFINITY
                arg = -1
                for i in range(n - 1):
                    cs = cs + yv[iv[buf[i].pos]]
                    nl = i + 1
                    nr = n - nl
                    if buf[i].key < buf[i + 1].key and nl >= min_leaf and nr >= min_leaf:
                        sr = total - cs
                        score = cs * cs / <double> nl + sr * sr / <double> nr
                        if score > fbest:
                            fbest = score
                            arg = i
                if arg < 0:
                    continue
                if fbest > best_score or (fbest == best_score and f < best_f):
                    thr = 0.5 * (buf[arg].key + buf[arg + 1].key)
                    if thr >= buf[arg + 1].key:
                        thr = buf[arg].key
                    best_f = f
                    best_thr = thr
                    best_score = fbest
    finally:
        free(buf)
    return best_f, best_thr, best_score


def forest_apply(X, roots, feature, threshold, left, right, value):
    cdef const double[:, :] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const cnp.int64_t[:] rv = np.ascontiguousarray(roots, dtype=np.int64)
    cdef const cnp.int64_t[:] fv = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[:] tv = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const cnp.int64_t[:] lv = np.ascontiguousarray(left, dtype=np.int64)
    cdef const cnp.int64_t[:] rgt = np.ascontiguousarray(right, dtype=np.int64)
    cdef const double[:] vv = np.ascontiguousarray(value, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], n_trees = rv.shape[0]
    out_arr = np.empty((n_trees, n), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t t, i
    cdef cnp.int64_t node
    with nogil:
        for t in range(n_trees):
            for i in range(n):
                node = rv[t]
                while fv[node] >= 0:
                    if Xv[i, fv[node]] <= tv[node]:
                        node = lv[node]
                    else:
                        node = rgt[node]
                out[t, i] = vv[node]
    return out_arr
