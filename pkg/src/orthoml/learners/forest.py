"""Random forests built on CART regression trees.

Splits minimize child sum-of-squares (variance reduction), thresholds
are midpoints between consecutive distinct sorted values, and ties are
broken by lowest feature index then lowest threshold.  Trees are grown
on bootstrap resamples with per-node feature subsampling.

The builder keeps one presorted index array per feature and carries the
sort order through stable partitions, so a node costs O(p * n_node)
rather than a per-node re-sort.  Hot loops are numba-compiled and
release the GIL, so replications can run on a thread pool without
losing seed determinism.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..errors import ValidationError
from .base import Learner


@njit(cache=True, nogil=True)
def _tree_seed(seed, t):
    z = np.uint64(seed) + (np.uint64(t) + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return np.int64(z & np.uint64(0x7FFFFFFF))


@njit(cache=True, nogil=True)
def _grow_tree(sidx, vsort, ysort, max_depth, min_leaf, max_features,
               feat, thr, left, right, value, goes_left,
               buf_i, buf_v, buf_y, fidx):
    # sidx[f] holds the node's bootstrap rows sorted by feature f, with
    # vsort/ysort the matching feature values and targets; all features
    # share the same segment boundaries throughout.
    p = sidx.shape[0]
    m_all = sidx.shape[1]
    cap = 2 * m_all + 2
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m_all
    st_depth[0] = 0
    sp = 1
    next_node = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo

        tot = 0.0
        totsq = 0.0
        for i in range(lo, hi):
            yv = ysort[0, i]
            tot += yv
            totsq += yv * yv
        value[node] = tot / m
        feat[node] = -1

        if m < 2 or m < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue
        if totsq - tot * tot / m <= 1e-12 * max(totsq, 1.0):
            continue

        k = max_features
        if k >= p or k <= 0:
            k = p
            for j in range(p):
                fidx[j] = j
        else:
            for j in range(p):
                fidx[j] = j
            for j in range(k):
                swap = j + np.random.randint(0, p - j)
                tmp = fidx[j]
                fidx[j] = fidx[swap]
                fidx[swap] = tmp
            fidx[:k].sort()

        best_score = tot * tot / m
        best_f = -1
        best_thr = 0.0
        for jj in range(k):
            f = fidx[jj]
            sl = 0.0
            hi1 = hi - 1
            for i in range(lo, hi1):
                sl += ysort[f, i]
                nl = i - lo + 1
                if m - nl < min_leaf:
                    break
                if nl < min_leaf:
                    continue
                cur = vsort[f, i]
                nxt = vsort[f, i + 1]
                if cur == nxt:
                    continue
                sr = tot - sl
                nr = m - nl
                sc = sl * sl / nl + sr * sr / nr
                if sc > best_score:
                    best_score = sc
                    best_f = f
                    best_thr = 0.5 * (cur + nxt)

        if best_f < 0:
            continue

        # Bootstrap copies of a row always travel together.
        n_left = 0
        for i in range(lo, hi):
            gl = vsort[best_f, i] <= best_thr
            goes_left[sidx[best_f, i]] = gl
            if gl:
                n_left += 1

        for f in range(p):
            li = 0
            ri = n_left
            for i in range(lo, hi):
                row = sidx[f, i]
                if goes_left[row]:
                    buf_i[li] = row
                    buf_v[li] = vsort[f, i]
                    buf_y[li] = ysort[f, i]
                    li += 1
                else:
                    buf_i[ri] = row
                    buf_v[ri] = vsort[f, i]
                    buf_y[ri] = ysort[f, i]
                    ri += 1
            for i in range(m):
                sidx[f, lo + i] = buf_i[i]
                vsort[f, lo + i] = buf_v[i]
                ysort[f, lo + i] = buf_y[i]

        feat[node] = best_f
        thr[node] = best_thr
        left[node] = next_node
        right[node] = next_node + 1
        st_node[sp] = next_node
        st_lo[sp] = lo
        st_hi[sp] = lo + n_left
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = next_node + 1
        st_lo[sp] = lo + n_left
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        next_node += 2

    return next_node


@njit(cache=True, nogil=True)
def _fit_forest(XT, y, order_all, vals_all, n_trees, max_depth, min_leaf,
                max_features, seed, use_bootstrap, feat, thr, left, right,
                value):
    n = XT.shape[1]
    p = XT.shape[0]
    cnt = np.empty(n, np.int64)
    sidx = np.empty((p, n), np.int64)
    vsort = np.empty((p, n), np.float64)
    ysort = np.empty((p, n), np.float64)
    goes_left = np.empty(n, np.bool_)
    buf_i = np.empty(n, np.int64)
    buf_v = np.empty(n, np.float64)
    buf_y = np.empty(n, np.float64)
    fidx = np.empty(p, np.int64)
    for t in range(n_trees):
        np.random.seed(_tree_seed(seed, t))
        if use_bootstrap:
            for i in range(n):
                cnt[i] = 0
            for i in range(n):
                cnt[np.random.randint(0, n)] += 1
            for f in range(p):
                pos = 0
                for i in range(n):
                    row = order_all[f, i]
                    c = cnt[row]
                    if c > 0:
                        val = vals_all[f, i]
                        yv = y[row]
                        for _ in range(c):
                            sidx[f, pos] = row
                            vsort[f, pos] = val
                            ysort[f, pos] = yv
                            pos += 1
        else:
            for f in range(p):
                for i in range(n):
                    row = order_all[f, i]
                    sidx[f, i] = row
                    vsort[f, i] = vals_all[f, i]
                    ysort[f, i] = y[row]
        _grow_tree(sidx, vsort, ysort, max_depth, min_leaf, max_features,
                   feat[t], thr[t], left[t], right[t], value[t],
                   goes_left, buf_i, buf_v, buf_y, fidx)


@njit(cache=True, nogil=True)
def _predict_forest(X, feat, thr, left, right, value, out):
    n_trees = feat.shape[0]
    for i in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            node = 0
            while feat[t, node] >= 0:
                if X[i, feat[t, node]] <= thr[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[i] = acc / n_trees


class _ForestBase(Learner):
    param_names = ("n_trees", "max_depth", "min_leaf", "max_features",
                   "bootstrap", "seed")

    def __init__(self, n_trees=100, max_depth=None, min_leaf=1,
                 max_features=None, bootstrap=True, seed=0):
        super().__init__()
        if n_trees < 1:
            raise ValidationError(f"need at least one tree, got {n_trees}")
        if max_depth is not None and max_depth < 0:
            raise ValidationError(f"max_depth must be >= 0, got {max_depth}")
        if min_leaf < 1:
            raise ValidationError(f"min_leaf must be >= 1, got {min_leaf}")
        self.n_trees = int(n_trees)
        self.max_depth = None if max_depth is None else int(max_depth)
        self.min_leaf = int(min_leaf)
        self.max_features = max_features
        self.bootstrap = bool(bootstrap)
        self.seed = int(seed)

    def _resolve_max_features(self, p: int) -> int:
        mf = self.max_features
        if mf is None:
            mf = self._default_max_features(p)
        elif mf == "sqrt":
            mf = max(1, math.isqrt(p))
        elif mf == "all":
            mf = p
        else:
            mf = int(mf)
            if mf < 1:
                raise ValidationError(f"max_features must be >= 1, got {mf}")
        return min(mf, p)

    def _fit(self, X, y):
        n, p = X.shape
        XT = np.ascontiguousarray(X.T)
        order_all = np.empty((p, n), dtype=np.int64)
        vals_all = np.empty((p, n))
        for f in range(p):
            order_all[f] = np.argsort(XT[f], kind="stable")
            vals_all[f] = XT[f, order_all[f]]
        depth_code = -1 if self.max_depth is None else self.max_depth
        max_nodes = 2 * n + 1
        if self.max_depth is not None and self.max_depth < 60:
            max_nodes = min(max_nodes, 2 ** (self.max_depth + 1) + 1)
        self._feat = np.full((self.n_trees, max_nodes), -1, dtype=np.int64)
        self._thr = np.zeros((self.n_trees, max_nodes))
        self._left = np.zeros((self.n_trees, max_nodes), dtype=np.int64)
        self._right = np.zeros((self.n_trees, max_nodes), dtype=np.int64)
        self._value = np.zeros((self.n_trees, max_nodes))
        kernel_seed = np.int64(self.seed & 0x7FFFFFFFFFFFFFFF)
        _fit_forest(XT, np.ascontiguousarray(y), order_all, vals_all,
                    self.n_trees, depth_code, self.min_leaf,
                    self._resolve_max_features(p), kernel_seed, self.bootstrap,
                    self._feat, self._thr, self._left, self._right,
                    self._value)

    def _predict(self, X):
        out = np.empty(X.shape[0])
        _predict_forest(np.ascontiguousarray(X), self._feat, self._thr,
                        self._left, self._right, self._value, out)
        return out


class ForestRegressor(_ForestBase):
    """Bagged CART regression; predictions are tree-averaged leaf means."""

    kind = "regressor"

    @staticmethod
    def _default_max_features(p):
        return p


class ForestClassifier(_ForestBase):
    """Bagged CART on 0/1 targets; variance reduction on binary labels is
    the Gini criterion, and tree-averaged leaf means are probabilities."""

    kind = "classifier"

    @staticmethod
    def _default_max_features(p):
        return max(1, math.isqrt(p))
