"""Numba inner loops for the large-N t-SNE path.

Every kernel parallelizes over the row index i, and each row's outputs are
written only by the thread that owns it; cross-row reductions happen
outside in numpy with a fixed order.  That keeps results bit-deterministic
for a fixed build regardless of thread scheduling.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=True, cache=True)
def pairwise_sq_dists(x):
    n, k = x.shape
    d = np.empty((n, n), dtype=np.float32)
    for i in prange(n):
        for j in range(n):
            acc = np.float32(0.0)
            for a in range(k):
                t = x[i, a] - x[j, a]
                acc += t * t
            d[i, j] = acc
    return d


@njit(parallel=True, fastmath=True, cache=True)
def _tsne_pass_3(y, p, w, att, rep, sw_part):
    n = y.shape[0]
    one = np.float32(1.0)
    for i in prange(n):
        yi0 = y[i, 0]; yi1 = y[i, 1]; yi2 = y[i, 2]
        a0 = np.float32(0.0); a1 = np.float32(0.0); a2 = np.float32(0.0)
        r0 = np.float32(0.0); r1 = np.float32(0.0); r2 = np.float32(0.0)
        acc = 0.0
        for j in range(n):
            d0 = yi0 - y[j, 0]; d1 = yi1 - y[j, 1]; d2 = yi2 - y[j, 2]
            wij = one / (one + d0 * d0 + d1 * d1 + d2 * d2)
            w[i, j] = wij
            acc += wij
            pw = p[i, j] * wij
            ww = wij * wij
            a0 += pw * d0; a1 += pw * d1; a2 += pw * d2
            r0 += ww * d0; r1 += ww * d1; r2 += ww * d2
        att[i, 0] = a0; att[i, 1] = a1; att[i, 2] = a2
        rep[i, 0] = r0; rep[i, 1] = r1; rep[i, 2] = r2
        sw_part[i] = acc - 1.0  # drop the diagonal w_ii = 1
    return


@njit(parallel=True, fastmath=True, cache=True)
def _tsne_pass_any(y, p, w, att, rep, sw_part):
    n, m = y.shape
    one = np.float32(1.0)
    for i in prange(n):
        for a in range(m):
            att[i, a] = np.float32(0.0)
            rep[i, a] = np.float32(0.0)
        acc = 0.0
        for j in range(n):
            dist = np.float32(0.0)
            for a in range(m):
                t = y[i, a] - y[j, a]
                dist += t * t
            wij = one / (one + dist)
            w[i, j] = wij
            acc += wij
            pw = p[i, j] * wij
            ww = wij * wij
            for a in range(m):
                t = y[i, a] - y[j, a]
                att[i, a] += pw * t
                rep[i, a] += ww * t
        sw_part[i] = acc - 1.0
    return


def tsne_pass(y, p, w, att, rep, sw_part):
    """One fused pairwise pass: fills the Student-t weight matrix `w`
    (diagonal 1), attraction and repulsion sums, and per-row weight sums
    (diagonal excluded)."""
    if y.shape[1] == 3:
        _tsne_pass_3(y, p, w, att, rep, sw_part)
    else:
        _tsne_pass_any(y, p, w, att, rep, sw_part)
