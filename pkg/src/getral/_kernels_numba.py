"""Numba-jitted twins of the hot kernels in ``_kernels_numpy``.

Same contracts, explicit loops. No fastmath and no parallel: results must
be deterministic and bit-stable across runs for the seeded-training
reproducibility guarantees.
"""

import numpy as np
from numba import njit

NORM_EPS = 1e-12
KERNEL_FLOOR = 1e-12

_JIT = {"cache": True}


@njit(**_JIT)
def cooccurrence_adjacency(node_ids, n_nodes, window):
    n_tokens = node_ids.shape[0]
    adj = np.zeros((n_nodes, n_nodes), dtype=np.float64)
    if n_tokens == 0:
        return adj
    span = min(window, n_tokens)
    for start in range(n_tokens - span + 1):
        center = start + (span - 1) // 2
        u = node_ids[center]
        for pos in range(start, start + span):
            v = node_ids[pos]
            if pos != center and u != v:
                adj[u, v] = 1.0
                adj[v, u] = 1.0
    return adj


@njit(**_JIT)
def cosine_rows_forward(a, b):
    n, d = a.shape
    m = b.shape[0]
    na = np.empty(n, dtype=np.float64)
    nb = np.empty(m, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for c in range(d):
            s += a[i, c] * a[i, c]
        na[i] = np.sqrt(s)
    for j in range(m):
        s = 0.0
        for c in range(d):
            s += b[j, c] * b[j, c]
        nb[j] = np.sqrt(s)
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        if na[i] < NORM_EPS:
            continue
        for j in range(m):
            if nb[j] < NORM_EPS:
                continue
            dot = 0.0
            for c in range(d):
                dot += a[i, c] * b[j, c]
            out[i, j] = dot / (na[i] * nb[j])
    return out, na, nb


@njit(**_JIT)
def cosine_rows_backward(a, b, m, na, nb, grad):
    n, d = a.shape
    mm = b.shape[0]
    ga = np.zeros((n, d), dtype=np.float64)
    gb = np.zeros((mm, d), dtype=np.float64)
    for i in range(n):
        if na[i] < NORM_EPS:
            continue
        inv_na = 1.0 / na[i]
        for j in range(mm):
            if nb[j] < NORM_EPS:
                continue
            g = grad[i, j]
            if g == 0.0:
                continue
            inv_nb = 1.0 / nb[j]
            scale = g * inv_na * inv_nb
            gm = g * m[i, j]
            ca = gm * inv_na * inv_na
            cb = gm * inv_nb * inv_nb
            for c in range(d):
                ga[i, c] += scale * b[j, c] - ca * a[i, c]
                gb[j, c] += scale * a[i, c] - cb * b[j, c]
    return ga, gb


@njit(**_JIT)
def kernel_pool_forward(m, mus, sigmas):
    n, cols = m.shape
    k = mus.shape[0]
    out = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        for t in range(k):
            inv_two_var = 1.0 / (2.0 * sigmas[t] * sigmas[t])
            acc = 0.0
            for j in range(cols):
                diff = m[i, j] - mus[t]
                acc += np.exp(-diff * diff * inv_two_var)
            if acc < KERNEL_FLOOR:
                acc = KERNEL_FLOOR
            out[i, t] = np.log(acc)
    return out


@njit(**_JIT)
def kernel_pool_backward(m, mus, sigmas, k, grad):
    n, cols = m.shape
    nk = mus.shape[0]
    gm = np.zeros((n, cols), dtype=np.float64)
    for i in range(n):
        for t in range(nk):
            g = grad[i, t]
            if g == 0.0:
                continue
            pooled = np.exp(k[i, t])
            if pooled <= KERNEL_FLOOR:
                continue
            inv_var = 1.0 / (sigmas[t] * sigmas[t])
            for j in range(cols):
                diff = m[i, j] - mus[t]
                w = np.exp(-0.5 * diff * diff * inv_var - k[i, t])
                gm[i, j] += g * w * (-diff * inv_var)
    return gm
