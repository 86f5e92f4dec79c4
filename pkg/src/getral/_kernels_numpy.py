"""Pure-numpy reference implementations of the hot kernels.

These are the fallback path behind :mod:`getral.backend`; the numba
twins in ``_kernels_numba`` implement the same contracts with explicit
loops. Matrix products elsewhere in the package stay on BLAS, which no
hand-written kernel beats.
"""

import numpy as np

NORM_EPS = 1e-12
KERNEL_FLOOR = 1e-12


def cooccurrence_adjacency(node_ids, n_nodes, window):
    """Accumulate sliding-window co-occurrence edges over merged nodes.

    ``node_ids`` maps each token position to its merged node index. Every
    window of ``window`` consecutive tokens (one shorter window when the
    sequence is shorter than ``window``) connects its center token, at
    in-window index (len-1)//2, to every other token in the window.
    Self-loops are dropped. Returns a symmetric 0/1 float64 matrix.
    """
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


def cosine_rows_forward(a, b):
    """Row-wise cosine similarity matrix M[i,j] = cos(a[i], b[j]).

    Rows with norm below NORM_EPS yield similarity 0. Returns
    (M, row_norms_a, row_norms_b); the norms are reused by the backward.
    """
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    inv_na = np.where(na < NORM_EPS, 0.0, 1.0 / np.where(na < NORM_EPS, 1.0, na))
    inv_nb = np.where(nb < NORM_EPS, 0.0, 1.0 / np.where(nb < NORM_EPS, 1.0, nb))
    m = (a @ b.T) * inv_na[:, None] * inv_nb[None, :]
    return m, na, nb


def cosine_rows_backward(a, b, m, na, nb, grad):
    """Gradients of sum(grad * M) w.r.t. both row sets.

    Degenerate (near-zero-norm) rows receive zero gradient, matching the
    forward convention that their similarities are 0.
    """
    inv_na = np.where(na < NORM_EPS, 0.0, 1.0 / np.where(na < NORM_EPS, 1.0, na))
    inv_nb = np.where(nb < NORM_EPS, 0.0, 1.0 / np.where(nb < NORM_EPS, 1.0, nb))
    gm = grad * m
    ga = ((grad * inv_nb[None, :]) @ b) * inv_na[:, None] \
        - a * (gm.sum(axis=1) * inv_na ** 2)[:, None]
    gb = ((grad * inv_na[:, None]).T @ a) * inv_nb[:, None] \
        - b * (gm.sum(axis=0) * inv_nb ** 2)[:, None]
    return ga, gb


def kernel_pool_forward(m, mus, sigmas):
    """Gaussian kernel pooling K[i,t] = log sum_j exp(-(M[i,j]-mu_t)^2 / (2 sigma_t^2)).

    The exponents are never positive, so the sum cannot overflow; the only
    hazard is log(0) when every response underflows, handled by flooring
    the sum at KERNEL_FLOOR (the engine-wide log-domain clamp). The floor
    also keeps the narrow exact-match kernel's no-match response bounded
    (~-27.6) instead of astronomically negative, which would saturate the
    downstream scorers.
    """
    diff = m[:, :, None] - mus[None, None, :]
    expo = -(diff * diff) / (2.0 * sigmas * sigmas)[None, None, :]
    pooled = np.exp(expo).sum(axis=1)
    return np.log(np.maximum(pooled, KERNEL_FLOOR))


def kernel_pool_backward(m, mus, sigmas, k, grad):
    """Gradient of sum(grad * K) w.r.t. the similarity matrix M.

    Rows whose pooled response sits at the floor are flat there and get
    zero gradient, matching the clamp semantics.
    """
    diff = m[:, :, None] - mus[None, None, :]
    inv_var = 1.0 / (sigmas * sigmas)[None, None, :]
    expo = -0.5 * diff * diff * inv_var
    pooled = np.exp(k)
    live = (pooled > KERNEL_FLOOR)[:, None, :]
    weights = np.where(live, np.exp(expo - k[:, None, :]), 0.0)
    return (weights * grad[:, None, :] * (-diff * inv_var)).sum(axis=2)
