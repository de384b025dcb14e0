"""Pure-numpy reference kernels.

Mirrors the compiled ``_core`` extension function for function. Every kernel
takes C-contiguous float64 arrays:

* ``X``: (n, d) evaluation points
* ``means``: (K, d)
* ``precs``: (K, d, d) symmetric positive-definite precision matrices
* ``log_norm``: (K,) per-component ``-d/2 log(2 pi) + 1/2 log det(S_k)``
* ``log_w``: (K,) log mixture weights
"""

import numpy as np


def component_logpdf(X, means, precs, log_norm):
    r = X[:, None, :] - means[None, :, :]
    quad = np.einsum("nka,kab,nkb->nk", r, precs, r)
    return log_norm[None, :] - 0.5 * quad


def mixture_logpdf(X, means, precs, log_norm, log_w):
    lp = component_logpdf(X, means, precs, log_norm) + log_w[None, :]
    m = lp.max(axis=1)
    finite = np.isfinite(m)
    m_safe = np.where(finite, m, 0.0)
    with np.errstate(divide="ignore"):
        out = m_safe + np.log(np.exp(lp - m_safe[:, None]).sum(axis=1))
    return np.where(finite, out, -np.inf)


def data_moments(X, means, precs, log_norm):
    """Density-weighted residual moments of a batch around each component mean.

    Returns ``(s0, s1, s2)`` with ``s0[k] = sum_i q_k(x_i)``,
    ``s1[k] = sum_i q_k(x_i) r_ik`` and ``s2[k] = sum_i q_k(x_i) r_ik r_ik^T``
    where ``r_ik = x_i - mu_k``.
    """
    r = X[:, None, :] - means[None, :, :]
    quad = np.einsum("nka,kab,nkb->nk", r, precs, r)
    q = np.exp(log_norm[None, :] - 0.5 * quad)
    s0 = q.sum(axis=0)
    s1 = np.einsum("nk,nka->ka", q, r)
    s2 = np.einsum("nk,nka,nkb->kab", q, r, r)
    return s0, s1, s2


def entropy_moments(Z, means, precs, log_norm, log_w, lower, upper, log_floor, shift=0.0):
    """Moments of ``(log q(z) + shift) 1_S(z)`` over per-component Monte-Carlo draws.

    ``Z`` has shape (K, M, d); row block ``k`` holds draws from component ``k``.
    Residuals are taken around the drawing component's own mean. Returns sums
    ``(e0, e1, e2)`` shaped (K,), (K, d), (K, d, d); divide by ``M`` for means.
    """
    K, M, d = Z.shape
    flat = Z.reshape(K * M, d)
    lq = mixture_logpdf(flat, means, precs, log_norm, log_w)
    lq = np.maximum(lq, log_floor)
    inside = np.all((flat >= lower) & (flat <= upper), axis=1)
    w = np.where(inside, lq + shift, 0.0).reshape(K, M)
    r = Z - means[:, None, :]
    e0 = w.sum(axis=1)
    e1 = np.einsum("km,kma->ka", w, r)
    e2 = np.einsum("km,kma,kmb->kab", w, r, r)
    return e0, e1, e2
