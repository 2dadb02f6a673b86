"""Fused inner loops for the hot tensor operations.

The numpy implementations are the reference semantics; when numba is
importable, jitted single-pass versions (disk-cached) compute the same
values with far less memory traffic, which is what keeps full training
runs inside their wall-clock budgets on one core.  ``use_numpy_kernels``
forces the reference path so tests can cross-check the two.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

_FORCE_NUMPY = False


def use_numpy_kernels(force: bool) -> bool:
    global _FORCE_NUMPY
    previous = _FORCE_NUMPY
    _FORCE_NUMPY = bool(force)
    return previous


def _fast_path() -> bool:
    return HAVE_NUMBA and not _FORCE_NUMPY


# -- depthwise (per-channel) convolution ----------------------------------

def _depthwise_forward_numpy(xp, kernel, h, w):
    k = kernel.shape[0]
    b, _, _, c = xp.shape
    out = np.zeros((b, h, w, c), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            out += xp[:, i : i + h, j : j + w, :] * kernel[i, j]
    return out


def _depthwise_backward_numpy(xp, kernel, g):
    k = kernel.shape[0]
    h, w = g.shape[1], g.shape[2]
    gk = np.empty_like(kernel)
    gxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            window = xp[:, i : i + h, j : j + w, :]
            gk[i, j] = (window * g).sum(axis=(0, 1, 2))
            gxp[:, i : i + h, j : j + w, :] += kernel[i, j] * g
    return gk, gxp


# -- plain (dense) convolution: forward is pure BLAS -----------------------

def conv_forward(xp, kernel, h, w):
    k, _, cin, cout = kernel.shape
    b = xp.shape[0]
    out = np.zeros((b, h, w, cout), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            out += xp[:, i : i + h, j : j + w, :] @ kernel[i, j]
    return out


def _conv_backward_numpy(xp, kernel, g):
    k, _, cin, cout = kernel.shape
    h, w = g.shape[1], g.shape[2]
    gk = np.empty_like(kernel)
    gxp = np.zeros_like(xp)
    gflat = g.reshape(-1, cout)
    for i in range(k):
        for j in range(k):
            window = xp[:, i : i + h, j : j + w, :]
            gk[i, j] = window.reshape(-1, cin).T @ gflat
            gxp[:, i : i + h, j : j + w, :] += g @ kernel[i, j].T
    return gk, gxp


# -- batch norm (train mode) ------------------------------------------------

def _bn_forward_numpy(x, gamma, beta, eps):
    mu = x.mean(axis=(0, 1, 2))
    var = x.var(axis=(0, 1, 2))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    out = (gamma * xhat + beta).astype(x.dtype, copy=False)
    return out, xhat.astype(x.dtype, copy=False), mu, var, inv_std


def _bn_backward_numpy(g, xhat, gamma, inv_std):
    n = g.shape[0] * g.shape[1] * g.shape[2]
    gbeta = g.sum(axis=(0, 1, 2))
    ggamma = (g * xhat).sum(axis=(0, 1, 2))
    coeff = (gamma * inv_std).astype(g.dtype, copy=False)
    gx = coeff * (g - xhat * (ggamma / n) - (gbeta / n))
    return gx.astype(g.dtype, copy=False), ggamma, gbeta


# -- leaky relu --------------------------------------------------------------

def _leaky_forward_numpy(x, alpha):
    return np.where(x >= 0, x, x * x.dtype.type(alpha))


def _leaky_backward_numpy(g, x, alpha):
    return np.where(x >= 0, g, g * g.dtype.type(alpha))


# -- fused Adam update -------------------------------------------------------

def _adam_update_numpy(p, g, m, v, lr, b1, b2, eps, bias1, bias2):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= (lr * (m / bias1) / (np.sqrt(v / bias2) + eps)).astype(p.dtype, copy=False)


if HAVE_NUMBA:

    @njit(cache=True, fastmath=True)
    def _depthwise_forward_nb(xp, kernel, out):  # pragma: no cover - jitted
        b, hp, wp, c = xp.shape
        k = kernel.shape[0]
        h = hp - k + 1
        w = wp - k + 1
        for n in range(b):
            for y in range(h):
                for x in range(w):
                    for i in range(k):
                        for j in range(k):
                            for ch in range(c):
                                out[n, y, x, ch] += xp[n, y + i, x + j, ch] * kernel[i, j, ch]

    @njit(cache=True, fastmath=True)
    def _depthwise_backward_nb(xp, kernel, g, gxp, gk):  # pragma: no cover - jitted
        b, hp, wp, c = xp.shape
        k = kernel.shape[0]
        h = hp - k + 1
        w = wp - k + 1
        for n in range(b):
            for y in range(h):
                for x in range(w):
                    for i in range(k):
                        for j in range(k):
                            for ch in range(c):
                                gv = g[n, y, x, ch]
                                gk[i, j, ch] += xp[n, y + i, x + j, ch] * gv
                                gxp[n, y + i, x + j, ch] += kernel[i, j, ch] * gv

    @njit(cache=True, fastmath=True)
    def _conv_backward_nb(xp, kernel_t, g, gxp, gk_t):  # pragma: no cover - jitted
        # kernel_t / gk_t use (k, k, cout, cin) layout so the inner loop is
        # unit-stride over cin
        b, hp, wp, cin = xp.shape
        k = kernel_t.shape[0]
        cout = kernel_t.shape[2]
        h = hp - k + 1
        w = wp - k + 1
        for n in range(b):
            for y in range(h):
                for x in range(w):
                    for i in range(k):
                        for j in range(k):
                            for co in range(cout):
                                gv = g[n, y, x, co]
                                for ci in range(cin):
                                    gk_t[i, j, co, ci] += xp[n, y + i, x + j, ci] * gv
                                    gxp[n, y + i, x + j, ci] += kernel_t[i, j, co, ci] * gv

    @njit(cache=True, fastmath=True)
    def _bn_reduce_nb(x):  # pragma: no cover - jitted
        b, h, w, c = x.shape
        total = np.zeros(c, dtype=np.float64)
        total_sq = np.zeros(c, dtype=np.float64)
        for n in range(b):
            for y in range(h):
                for z in range(w):
                    for ch in range(c):
                        v = x[n, y, z, ch]
                        total[ch] += v
                        total_sq[ch] += v * v
        return total, total_sq

    @njit(cache=True, fastmath=True)
    def _bn_normalize_nb(x, mu, inv_std, gamma, beta, out, xhat):  # pragma: no cover
        b, h, w, c = x.shape
        for n in range(b):
            for y in range(h):
                for z in range(w):
                    for ch in range(c):
                        xh = (x[n, y, z, ch] - mu[ch]) * inv_std[ch]
                        xhat[n, y, z, ch] = xh
                        out[n, y, z, ch] = gamma[ch] * xh + beta[ch]

    @njit(cache=True, fastmath=True)
    def _bn_backward_nb(g, xhat, gamma, inv_std, gx, ggamma, gbeta):  # pragma: no cover
        b, h, w, c = g.shape
        n_elems = b * h * w
        for n in range(b):
            for y in range(h):
                for z in range(w):
                    for ch in range(c):
                        gv = g[n, y, z, ch]
                        gbeta[ch] += gv
                        ggamma[ch] += gv * xhat[n, y, z, ch]
        for n in range(b):
            for y in range(h):
                for z in range(w):
                    for ch in range(c):
                        gx[n, y, z, ch] = (
                            gamma[ch]
                            * inv_std[ch]
                            * (
                                g[n, y, z, ch]
                                - xhat[n, y, z, ch] * (ggamma[ch] / n_elems)
                                - gbeta[ch] / n_elems
                            )
                        )

    @njit(cache=True, fastmath=True)
    def _leaky_forward_nb(x, alpha, out):  # pragma: no cover - jitted
        flat_x = x.reshape(-1)
        flat_out = out.reshape(-1)
        for i in range(flat_x.size):
            v = flat_x[i]
            flat_out[i] = v if v >= 0.0 else alpha * v

    @njit(cache=True, fastmath=True)
    def _leaky_backward_nb(g, x, alpha, gx):  # pragma: no cover - jitted
        flat_g = g.reshape(-1)
        flat_x = x.reshape(-1)
        flat_gx = gx.reshape(-1)
        for i in range(flat_g.size):
            flat_gx[i] = flat_g[i] if flat_x[i] >= 0.0 else alpha * flat_g[i]

    @njit(cache=True, fastmath=True)
    def _adam_update_nb(p, g, m, v, lr, b1, b2, eps, bias1, bias2):  # pragma: no cover
        for i in range(p.size):
            mi = b1 * m[i] + (1.0 - b1) * g[i]
            vi = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / bias1) / (np.sqrt(vi / bias2) + eps)


def depthwise_forward(xp, kernel, h, w):
    if _fast_path():
        out = np.zeros((xp.shape[0], h, w, xp.shape[3]), dtype=xp.dtype)
        _depthwise_forward_nb(xp, kernel, out)
        return out
    return _depthwise_forward_numpy(xp, kernel, h, w)


def depthwise_backward(xp, kernel, g):
    if _fast_path():
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel)
        _depthwise_backward_nb(xp, kernel, g, gxp, gk)
        return gk, gxp
    return _depthwise_backward_numpy(xp, kernel, g)


def conv_backward(xp, kernel, g):
    if _fast_path():
        gxp = np.zeros_like(xp)
        kernel_t = np.ascontiguousarray(kernel.transpose(0, 1, 3, 2))
        gk_t = np.zeros_like(kernel_t)
        _conv_backward_nb(xp, kernel_t, g, gxp, gk_t)
        return np.ascontiguousarray(gk_t.transpose(0, 1, 3, 2)), gxp
    return _conv_backward_numpy(xp, kernel, g)


def bn_forward_train(x, gamma, beta, eps):
    """Returns (out, xhat, mu, var, inv_std); population variance."""
    if _fast_path() and x.flags["C_CONTIGUOUS"]:
        total, total_sq = _bn_reduce_nb(x)
        n = x.shape[0] * x.shape[1] * x.shape[2]
        mu = total / n
        var = np.maximum(total_sq / n - mu * mu, 0.0)
        inv_std = 1.0 / np.sqrt(var + eps)
        out = np.empty_like(x)
        xhat = np.empty_like(x)
        _bn_normalize_nb(x, mu.astype(x.dtype), inv_std.astype(x.dtype),
                         gamma, beta, out, xhat)
        return out, xhat, mu, var, inv_std
    return _bn_forward_numpy(x, gamma, beta, eps)


def bn_backward_train(g, xhat, gamma, inv_std):
    """Returns (gx, ggamma, gbeta) for batch-statistics normalization."""
    if _fast_path() and g.flags["C_CONTIGUOUS"] and g.dtype == xhat.dtype:
        gx = np.empty_like(g)
        ggamma = np.zeros(g.shape[3], dtype=g.dtype)
        gbeta = np.zeros(g.shape[3], dtype=g.dtype)
        _bn_backward_nb(g, xhat, gamma.astype(g.dtype, copy=False), inv_std.astype(g.dtype),
                        gx, ggamma, gbeta)
        return gx, ggamma, gbeta
    return _bn_backward_numpy(g, xhat, gamma, inv_std)


def leaky_forward(x, alpha):
    if _fast_path() and x.flags["C_CONTIGUOUS"]:
        out = np.empty_like(x)
        _leaky_forward_nb(x, x.dtype.type(alpha), out)
        return out
    return _leaky_forward_numpy(x, alpha)


def leaky_backward(g, x, alpha):
    if _fast_path() and g.flags["C_CONTIGUOUS"] and x.flags["C_CONTIGUOUS"] and g.dtype == x.dtype:
        gx = np.empty_like(g)
        _leaky_backward_nb(g, x, g.dtype.type(alpha), gx)
        return gx
    return _leaky_backward_numpy(g, x, alpha)


def adam_update(p, g, m, v, lr, b1, b2, eps, bias1, bias2):
    """In-place fused Adam update."""
    if (
        _fast_path()
        and p.dtype == g.dtype == m.dtype == v.dtype
        and all(a.flags["C_CONTIGUOUS"] for a in (p, g, m, v))
    ):
        _adam_update_nb(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
                        lr, b1, b2, eps, bias1, bias2)
        return
    _adam_update_numpy(p, g, m, v, lr, b1, b2, eps, bias1, bias2)
