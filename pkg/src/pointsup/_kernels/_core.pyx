# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Same call signatures and semantics as ``_pure``; plain C loops instead of
vectorized numpy. Per-call accumulation order is fixed, so results are
deterministic within this backend (cross-backend agreement is to rounding,
not bit-exact).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, floor, fmax, log1p

cnp.import_array()

BACKEND = "compiled"


cdef inline void _nbr(double p, Py_ssize_t size, Py_ssize_t* lo, double* frac) noexcept nogil:
    cdef double hi = size - 1.0
    cdef Py_ssize_t l
    if p < 0.0:
        p = 0.0
    if p > hi:
        p = hi
    l = <Py_ssize_t>floor(p)
    if size > 1:
        if l > size - 2:
            l = size - 2
        frac[0] = p - l
    else:
        l = 0
        frac[0] = 0.0
    lo[0] = l


cdef inline double _mlerp(double a, double b, double t) noexcept nogil:
    # exact at t == 0 (a + 0), t == 1 (b), and for a == b (a + t*0)
    if t == 1.0:
        return b
    return a + t * (b - a)


cdef inline double _clamp(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def bilinear_gather(field, px, py):
    """Sample a (H, W) field at pixel-space coords with clamp-to-edge borders.

    Exact (bit-equal) at integer coords and on constant patches; the output
    is clamped into the range of the four corner values.
    """
    cdef double[:, ::1] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef double[::1] xs = np.ascontiguousarray(px, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(py, dtype=np.float64)
    cdef Py_ssize_t h = f.shape[0], w = f.shape[1], n = xs.shape[0], i
    cdef Py_ssize_t x0, y0, x1, y1
    cdef double fx, fy, c00, c01, c10, c11, v, lo, hi
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            _nbr(xs[i], w, &x0, &fx)
            _nbr(ys[i], h, &y0, &fy)
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            c00 = f[y0, x0]
            c01 = f[y0, x1]
            c10 = f[y1, x0]
            c11 = f[y1, x1]
            v = _mlerp(_mlerp(c00, c01, fx), _mlerp(c10, c11, fx), fy)
            lo = min(min(c00, c01), min(c10, c11))
            hi = max(max(c00, c01), max(c10, c11))
            out[i] = _clamp(v, lo, hi)
    return out_arr


def bilinear_scatter(acc, px, py, upstream):
    """Accumulate d(sample)/d(field) * upstream into ``acc`` (in place)."""
    cdef double[:, ::1] a = acc
    cdef double[::1] xs = np.ascontiguousarray(px, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(py, dtype=np.float64)
    cdef double[::1] up = np.ascontiguousarray(upstream, dtype=np.float64)
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1], n = xs.shape[0], i
    cdef Py_ssize_t x0, y0, x1, y1
    cdef double fx, fy, u
    with nogil:
        for i in range(n):
            _nbr(xs[i], w, &x0, &fx)
            _nbr(ys[i], h, &y0, &fy)
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            u = up[i]
            a[y0, x0] += (1.0 - fx) * (1.0 - fy) * u
            a[y0, x1] += fx * (1.0 - fy) * u
            a[y1, x0] += (1.0 - fx) * fy * u
            a[y1, x1] += fx * fy * u
    return acc


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def bce_logits(z, y, w=None):
    """Weighted-mean binary cross-entropy in logit space: (loss, dloss/dz)."""
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0], i
    dz_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] dz = dz_arr
    cdef double[::1] wv
    cdef double total = 0.0, wsum = 0.0, zi
    if w is None:
        if n == 0:
            return 0.0, dz_arr
        with nogil:
            for i in range(n):
                zi = zv[i]
                total += fmax(zi, 0.0) - zi * yv[i] + log1p(exp(-fabs(zi)))
                dz[i] = (_sigmoid(zi) - yv[i]) / n
        return total / n, dz_arr
    wv = np.ascontiguousarray(w, dtype=np.float64)
    with nogil:
        for i in range(n):
            wsum += wv[i]
    if wsum == 0.0:
        return 0.0, dz_arr
    with nogil:
        for i in range(n):
            zi = zv[i]
            total += wv[i] * (fmax(zi, 0.0) - zi * yv[i] + log1p(exp(-fabs(zi))))
            dz[i] = (_sigmoid(zi) - yv[i]) * (wv[i] / wsum)
    return total / wsum, dz_arr


cdef void _forward(const double[::1] params, const cnp.int64_t[::1] sizes,
                   Py_ssize_t nl, double[:, :, ::1] acts, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t li, i, j, k, off = 0, n_in, n_out, woff, boff, wrow
    cdef double s
    for li in range(nl):
        n_in = sizes[li]
        n_out = sizes[li + 1]
        woff = off
        boff = off + n_in * n_out
        for i in range(n):
            for j in range(n_out):
                s = params[boff + j]
                wrow = woff + j * n_in
                for k in range(n_in):
                    s += params[wrow + k] * acts[li, i, k]
                if li < nl - 1 and s < 0.0:
                    s = 0.0
                acts[li + 1, i, j] = s
        off = boff + n_out


cdef void _backward(const double[::1] params, const cnp.int64_t[::1] sizes,
                    Py_ssize_t nl, double[:, :, ::1] acts,
                    double[:, ::1] g, double[:, ::1] g2,
                    double[::1] dparams, Py_ssize_t n, bint want_dx) noexcept nogil:
    cdef Py_ssize_t li, i, j, k, n_in, n_out, woff, boff, off, wrow
    cdef double s
    for li in range(nl - 1, -1, -1):
        n_in = sizes[li]
        n_out = sizes[li + 1]
        off = 0
        for k in range(li):
            off += (sizes[k] + 1) * sizes[k + 1]
        woff = off
        boff = off + n_in * n_out
        if li < nl - 1:
            for i in range(n):
                for j in range(n_out):
                    if acts[li + 1, i, j] <= 0.0:
                        g[i, j] = 0.0
        for j in range(n_out):
            wrow = woff + j * n_in
            for k in range(n_in):
                s = 0.0
                for i in range(n):
                    s += g[i, j] * acts[li, i, k]
                dparams[wrow + k] = s
            s = 0.0
            for i in range(n):
                s += g[i, j]
            dparams[boff + j] = s
        if li > 0 or want_dx:
            for i in range(n):
                for k in range(n_in):
                    s = 0.0
                    for j in range(n_out):
                        s += g[i, j] * params[woff + j * n_in + k]
                    g2[i, k] = s
            for i in range(n):
                for k in range(n_in):
                    g[i, k] = g2[i, k]


def _sizes_and_total(dims):
    sizes = np.asarray(list(dims) + [1], dtype=np.int64)
    total = 0
    for i in range(1, len(sizes)):
        total += (int(sizes[i - 1]) + 1) * int(sizes[i])
    return sizes, total


def mlp_forward(params, dims, x):
    """Logits of the ReLU MLP (hidden layers per ``dims``, scalar output)."""
    cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    sizes, total = _sizes_and_total(dims)
    if p.shape[0] != total:
        raise ValueError(f"parameter vector length {p.shape[0]} != {total}")
    cdef cnp.int64_t[::1] sz = sizes
    cdef Py_ssize_t nl = sz.shape[0] - 1, n = x_arr.shape[0]
    cdef Py_ssize_t maxw = int(max(sizes))
    acts_arr = np.zeros((nl + 1, n, maxw), dtype=np.float64)
    acts_arr[0, :, : x_arr.shape[1]] = x_arr
    cdef double[:, :, ::1] acts = acts_arr
    with nogil:
        _forward(p, sz, nl, acts, n)
    return np.array(acts_arr[nl, :, 0])


def mlp_backward(params, dims, x, dz):
    """Reverse-mode gradients of the MLP: (dparams, dx)."""
    cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] dzv = np.ascontiguousarray(dz, dtype=np.float64)
    sizes, total = _sizes_and_total(dims)
    if p.shape[0] != total:
        raise ValueError(f"parameter vector length {p.shape[0]} != {total}")
    cdef cnp.int64_t[::1] sz = sizes
    cdef Py_ssize_t nl = sz.shape[0] - 1, n = x_arr.shape[0], i
    cdef Py_ssize_t maxw = int(max(sizes))
    acts_arr = np.zeros((nl + 1, n, maxw), dtype=np.float64)
    acts_arr[0, :, : x_arr.shape[1]] = x_arr
    cdef double[:, :, ::1] acts = acts_arr
    dparams_arr = np.zeros(total, dtype=np.float64)
    cdef double[::1] dparams = dparams_arr
    g_arr = np.zeros((n, maxw), dtype=np.float64)
    g2_arr = np.zeros((n, maxw), dtype=np.float64)
    cdef double[:, ::1] g = g_arr
    cdef double[:, ::1] g2 = g2_arr
    with nogil:
        _forward(p, sz, nl, acts, n)
        for i in range(n):
            g[i, 0] = dzv[i]
        _backward(p, sz, nl, acts, g, g2, dparams, n, True)
    dx = np.array(g_arr[:, : x_arr.shape[1]])
    return dparams_arr, dx


def fit_head(x, y, dims, params0, steps, lr, momentum, l2_weight, aug_indices=None, avg_tail=0.0):
    """Fused training loop: momentum gradient descent on BCE + l2(params).

    lr may be a scalar or a per-step array (a decay schedule); avg_tail > 0
    returns the Polyak average of the last ceil(avg_tail * steps) iterates.
    """
    x_arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    sizes, total = _sizes_and_total(dims)
    params_arr = np.array(params0, dtype=np.float64, copy=True)
    if params_arr.shape[0] != total:
        raise ValueError(f"parameter vector length {params_arr.shape[0]} != {total}")
    losses_arr = np.zeros(int(steps), dtype=np.float64)
    cdef Py_ssize_t n_all = x_arr.shape[0]
    if n_all == 0:
        losses_arr += l2_weight * float(params_arr @ params_arr)
        return params_arr, losses_arr
    cdef cnp.int64_t[::1] sz = sizes
    cdef Py_ssize_t nl = sz.shape[0] - 1
    cdef Py_ssize_t maxw = int(max(sizes))
    cdef Py_ssize_t d0 = x_arr.shape[1]
    cdef cnp.int64_t[:, ::1] aug
    cdef bint use_aug = aug_indices is not None
    cdef Py_ssize_t k = n_all
    if use_aug:
        aug = np.ascontiguousarray(aug_indices, dtype=np.int64)
        k = aug.shape[1]
    else:
        aug = np.zeros((1, 1), dtype=np.int64)
    acts_arr = np.zeros((nl + 1, k, maxw), dtype=np.float64)
    cdef double[:, :, ::1] acts = acts_arr
    cdef double[:, ::1] xv = x_arr
    cdef double[::1] params = params_arr
    cdef double[::1] losses = losses_arr
    grad_arr = np.zeros(total, dtype=np.float64)
    vel_arr = np.zeros(total, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef double[::1] vel = vel_arr
    g_arr = np.zeros((k, maxw), dtype=np.float64)
    g2_arr = np.zeros((k, maxw), dtype=np.float64)
    cdef double[:, ::1] g = g_arr
    cdef double[:, ::1] g2 = g2_arr
    cdef Py_ssize_t s, i, j, row
    cdef Py_ssize_t nsteps = int(steps)
    cdef Py_ssize_t ptotal = total
    lrs_arr = np.array(np.broadcast_to(np.asarray(lr, dtype=np.float64), (nsteps,)), dtype=np.float64)
    cdef double[::1] lrs = lrs_arr
    cdef double fmom = momentum, fl2 = l2_weight
    cdef double loss, zi, yi, l2term
    cdef Py_ssize_t tail_from = nsteps
    cdef Py_ssize_t tail_n = 0
    if avg_tail > 0:
        tail_from = nsteps - <Py_ssize_t>int(np.ceil(avg_tail * nsteps))
    tail_arr = np.zeros(total, dtype=np.float64)
    cdef double[::1] tail_sum = tail_arr
    with nogil:
        for s in range(nsteps):
            for i in range(k):
                row = aug[s, i] if use_aug else i
                for j in range(d0):
                    acts[0, i, j] = xv[row, j]
            _forward(params, sz, nl, acts, k)
            loss = 0.0
            for i in range(k):
                zi = acts[nl, i, 0]
                yi = yv[aug[s, i]] if use_aug else yv[i]
                loss += fmax(zi, 0.0) - zi * yi + log1p(exp(-fabs(zi)))
                g[i, 0] = (_sigmoid(zi) - yi) / k
            loss /= k
            _backward(params, sz, nl, acts, g, g2, grad, k, False)
            l2term = 0.0
            for i in range(ptotal):
                l2term += params[i] * params[i]
                grad[i] += 2.0 * fl2 * params[i]
            losses[s] = loss + fl2 * l2term
            for i in range(ptotal):
                vel[i] = fmom * vel[i] + grad[i]
                params[i] -= lrs[s] * vel[i]
            if s >= tail_from:
                for i in range(ptotal):
                    tail_sum[i] += params[i]
                tail_n += 1
    if tail_n:
        for i in range(ptotal):
            params[i] = tail_sum[i] / tail_n
    return params_arr, losses_arr
