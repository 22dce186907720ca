"""Pure-NumPy kernel backend.

Reference implementations of the hot numeric kernels. The compiled backend
in ``_core.pyx`` mirrors these signatures exactly; import-time selection
happens in ``pointsup._kernels``. Everything here is deterministic: no RNG,
fixed accumulation order per call.
"""

import numpy as np

BACKEND = "pure"


def _neighbors(p, size):
    """Clamp pixel-space coords and split into (low index, fraction)."""
    p = np.clip(p, 0.0, size - 1.0)
    lo = np.floor(p).astype(np.intp)
    if size > 1:
        np.minimum(lo, size - 2, out=lo)
    else:
        lo.fill(0)
    frac = p - lo
    if size == 1:
        frac = np.zeros_like(frac)
    return lo, frac


def _lerp(a, b, t):
    # exact at t == 0 (a + 0), t == 1 (b), and for a == b (a + t*0)
    return np.where(t == 1.0, b, a + t * (b - a))


def bilinear_gather(field, px, py):
    """Sample a (H, W) field at pixel-space coords with clamp-to-edge borders.

    Exact (bit-equal) at integer coords and on constant patches; the output
    is clamped into the range of the four corner values.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape
    x0, fx = _neighbors(np.asarray(px, dtype=np.float64), w)
    y0, fy = _neighbors(np.asarray(py, dtype=np.float64), h)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    c00, c01 = field[y0, x0], field[y0, x1]
    c10, c11 = field[y1, x0], field[y1, x1]
    v = _lerp(_lerp(c00, c01, fx), _lerp(c10, c11, fx), fy)
    lo = np.minimum(np.minimum(c00, c01), np.minimum(c10, c11))
    hi = np.maximum(np.maximum(c00, c01), np.maximum(c10, c11))
    return np.minimum(np.maximum(v, lo), hi)


def bilinear_scatter(acc, px, py, upstream):
    """Accumulate d(sample)/d(field) * upstream into ``acc`` (in place)."""
    h, w = acc.shape
    x0, fx = _neighbors(np.asarray(px, dtype=np.float64), w)
    y0, fy = _neighbors(np.asarray(py, dtype=np.float64), h)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    up = np.asarray(upstream, dtype=np.float64)
    np.add.at(acc, (y0, x0), (1.0 - fx) * (1.0 - fy) * up)
    np.add.at(acc, (y0, x1), fx * (1.0 - fy) * up)
    np.add.at(acc, (y1, x0), (1.0 - fx) * fy * up)
    np.add.at(acc, (y1, x1), fx * fy * up)
    return acc


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_logits(z, y, w=None):
    """Weighted-mean binary cross-entropy in logit space.

    Returns ``(loss, dloss/dz)``. Uses max(z,0) - z*y + log1p(exp(-|z|));
    the gradient is (sigmoid(z) - y) * w / sum(w). A zero weight sum yields
    loss 0 and zero gradient.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    if w is None:
        n = z.size
        if n == 0:
            return 0.0, np.zeros_like(z)
        loss = float(np.mean(per))
        dz = (_sigmoid(z) - y) / n
        return loss, dz
    w = np.asarray(w, dtype=np.float64)
    wsum = float(np.sum(w))
    if wsum == 0.0:
        return 0.0, np.zeros_like(z)
    loss = float(np.sum(per * w) / wsum)
    dz = (_sigmoid(z) - y) * (w / wsum)
    return loss, dz


def _unpack_offsets(dims):
    """Per-layer (w_off, b_off, out, in) tuples for the flat parameter vector."""
    sizes = list(dims) + [1]
    out = []
    off = 0
    for i in range(1, len(sizes)):
        n_in, n_out = sizes[i - 1], sizes[i]
        out.append((off, off + n_in * n_out, n_out, n_in))
        off += n_in * n_out + n_out
    return out, off


def _forward_cache(params, dims, x):
    layers, total = _unpack_offsets(dims)
    if params.shape[0] != total:
        raise ValueError(f"parameter vector length {params.shape[0]} != {total}")
    acts = [x]
    a = x
    for li, (woff, boff, n_out, n_in) in enumerate(layers):
        wm = params[woff:boff].reshape(n_out, n_in)
        b = params[boff : boff + n_out]
        pre = a @ wm.T + b
        if li < len(layers) - 1:
            a = np.maximum(pre, 0.0)
        else:
            a = pre
        acts.append(a)
    return acts[-1][:, 0], acts


def mlp_forward(params, dims, x):
    """Logits of the ReLU MLP (hidden layers per ``dims``, scalar output).

    params: flat float64 vector, per layer weights row-major then bias.
    dims: (d_in, h1, ..., hk); x: (n, d_in). Returns (n,) logits.
    """
    z, _ = _forward_cache(np.asarray(params, np.float64), dims, np.asarray(x, np.float64))
    return z


def mlp_backward(params, dims, x, dz):
    """Reverse-mode gradients of the MLP: (dparams, dx)."""
    params = np.asarray(params, np.float64)
    x = np.asarray(x, np.float64)
    _, acts = _forward_cache(params, dims, x)
    return _backward_from_cache(params, dims, acts, np.asarray(dz, np.float64))


def _backward_from_cache(params, dims, acts, dz):
    layers, total = _unpack_offsets(dims)
    dparams = np.zeros(total)
    grad = dz[:, None]
    for li in range(len(layers) - 1, -1, -1):
        woff, boff, n_out, n_in = layers[li]
        wm = params[woff:boff].reshape(n_out, n_in)
        a_prev = acts[li]
        if li < len(layers) - 1:
            # acts[li+1] holds relu(pre); relu' = 1 where post-activation > 0
            grad = grad * (acts[li + 1] > 0.0)
        dparams[woff:boff] = (grad.T @ a_prev).ravel()
        dparams[boff : boff + n_out] = grad.sum(axis=0)
        grad = grad @ wm
    return dparams, grad


def fit_head(x, y, dims, params0, steps, lr, momentum, l2_weight, aug_indices=None, avg_tail=0.0):
    """Fused training loop: momentum gradient descent on BCE + l2(params).

    lr may be a scalar or a per-step array (a decay schedule). aug_indices:
    optional (steps, k) int64 matrix of per-step point subsets. avg_tail > 0
    returns the Polyak average of the last ceil(avg_tail * steps) iterates
    (cuts the stochastic wander of subsampled training). Returns (params,
    losses) where losses[s] is the objective before update s. Zero
    supervised points: parameters are left untouched (no signal).
    """
    params = np.array(params0, dtype=np.float64, copy=True)
    losses = np.zeros(steps)
    lrs = np.broadcast_to(np.asarray(lr, dtype=np.float64), (steps,))
    if x.shape[0] == 0:
        losses += l2_weight * float(params @ params)
        return params, losses
    tail_from = steps - int(np.ceil(avg_tail * steps)) if avg_tail > 0 else steps
    tail_sum = np.zeros_like(params)
    tail_n = 0
    vel = np.zeros_like(params)
    for s in range(steps):
        if aug_indices is None:
            xs, ys = x, y
        else:
            idx = aug_indices[s]
            xs, ys = x[idx], y[idx]
        z, acts = _forward_cache(params, dims, xs)
        loss, dz = bce_logits(z, ys)
        grad, _ = _backward_from_cache(params, dims, acts, dz)
        grad += (2.0 * l2_weight) * params
        losses[s] = loss + l2_weight * float(params @ params)
        vel *= momentum
        vel += grad
        params -= lrs[s] * vel
        if s >= tail_from:
            tail_sum += params
            tail_n += 1
    if tail_n:
        params = tail_sum / tail_n
    return params, losses
