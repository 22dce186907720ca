"""Dynamically-parameterized point head: a ReLU MLP over fine-grained point
features plus Fourier-encoded box-relative coordinates, with exact reverse-mode
gradients and l2 regularization of the generated parameters.

The parameter vector layout is layer-by-layer (input -> hidden1 -> hidden2 ->
hidden3 -> output), weights row-major then bias. Callers apply the sigmoid at
inference; training works on logits.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class HeadArch:
    """Shape descriptor for the point-head MLP (3 hidden layers, scalar out)."""

    feature_dim: int = 256
    pe_dim: int = 128
    hidden: tuple = (256, 256, 256)

    def __post_init__(self):
        if len(self.hidden) != 3:
            raise ValueError("the point head has exactly 3 hidden layers")
        if self.feature_dim < 0 or self.pe_dim < 0 or self.input_dim < 1:
            raise ValueError("head input must have at least one channel")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")

    @property
    def input_dim(self):
        return self.feature_dim + self.pe_dim

    @property
    def dims(self):
        return (self.input_dim,) + tuple(self.hidden)

    @property
    def layer_shapes(self):
        """[(n_out, n_in), ...] for the 4 weight matrices."""
        sizes = list(self.dims) + [1]
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    @property
    def param_count(self):
        return sum(o * i + o for o, i in self.layer_shapes)

    def to_dict(self):
        return {
            "feature_dim": self.feature_dim,
            "pe_dim": self.pe_dim,
            "hidden": list(self.hidden),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["feature_dim"]), int(d["pe_dim"]), tuple(d["hidden"]))


class PointHeadParams:
    """Flat parameter vector tied to its architecture."""

    __slots__ = ("flat", "arch")

    def __init__(self, flat, arch):
        flat = np.ascontiguousarray(flat, dtype=np.float64).ravel()
        if flat.shape[0] != arch.param_count:
            raise ValueError(f"expected {arch.param_count} parameters, got {flat.shape[0]}")
        if not np.all(np.isfinite(flat)):
            raise ValueError("parameters must be finite")
        self.flat = flat
        self.arch = arch

    @classmethod
    def zeros(cls, arch):
        return cls(np.zeros(arch.param_count), arch)

    @classmethod
    def pack(cls, layers, arch):
        """Build the flat vector from [(W, b), ...] in layer order."""
        chunks = []
        for (w, b), (n_out, n_in) in zip(layers, arch.layer_shapes):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ValueError(f"layer shape mismatch: {w.shape}, {b.shape}")
            chunks.append(w.ravel())
            chunks.append(b)
        return cls(np.concatenate(chunks), arch)

    def unpack(self):
        """[(W, b), ...] views into the flat vector."""
        out = []
        off = 0
        for n_out, n_in in self.arch.layer_shapes:
            w = self.flat[off : off + n_out * n_in].reshape(n_out, n_in)
            off += n_out * n_in
            b = self.flat[off : off + n_out]
            off += n_out
            out.append((w, b))
        return out


class FourierEncoding:
    """Random Fourier features of box-relative coordinates.

    encode(p) = [sin(2*pi*B@p), cos(2*pi*B@p)] with a fixed m x 2 frequency
    matrix B of N(0, sigma^2) draws; B is frozen at construction, never
    trained.
    """

    __slots__ = ("b_matrix", "m", "sigma", "seed")

    def __init__(self, m=64, sigma=1.0, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence([0x9E3779B9, int(seed)]))
        self.b_matrix = sigma * rng.standard_normal((m, 2))
        self.b_matrix.setflags(write=False)
        self.m = m
        self.sigma = sigma
        self.seed = seed

    @property
    def dim(self):
        return 2 * self.m

    def encode(self, rel_xy):
        """(n, 2) box-relative coords -> (n, 2m) features (or 1-D for one point)."""
        p = np.asarray(rel_xy, dtype=np.float64)
        single = p.ndim == 1
        p = p.reshape(-1, 2)
        phase = 2.0 * np.pi * (p @ self.b_matrix.T)
        out = np.concatenate([np.sin(phase), np.cos(phase)], axis=1)
        return out[0] if single else out


def encode_position(rel_xy, enc):
    """Fourier-encode one box-relative coordinate pair."""
    return enc.encode(np.asarray(rel_xy, dtype=np.float64).reshape(2))


def head_forward(params, feature, pe):
    """Point-head logit for a single point (sigmoid is the caller's concern)."""
    x = _stack_inputs(params.arch, feature, pe)
    return float(_kernels.mlp_forward(params.flat, params.arch.dims, x)[0])


def head_forward_batch(params, features, pes):
    """Logits for a batch: features (n, feature_dim), pes (n, pe_dim)."""
    x = _stack_inputs_batch(params.arch, features, pes)
    return _kernels.mlp_forward(params.flat, params.arch.dims, x)


def head_backward(params, feature, pe, upstream):
    """Exact gradients (dparams, dfeature); the encoding is a constant input."""
    x = _stack_inputs(params.arch, feature, pe)
    dparams, dx = _kernels.mlp_backward(
        params.flat, params.arch.dims, x, np.asarray([upstream], dtype=np.float64)
    )
    return dparams, dx[0, : params.arch.feature_dim].copy()


def head_backward_batch(params, features, pes, upstream):
    x = _stack_inputs_batch(params.arch, features, pes)
    dparams, dx = _kernels.mlp_backward(
        params.flat, params.arch.dims, x, np.asarray(upstream, dtype=np.float64)
    )
    return dparams, dx[:, : params.arch.feature_dim].copy()


def _stack_inputs(arch, feature, pe):
    feature = np.asarray(feature, dtype=np.float64).ravel()
    pe = np.asarray(pe, dtype=np.float64).ravel()
    if feature.shape[0] != arch.feature_dim or pe.shape[0] != arch.pe_dim:
        raise ValueError(
            f"input dims ({feature.shape[0]}, {pe.shape[0]}) do not match arch "
            f"({arch.feature_dim}, {arch.pe_dim})"
        )
    return np.concatenate([feature, pe])[None, :]


def _stack_inputs_batch(arch, features, pes):
    features = np.asarray(features, dtype=np.float64).reshape(-1, arch.feature_dim)
    pes = np.asarray(pes, dtype=np.float64).reshape(-1, arch.pe_dim) if arch.pe_dim else np.zeros((len(features), 0))
    if len(features) != len(pes):
        raise ValueError("features and encodings must have equal length")
    return np.concatenate([features, pes], axis=1)


def l2_param_loss(params, weight=1e-5):
    """l2 penalty on generated parameters: (weight * sum(theta^2), gradient)."""
    flat = params.flat if isinstance(params, PointHeadParams) else np.asarray(params, np.float64)
    return weight * float(flat @ flat), (2.0 * weight) * flat


@dataclass
class FeatureGrid:
    """C x H x W stand-in for the fine-grained backbone feature map."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"feature grid must be C x H x W, got {v.shape}")
        self.values = v

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]


def sample_point_features(fgrid, points_xy):
    """Per-channel bilinear features at continuous image points: (n, C).

    Shares the bilinear kernel (and thus its gradient) with the loss module;
    image point (x, y) lands at pixel-space (x - 0.5, y - 0.5).
    """
    pts = np.asarray(points_xy, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    px = pts[:, 0] - 0.5
    py = pts[:, 1] - 0.5
    out = np.empty((len(pts), fgrid.channels))
    for c in range(fgrid.channels):
        out[:, c] = _kernels.bilinear_gather(fgrid.values[c], px, py)
    return out[0] if single else out


def pool_region_features(fgrid, box):
    """Mean feature over pixels whose centers fall inside the box: (C,)."""
    cols = np.arange(fgrid.width) + 0.5
    rows = np.arange(fgrid.height) + 0.5
    sel_c = (cols >= box.x) & (cols <= box.x + box.w)
    sel_r = (rows >= box.y) & (rows <= box.y + box.h)
    region = fgrid.values[:, sel_r][:, :, sel_c]
    if region.shape[1] == 0 or region.shape[2] == 0:
        raise ValueError("box covers no pixel centers")
    return region.reshape(fgrid.channels, -1).mean(axis=1)


class ParamHead:
    """Generates the per-instance parameter vector for the point head.

    free mode: the vector itself is the optimizable state (initialized to
    zeros). pooled-linear mode: params = A @ descriptor + c with trainable
    (A, c); A starts at N(0, 0.01^2), c at zero.
    """

    def __init__(self, arch, mode, descriptor_dim=None, rng_seed=0):
        if mode not in ("free", "pooled-linear"):
            raise ValueError(f"unknown mode {mode!r}")
        self.arch = arch
        self.mode = mode
        if mode == "pooled-linear":
            if descriptor_dim is None:
                raise ValueError("pooled-linear mode needs a descriptor dimension")
            rng = np.random.default_rng(np.random.SeedSequence([0x51F0A11, int(rng_seed)]))
            self.a_matrix = 0.01 * rng.standard_normal((arch.param_count, descriptor_dim))
            self.bias = np.zeros(arch.param_count)
        else:
            self.a_matrix = None
            self.bias = None

    def generate(self, descriptor=None):
        if self.mode == "free":
            return PointHeadParams.zeros(self.arch)
        d = np.asarray(descriptor, dtype=np.float64).ravel()
        if d.shape[0] != self.a_matrix.shape[1]:
            raise ValueError(
                f"descriptor dim {d.shape[0]} != expected {self.a_matrix.shape[1]}"
            )
        return PointHeadParams(self.a_matrix @ d + self.bias, self.arch)

    def backward(self, descriptor, dparams):
        """Gradients (dA, dc) of a loss whose params-gradient is ``dparams``."""
        if self.mode != "pooled-linear":
            raise ValueError("backward applies to pooled-linear mode only")
        d = np.asarray(descriptor, dtype=np.float64).ravel()
        dparams = np.asarray(dparams, dtype=np.float64).ravel()
        return np.outer(dparams, d), dparams.copy()


def param_head(arch, mode, descriptor=None, descriptor_dim=None, rng_seed=0):
    """One-shot helper: build a ParamHead and generate one parameter vector."""
    ph = ParamHead(
        arch,
        mode,
        descriptor_dim=(len(np.ravel(descriptor)) if descriptor is not None else descriptor_dim),
        rng_seed=rng_seed,
    )
    return ph.generate(descriptor)
