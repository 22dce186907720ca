"""Desk-scale experiments: fit implicit point heads on synthetic instances
under point vs dense-grid supervision and reproduce the qualitative effects of
the annotation scheme (more points help with diminishing returns, positional
encoding beats raw coordinates beats none, boundary-concentrated label noise
hurts more than random noise, half-point augmentation is safe).

Two experiment styles mirror the two kinds of study they reproduce:

* head-design studies (point sweep, coordinate/augmentation ablations) fit a
  separate free-mode head per instance on the "standard" feature profile;
* the annotation-quality (label noise) study fits one shared head on the
  whole suite per noisy dataset version, on the "clean-features" profile,
  matching the original setup where a single model is trained per dataset
  and point labels are redundant across instances.
"""

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from . import _kernels
from .head import (
    FeatureGrid,
    FourierEncoding,
    HeadArch,
    PointHeadParams,
    pool_region_features,
    sample_point_features,
)
from .losses import box_points_to_image, grid_cell_centers, grid_labels_from_mask, subsample_indices
from .masks import Bitmask, bbox_from_mask, boundary_distance, mask_iou
from .render import RenderConfig, render, render_dense
from .simulate import inject_label_noise, instance_rng, label_points, sample_uniform_points, simulate_dataset

FEATURE_CHANNELS = 8

# feature-profile amplitudes; the clean profile keeps interior features
# nearly constant and low-dimensional so that point labels are redundant
FEATURE_PROFILES = {
    # distance channel: normalized signed distance + white noise; smooth
    # correlated channels; white pure-noise channels
    "standard": dict(saturate_px=None, ch0_noise=0.5, ch0_smooth=False, mix=0.5, noise_amp=0.5, noise_smooth=False),
    # distance channel saturated outside a 3 px boundary band + smooth noise;
    # smooth low-amplitude pure-noise channels
    "clean-features": dict(saturate_px=3.0, ch0_noise=0.45, ch0_smooth=True, mix=0.8, noise_amp=0.45, noise_smooth=True),
}


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class SyntheticInstance:
    """Stand-in for a detected object: mask, box, and backbone-like features."""

    instance_id: int
    mask: Bitmask
    fgrid: FeatureGrid
    bbox: object


class Suite(list):
    """A generated list of SyntheticInstance plus its generation recipe."""

    def __init__(self, instances, seed, size, profile):
        super().__init__(instances)
        self.seed = seed
        self.size = size
        self.profile = profile


@dataclass(frozen=True)
class TrainConfig:
    supervision: str = "points"  # or "full-grid"
    n_points: int = 10
    grid_size: int = 14  # dense-supervision grid (G x G cell centers)
    steps: int = 300
    lr: float = 0.1
    lr_decay: str = "cosine"  # or "none"
    momentum: float = 0.9
    l2_weight: float = 1e-5
    augment: bool = False
    mode: str = "free"  # or "pooled-linear"
    coord_mode: str = "pe"  # "pe" | "rel" | "none"
    pe_m: int = 8
    pe_sigma: float = 0.5
    hidden: tuple = (16, 16, 16)
    init_scale: float = 0.1
    avg_tail: float = 0.25  # Polyak-average the last quarter of the iterates
    train_seed: int = 0
    point_seed: int = 0
    eval_res: int = 224
    eval_start_res: int = 28

    def __post_init__(self):
        if self.steps < 1 or self.lr <= 0:
            raise ValueError("steps must be >= 1 and lr > 0")
        if self.supervision not in ("points", "full-grid"):
            raise ValueError(f"unknown supervision {self.supervision!r}")
        if self.lr_decay not in ("cosine", "none"):
            raise ValueError(f"unknown lr decay {self.lr_decay!r}")


@dataclass
class TrainedHead:
    params: PointHeadParams
    losses: np.ndarray
    encoding: object  # FourierEncoding | None
    cfg: TrainConfig


@dataclass
class SweepRow:
    supervision: str
    mode: str
    n_points: int
    coord_mode: str
    augment: bool
    noise_mode: str
    noise_rate: float
    point_seed: int
    n_instances: int
    mean_iou: float
    std_iou: float


class SuiteDataset:
    """Adapter so the simulation pipeline can run over a synthetic suite."""

    def __init__(self, suite, dataset_id="toy-suite"):
        self.instances = suite
        self.dataset_id = dataset_id
        self._by_id = {s.instance_id: s for s in suite}

    def instance(self, instance_id):
        return self._by_id[instance_id]


def _smooth_noise(rng, size, sigma=6.0):
    f = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma)
    return f / max(float(np.abs(f).max()), 1e-12)


def _random_mask(rng, size):
    kind = rng.random()
    yy, xx = np.mgrid[0:size, 0:size]
    cx, cy = rng.uniform(0.3 * size, 0.7 * size, size=2)
    if kind < 0.6:  # rotated ellipse
        a = rng.uniform(0.12 * size, 0.38 * size)
        b = rng.uniform(0.12 * size, 0.38 * size)
        th = rng.uniform(0, np.pi)
        dx, dy = xx + 0.5 - cx, yy + 0.5 - cy
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        return Bitmask((u / a) ** 2 + (v / b) ** 2 <= 1.0)
    # star-convex blob: radius varies smoothly with angle
    n_lobes = rng.integers(2, 5)
    base = rng.uniform(0.15 * size, 0.3 * size)
    amp = rng.uniform(0.05, 0.25) * base
    phase = rng.uniform(0, 2 * np.pi)
    dx, dy = xx + 0.5 - cx, yy + 0.5 - cy
    ang = np.arctan2(dy, dx)
    rad = base + amp * np.cos(n_lobes * ang + phase)
    return Bitmask(dx**2 + dy**2 <= rad**2)


def generate_suite(n_instances, seed, size=64, profile="standard"):
    """Deterministic synthetic instances with mask area in 10%..80% of the box.

    Features (C=8): normalized signed boundary distance plus Gaussian noise,
    three smooth fields correlated with the mask, four pure-noise fields.
    The amplitudes and smoothness come from FEATURE_PROFILES[profile].
    """
    if n_instances < 1:
        raise ValueError("need at least one instance")
    prof = FEATURE_PROFILES[profile]
    instances = []
    for i in range(n_instances):
        rng = instance_rng(seed, i, stream=7)
        for _ in range(100):
            mask = _random_mask(rng, size)
            if mask.count() == 0:
                continue
            bbox = bbox_from_mask(mask)
            frac = mask.count() / (bbox.w * bbox.h)
            if 0.1 <= frac <= 0.8:
                break
        else:
            raise RuntimeError("failed to generate a mask within the area budget")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dist = boundary_distance(mask)
        signed = np.where(mask.array, dist, -dist)
        if prof["saturate_px"] is not None:
            signed = np.tanh(signed / prof["saturate_px"])
        else:
            signed = signed / max(float(np.abs(signed).max()), 1e-12)

        def noise_field(amp, smooth):
            if smooth:
                return amp * _smooth_noise(rng, size)
            return amp * rng.standard_normal((size, size))

        chans = np.empty((FEATURE_CHANNELS, size, size))
        chans[0] = signed + noise_field(prof["ch0_noise"], prof["ch0_smooth"])
        for c in range(1, 4):
            chans[c] = prof["mix"] * signed + (1.0 - prof["mix"]) * _smooth_noise(rng, size)
        for c in range(4, 8):
            chans[c] = noise_field(prof["noise_amp"], prof["noise_smooth"])
        instances.append(SyntheticInstance(i, mask, FeatureGrid(chans), bbox))
    return Suite(instances, seed, size, profile)


def _make_encoding(cfg):
    if cfg.coord_mode == "pe":
        return FourierEncoding(m=cfg.pe_m, sigma=cfg.pe_sigma, seed=cfg.train_seed)
    return None


def _coord_features(cfg, encoding, rel_xy):
    if cfg.coord_mode == "none":
        return np.zeros((len(rel_xy), 0))
    if cfg.coord_mode == "rel":
        return np.asarray(rel_xy, dtype=np.float64)
    return encoding.encode(rel_xy)


def _pe_dim(cfg):
    return {"none": 0, "rel": 2, "pe": 2 * cfg.pe_m}[cfg.coord_mode]


def _arch(cfg):
    return HeadArch(feature_dim=FEATURE_CHANNELS, pe_dim=_pe_dim(cfg), hidden=tuple(cfg.hidden))


def _lr_schedule(cfg):
    if cfg.lr_decay == "none":
        return np.full(cfg.steps, cfg.lr)
    # linear warmup over the first 10% of steps, then cosine to zero
    t = np.arange(cfg.steps) / max(cfg.steps - 1, 1)
    lrs = cfg.lr * 0.5 * (1.0 + np.cos(np.pi * t))
    w = max(int(0.1 * cfg.steps), 1)
    lrs[:w] *= np.arange(1, w + 1) / w
    return lrs


def build_supervision(instance, cfg):
    """(points_xy, labels) for the configured supervision mode.

    full-grid extracts a dense G x G label grid from the mask; points draws
    the annotation sampler's uniform points for (point_seed, instance).
    """
    if cfg.supervision == "full-grid":
        g = cfg.grid_size
        pts = box_points_to_image(grid_cell_centers(g, g), instance.bbox)
        labels = grid_labels_from_mask(instance, instance.bbox, g, g).ravel().astype(np.float64)
        return pts, labels
    pts = sample_uniform_points(instance.bbox, cfg.n_points, instance_rng(cfg.point_seed, instance.instance_id))
    labels = np.array([p.label for p in label_points(pts, instance)], dtype=np.float64)
    return pts, labels


def _head_inputs(instance, cfg, encoding, points_xy):
    feats = sample_point_features(instance.fgrid, points_xy).reshape(-1, FEATURE_CHANNELS)
    rel = np.column_stack(
        [
            (points_xy[:, 0] - instance.bbox.cx) / instance.bbox.w,
            (points_xy[:, 1] - instance.bbox.cy) / instance.bbox.h,
        ]
    )
    return np.concatenate([feats, _coord_features(cfg, encoding, rel)], axis=1)


def _aug_seed(cfg, instance_id):
    key = int(instance_id) if isinstance(instance_id, (int, np.integer)) else abs(hash(instance_id)) % (1 << 31)
    return (int(cfg.train_seed) << 20) ^ (key + 0xA46)


def _aug_indices(cfg, instance_id, n):
    if not cfg.augment or n == 0:
        return None
    k = (n + 1) // 2
    seed = _aug_seed(cfg, instance_id)
    return np.stack([subsample_indices(n, k, seed, it) for it in range(cfg.steps)])


def train_instance(instance, cfg, points_xy=None, labels=None):
    """Fit one instance's head; deterministic per (cfg seeds, inputs).

    points_xy/labels override the built-in supervision (used for noisy or
    externally simulated annotations). Raises DivergenceError on non-finite
    loss. With zero supervision points the parameters stay at their
    initialization.
    """
    encoding = _make_encoding(cfg)
    if points_xy is None:
        points_xy, labels = build_supervision(instance, cfg)
    points_xy = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.float64).ravel()
    x = _head_inputs(instance, cfg, encoding, points_xy)
    arch = _arch(cfg)
    aug_idx = _aug_indices(cfg, instance.instance_id, len(labels))

    init_rng = instance_rng(cfg.train_seed, instance.instance_id, stream=1)
    theta0 = cfg.init_scale * init_rng.standard_normal(arch.param_count)

    if cfg.mode == "free":
        flat, losses = _kernels.fit_head(
            x, labels, arch.dims, theta0, cfg.steps, _lr_schedule(cfg), cfg.momentum,
            cfg.l2_weight, aug_idx, cfg.avg_tail,
        )
    elif cfg.mode == "pooled-linear":
        flat, losses = _fit_pooled_linear(instance, cfg, arch, x, labels, aug_idx)
    else:
        raise ValueError(f"unknown mode {cfg.mode!r}")
    if not np.all(np.isfinite(losses)) or not np.all(np.isfinite(flat)):
        raise DivergenceError(
            f"training diverged (instance {instance.instance_id}, lr={cfg.lr}, steps={cfg.steps})"
        )
    return TrainedHead(PointHeadParams(flat, arch), losses, encoding, cfg)


def _fit_pooled_linear(instance, cfg, arch, x, labels, aug_idx):
    """Optimize the pooled-linear parameter generator (A, c) on one instance."""
    desc = pool_region_features(instance.fgrid, instance.bbox)
    rng = instance_rng(cfg.train_seed, instance.instance_id, stream=2)
    a_mat = 0.01 * rng.standard_normal((arch.param_count, len(desc)))
    c_vec = np.zeros(arch.param_count)
    vel_a = np.zeros_like(a_mat)
    vel_c = np.zeros_like(c_vec)
    losses = np.zeros(cfg.steps)
    lrs = _lr_schedule(cfg)
    n = len(labels)
    if n == 0:
        theta = a_mat @ desc + c_vec
        losses += cfg.l2_weight * float(theta @ theta)
        return theta, losses
    tail_from = cfg.steps - int(np.ceil(cfg.avg_tail * cfg.steps)) if cfg.avg_tail > 0 else cfg.steps
    tail_sum = np.zeros(arch.param_count)
    tail_n = 0
    for s in range(cfg.steps):
        idx = aug_idx[s] if aug_idx is not None else slice(None)
        xs, ys = x[idx], labels[idx]
        theta = a_mat @ desc + c_vec
        z = _kernels.mlp_forward(theta, arch.dims, xs)
        loss, dz = _kernels.bce_logits(z, ys)
        dtheta, _ = _kernels.mlp_backward(theta, arch.dims, xs, dz)
        dtheta += 2.0 * cfg.l2_weight * theta
        losses[s] = loss + cfg.l2_weight * float(theta @ theta)
        vel_a = cfg.momentum * vel_a + np.outer(dtheta, desc)
        vel_c = cfg.momentum * vel_c + dtheta
        a_mat -= lrs[s] * vel_a
        c_vec -= lrs[s] * vel_c
        if s >= tail_from:
            tail_sum += a_mat @ desc + c_vec
            tail_n += 1
    if tail_n:
        return tail_sum / tail_n, losses
    return a_mat @ desc + c_vec, losses


def train_shared_head(suite, cfg, per_instance_points=None):
    """Fit one head on the pooled points of every instance (shared weights).

    The shared head plays the role of a mask head trained once per dataset
    version; per-instance masks still differ through the sampled features.
    Returns a TrainedHead usable with evaluate_iou on any suite instance.
    """
    encoding = _make_encoding(cfg)
    arch = _arch(cfg)
    xs, ys, spans = [], [], []
    for inst in suite:
        if per_instance_points is None:
            pts, labels = build_supervision(inst, cfg)
        else:
            pts, labels = per_instance_points[inst.instance_id]
        xs.append(_head_inputs(inst, cfg, encoding, pts))
        ys.append(labels)
        spans.append((inst.instance_id, len(labels)))
    x = np.concatenate(xs) if xs else np.zeros((0, arch.input_dim))
    y = np.concatenate(ys) if ys else np.zeros(0)

    aug_idx = None
    if cfg.augment and len(y):
        rows = []
        offsets = np.cumsum([0] + [n for _, n in spans])
        for s in range(cfg.steps):
            step_rows = [
                off + subsample_indices(n, (n + 1) // 2, _aug_seed(cfg, iid), s)
                for (iid, n), off in zip(spans, offsets)
                if n > 0
            ]
            rows.append(np.concatenate(step_rows))
        aug_idx = np.stack(rows)

    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.train_seed), 0x5A1D]))
    theta0 = cfg.init_scale * rng.standard_normal(arch.param_count)
    flat, losses = _kernels.fit_head(
        x, y, arch.dims, theta0, cfg.steps, _lr_schedule(cfg), cfg.momentum,
        cfg.l2_weight, aug_idx, cfg.avg_tail,
    )
    if not np.all(np.isfinite(losses)) or not np.all(np.isfinite(flat)):
        raise DivergenceError(f"shared training diverged (lr={cfg.lr}, steps={cfg.steps})")
    return TrainedHead(PointHeadParams(flat, arch), losses, encoding, cfg)


def head_point_fn(instance, trained):
    """Probability function over the box's normalized frame for rendering."""
    cfg = trained.cfg
    flat, dims = trained.params.flat, trained.params.arch.dims

    def point_fn(coords):
        coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
        img_pts = box_points_to_image(coords, instance.bbox)
        x = _head_inputs(instance, cfg, trained.encoding, img_pts)
        z = _kernels.mlp_forward(flat, dims, x)
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))

    return point_fn


def evaluate_iou(instance, trained, dense=False):
    """Mask IoU at the evaluation resolution (subdivision-rendered by default)."""
    cfg = trained.cfg
    fn = head_point_fn(instance, trained)
    if dense:
        grid, _ = render_dense(fn, cfg.eval_res)
    else:
        rcfg = RenderConfig(start_res=cfg.eval_start_res, target_res=cfg.eval_res)
        grid, _ = render(fn, rcfg)
    pred = Bitmask(grid.values > 0.5)
    gt = Bitmask(grid_labels_from_mask(instance, instance.bbox, cfg.eval_res, cfg.eval_res) > 0)
    return mask_iou(pred, gt)


def _collection_points(collection):
    """{instance_id: (points_xy, labels)} from a simulated collection."""
    out = {}
    for ann in collection.annotations:
        pts = np.array([[p.x, p.y] for p in ann.points], dtype=np.float64).reshape(-1, 2)
        labels = np.array([p.label for p in ann.points], dtype=np.float64)
        out[ann.instance_id] = (pts, labels)
    return out


def _run_config(suite, cfg, per_instance_points=None):
    """Train every instance under one config; returns the per-instance IoUs."""
    ious = []
    for inst in suite:
        if per_instance_points is None:
            trained = train_instance(inst, cfg)
        else:
            pts, labels = per_instance_points[inst.instance_id]
            trained = train_instance(inst, cfg, pts, labels)
        ious.append(evaluate_iou(inst, trained))
    return np.array(ious)


def _row(cfg, point_seed, ious, mode=None, noise=("none", 0.0)):
    return SweepRow(
        supervision=cfg.supervision,
        mode=mode or cfg.mode,
        n_points=cfg.n_points if cfg.supervision == "points" else cfg.grid_size**2,
        coord_mode=cfg.coord_mode,
        augment=cfg.augment,
        noise_mode=noise[0],
        noise_rate=noise[1],
        point_seed=point_seed,
        n_instances=len(ious),
        mean_iou=float(np.mean(ious)),
        std_iou=float(np.std(ious)),
    )


def run_point_sweep(suite, n_list=(1, 2, 5, 10, 20, 50), point_seeds=(0, 1, 2, 3, 4), cfg=TrainConfig()):
    """Mean IoU per point budget plus the dense-grid reference.

    Returns a list of SweepRow: one row per (N, point seed) and one full-grid
    reference row (dense supervision has no point-location randomness).
    """
    suite_ds = SuiteDataset(suite)
    rows = []
    for n in n_list:
        for ps in point_seeds:
            coll = simulate_dataset(suite_ds, n, ps)
            pts = _collection_points(coll)
            run_cfg = replace(cfg, supervision="points", n_points=n, point_seed=ps)
            rows.append(_row(run_cfg, ps, _run_config(suite, run_cfg, pts)))
    full_cfg = replace(cfg, supervision="full-grid", augment=False)
    rows.append(_row(full_cfg, -1, _run_config(suite, full_cfg)))
    return rows


def sweep_means(rows):
    """{(supervision, n_points): mean over seeds of mean_iou}."""
    acc = {}
    for r in rows:
        acc.setdefault((r.supervision, r.n_points), []).append(r.mean_iou)
    return {k: float(np.mean(v)) for k, v in acc.items()}


ABLATION_NOISE = (("none", 0.0), ("random", 0.05), ("boundary", 0.05))
AUGMENT_MARGIN = 0.01  # oracle-measured augment-vs-not gap is -0.005 +/- 0.005 mean IoU
QUALITY_STUDY_STEPS = 1500


def run_ablations(suite, point_seeds=(0, 1, 2, 3, 4), cfg=TrainConfig(), quality_suite=None):
    """Head-design and annotation-quality ablations; returns (rows, summary).

    Head-design rows: the {coord mode} x {augment} x {noise} cross with
    per-instance free heads on ``suite``. Annotation-quality rows: one
    shared head per noisy dataset version on the clean-features twin of the
    suite (regenerated from its recipe unless ``quality_suite`` is given).

    The summary reports the direction checks: pe >= rel >= none (free rows),
    clean >= random >= boundary (shared rows), augmentation no worse than
    not augmenting (free rows, 0.005 margin).
    """
    suite_ds = SuiteDataset(suite)
    rows = []
    free_means = {}
    for coord_mode in ("none", "rel", "pe"):
        for augment in (False, True):
            for noise_mode, rate in ABLATION_NOISE:
                per_seed = []
                for ps in point_seeds:
                    coll = simulate_dataset(suite_ds, cfg.n_points, ps)
                    if noise_mode != "none":
                        coll = inject_label_noise(coll, rate, noise_mode, ps, suite_ds)
                    pts = _collection_points(coll)
                    run_cfg = replace(cfg, coord_mode=coord_mode, augment=augment, point_seed=ps)
                    ious = _run_config(suite, run_cfg, pts)
                    rows.append(_row(run_cfg, ps, ious, noise=(noise_mode, rate)))
                    per_seed.append(float(np.mean(ious)))
                free_means[(coord_mode, augment, noise_mode)] = float(np.mean(per_seed))

    if quality_suite is None:
        quality_suite = generate_suite(len(suite), suite.seed, suite.size, profile="clean-features")
    quality_ds = SuiteDataset(quality_suite, dataset_id="toy-suite-clean")
    shared_cfg = replace(cfg, steps=QUALITY_STUDY_STEPS, augment=False, mode="free")
    shared_means = {}
    for noise_mode, rate in ABLATION_NOISE:
        per_seed = []
        for ps in point_seeds:
            coll = simulate_dataset(quality_ds, cfg.n_points, ps)
            if noise_mode != "none":
                coll = inject_label_noise(coll, rate, noise_mode, ps, quality_ds)
            run_cfg = replace(shared_cfg, point_seed=ps, train_seed=ps)
            trained = train_shared_head(quality_suite, run_cfg, _collection_points(coll))
            ious = np.array([evaluate_iou(inst, trained) for inst in quality_suite])
            rows.append(_row(run_cfg, ps, ious, mode="shared", noise=(noise_mode, rate)))
            per_seed.append(float(np.mean(ious)))
        shared_means[noise_mode] = float(np.mean(per_seed))

    summary = {
        "free_means": free_means,
        "shared_noise_means": shared_means,
        "coord_ordering_ok": (
            free_means[("pe", False, "none")]
            >= free_means[("rel", False, "none")]
            >= free_means[("none", False, "none")]
        ),
        "noise_ordering_ok": shared_means["none"] >= shared_means["random"] >= shared_means["boundary"],
        "augment_ok": free_means[("pe", True, "none")] >= free_means[("pe", False, "none")] - AUGMENT_MARGIN,
    }
    return rows, summary


def smoothed_losses(losses, window=10):
    """Trailing moving average of the loss curve."""
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) < window:
        return losses.copy()
    c = np.cumsum(np.concatenate([[0.0], losses]))
    return (c[window:] - c[:-window]) / window


def write_results_csv(rows, path):
    cols = [
        "supervision",
        "mode",
        "n_points",
        "coord_mode",
        "augment",
        "noise_mode",
        "noise_rate",
        "point_seed",
        "n_instances",
        "mean_iou",
        "std_iou",
    ]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for r in rows:
            w.writerow([getattr(r, c) for c in cols])
