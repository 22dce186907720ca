"""Point-supervision kernels: bilinear sampling of grid predictions at point
locations, logit-space cross-entropy with exact gradients, outside-box point
filtering, dense grid-label extraction, and the half-subsampling augmentation.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .masks import BoundingBox

_EPS = np.finfo(np.float64).eps


class ZeroWeightWarning(UserWarning):
    """All point weights are zero; the loss carries no signal."""


@dataclass
class GridPrediction:
    """H x W scalar field on pixel centers (logits unless stated otherwise)."""

    values: np.ndarray
    domain: str = "box-normalized"  # or "image-absolute"

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"grid must be 2-D and non-empty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        self.values = v

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass
class PointBatch:
    """Points in the normalized [0,1]^2 domain with labels and weights."""

    coords: np.ndarray  # (n, 2) of (u, v)
    labels: np.ndarray  # (n,) binary
    weights: np.ndarray = field(default=None)  # (n,); 1 = supervised

    def __post_init__(self):
        self.coords = np.ascontiguousarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64).ravel()
        if self.weights is None:
            self.weights = np.ones(len(self.labels))
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64).ravel()
        if not (len(self.coords) == len(self.labels) == len(self.weights)):
            raise ValueError("coords, labels and weights must have equal length")

    def __len__(self):
        return len(self.labels)


def to_pixel_coords(u, size):
    """Map normalized coords to pixel space: u * size - 0.5, ulp-snapped.

    The float round trip (i + 0.5) / size * size is off by ~1 ulp for some
    sizes; results within a few ulps of an integer are snapped so sampling
    stays exact at pixel centers.
    """
    p = np.asarray(u, dtype=np.float64) * size - 0.5
    r = np.rint(p)
    snap = np.abs(p - r) <= 8.0 * _EPS * np.maximum(1.0, np.abs(p))
    return np.where(snap, r, p)


def bilinear_sample(grid, coords):
    """Sample a grid at normalized (u, v) points via bilinear interpolation.

    (u, v) maps to pixel space (u*W - 0.5, v*H - 0.5) and is clamped to
    [0, W-1] x [0, H-1]; exact at pixel centers.
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(coords)):
        raise ValueError("point coordinates must be finite")
    px = to_pixel_coords(coords[:, 0], grid.width)
    py = to_pixel_coords(coords[:, 1], grid.height)
    return _kernels.bilinear_gather(grid.values, px, py)


def bilinear_backward(grid, coords, upstream_grads):
    """Gradient of bilinear_sample w.r.t. the grid, accumulated over points."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    px = to_pixel_coords(coords[:, 0], grid.width)
    py = to_pixel_coords(coords[:, 1], grid.height)
    acc = np.zeros((grid.height, grid.width))
    _kernels.bilinear_scatter(acc, px, py, np.asarray(upstream_grads, dtype=np.float64))
    return acc


def point_bce(logits, labels, weights=None):
    """Weighted-mean binary cross-entropy on logits: (loss, dloss/dlogits).

    Numerically stable logit-space form; probabilities are never
    materialized. Zero total weight yields loss 0, zero gradient, and a
    ZeroWeightWarning.
    """
    logits = np.asarray(logits, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if len(logits) != len(labels):
        raise ValueError("logits and labels must have equal length")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if len(weights) != len(logits):
            raise ValueError("weights must match logits length")
        if float(weights.sum()) == 0.0:
            warnings.warn("all point weights are zero", ZeroWeightWarning, stacklevel=2)
    elif len(logits) == 0:
        warnings.warn("all point weights are zero", ZeroWeightWarning, stacklevel=2)
    return _kernels.bce_logits(logits, labels, weights)


def filter_points_to_box(points_xy, labels, box, weights=None):
    """Re-express image-absolute points in a predicted box's normalized frame.

    Points outside the (closed) box get weight 0; points already weighted 0
    stay 0, so filtering twice with the same box is a no-op. A degenerate
    box zeroes every weight.
    """
    pts = np.asarray(points_xy, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.float64).ravel()
    prev = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if isinstance(box, BoundingBox):
        bx, by, bw, bh = box.x, box.y, box.w, box.h
    else:
        bx, by, bw, bh = map(float, box)
    if bw <= 0 or bh <= 0:
        return PointBatch(np.full((len(pts), 2), 0.5), labels, np.zeros(len(pts)))
    inside = (
        (pts[:, 0] >= bx)
        & (pts[:, 0] <= bx + bw)
        & (pts[:, 1] >= by)
        & (pts[:, 1] <= by + bh)
    )
    coords = np.column_stack([(pts[:, 0] - bx) / bw, (pts[:, 1] - by) / bh])
    return PointBatch(coords, labels, np.where(inside, prev, 0.0))


def grid_cell_centers(grid_w, grid_h):
    """Normalized (u, v) centers of a grid, row-major: (grid_h*grid_w, 2)."""
    us = (np.arange(grid_w) + 0.5) / grid_w
    vs = (np.arange(grid_h) + 0.5) / grid_h
    uu, vv = np.meshgrid(us, vs)
    return np.column_stack([uu.ravel(), vv.ravel()])


def box_points_to_image(coords, box):
    """Map box-normalized (u, v) to continuous image coordinates."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    return np.column_stack([box.x + coords[:, 0] * box.w, box.y + coords[:, 1] * box.h])


def grid_labels_from_mask(instance, box, grid_w, grid_h):
    """Dense (grid_h, grid_w) labels: mask value at the pixel containing each
    box-normalized cell center. Cell centers falling outside the image are
    clamped to the nearest pixel."""
    centers = box_points_to_image(grid_cell_centers(grid_w, grid_h), box)
    a = instance.mask.array
    cols = np.clip(np.floor(centers[:, 0]).astype(np.intp), 0, a.shape[1] - 1)
    rows = np.clip(np.floor(centers[:, 1]).astype(np.intp), 0, a.shape[0] - 1)
    return a[rows, cols].astype(np.int8).reshape(grid_h, grid_w)


def augment_subsample(batch, rng_seed, iteration=0):
    """Keep a uniformly-chosen half of the points (ceil(n/2), no replacement).

    Deterministic per (seed, iteration); selected points keep input order.
    """
    n = len(batch)
    if n < 1:
        raise ValueError("cannot subsample an empty batch")
    k = (n + 1) // 2
    idx = subsample_indices(n, k, rng_seed, iteration)
    return PointBatch(batch.coords[idx], batch.labels[idx], batch.weights[idx])


def subsample_indices(n, k, rng_seed, iteration=0):
    """Sorted indices of a uniform k-subset of range(n), seeded per iteration."""
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), int(iteration)]))
    return np.sort(rng.choice(n, size=k, replace=False))
