"""Adaptive subdivision rendering: refine a coarse point-head prediction to a
high-resolution mask while re-evaluating the head only where it is uncertain.

The render domain is the normalized box frame; point_fn maps (n, 2) arrays of
(u, v) in [0,1]^2 to probabilities in [0,1].
"""

from dataclasses import dataclass

import numpy as np

from .losses import GridPrediction, bilinear_sample, grid_cell_centers


@dataclass(frozen=True)
class RenderConfig:
    start_res: int = 28
    target_res: int = 224
    n_select: int = 784  # 28^2 head evaluations per subdivision step
    score_space: str = "probability"  # or "logit" (same ranking, exposed for ablation)

    def __post_init__(self):
        if self.start_res < 1 or self.n_select < 1:
            raise ValueError("start_res and n_select must be >= 1")
        ratio = self.target_res / self.start_res
        if not (ratio >= 1 and ratio.is_integer() and int(ratio) & (int(ratio) - 1) == 0):
            raise ValueError("target_res / start_res must be a power of 2")

    @property
    def steps(self):
        return int(round(np.log2(self.target_res / self.start_res)))


def upsample_x2(grid):
    """Double a grid's resolution by bilinear interpolation at new centers."""
    new_w, new_h = 2 * grid.width, 2 * grid.height
    coords = grid_cell_centers(new_w, new_h)
    vals = bilinear_sample(grid, coords)
    return GridPrediction(vals.reshape(new_h, new_w), domain=grid.domain)


def uncertainty(prob, score_space="probability"):
    """Uncertainty score; higher = less confident. Maximal at p = 0.5."""
    p = np.asarray(prob, dtype=np.float64)
    if score_space == "probability":
        return -np.abs(p - 0.5)
    if score_space == "logit":
        with np.errstate(divide="ignore"):
            return -np.abs(np.log(p) - np.log1p(-p))
    raise ValueError(f"unknown score space {score_space!r}")


def rank_by_uncertainty(probs, score_space="probability"):
    """Indices sorted most-uncertain first; ties broken by ascending index."""
    scores = uncertainty(probs, score_space)
    return np.lexsort((np.arange(scores.size), -scores))


def render(point_fn, cfg=RenderConfig()):
    """Render a (target_res, target_res) probability grid from a point function.

    Starts from point_fn on the start_res^2 cell centers, then repeats
    upsample-by-2 / re-evaluate the n_select most uncertain cells until the
    target resolution is reached. Returns (GridPrediction, eval_count);
    re-evaluated cells carry point_fn values bit-exactly.
    """
    res = cfg.start_res
    probs = np.asarray(point_fn(grid_cell_centers(res, res)), dtype=np.float64)
    evals = res * res
    grid = GridPrediction(probs.reshape(res, res))
    for _ in range(cfg.steps):
        grid = upsample_x2(grid)
        res *= 2
        flat = grid.values.ravel()
        k = min(cfg.n_select, flat.size)
        chosen = rank_by_uncertainty(flat, cfg.score_space)[:k]
        centers = grid_cell_centers(res, res)[chosen]
        flat[chosen] = point_fn(centers)
        evals += k
    return grid, evals


def render_dense(point_fn, res):
    """Dense oracle: point_fn at every cell center of a res x res grid."""
    probs = np.asarray(point_fn(grid_cell_centers(res, res)), dtype=np.float64)
    return GridPrediction(probs.reshape(res, res)), res * res
