"""Simulate point annotations from full masks: uniform in-box sampling, label
lookup against ground truth, boundary-biased sampling variants, label-noise
injection, and agreement measurement.

All sampling is a pure function of (inputs, seed). Per-instance RNG streams
are keyed by instance id, so adding or removing instances never reshuffles
the points of the others.
"""

import json
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .masks import bbox_from_mask, boundary_distance

BIAS_BETA = {"mild": 0.5, "heavy": 1.0}
BOUNDARY_BAND = 2.0  # pixels; candidate band for boundary-biased sampling


class EmptyMaskWarning(UserWarning):
    pass


class DegenerateSamplingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LabeledPoint:
    x: float
    y: float
    label: int  # 1 = object, 0 = background
    source: str = "simulated"


@dataclass
class PointAnnotation:
    instance_id: int | str
    points: list


@dataclass
class PointCollection:
    """All point annotations for one dataset plus simulation metadata."""

    n_points: int
    seed: int
    annotations: list
    dataset_id: str = ""
    noise_mode: str = "none"
    noise_rate: float = 0.0
    flipped: list = field(default_factory=list)  # [(instance_id, point_idx), ...]
    skipped: list = field(default_factory=list)  # instance ids without foreground

    def total_points(self):
        return sum(len(a.points) for a in self.annotations)


def _instance_key(instance_id):
    if isinstance(instance_id, (int, np.integer)):
        return int(instance_id)
    return zlib.crc32(str(instance_id).encode())


def instance_rng(master_seed, instance_id, stream=0):
    """Independent generator for one instance (and sub-stream) of a run."""
    return np.random.default_rng(
        np.random.SeedSequence([int(master_seed), _instance_key(instance_id), int(stream)])
    )


def _as_rng(rng_or_seed):
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return np.random.default_rng(int(rng_or_seed))


def sample_uniform_points(bbox, n, rng_seed):
    """n i.i.d. points uniform over the half-open box [x, x+w) x [y, y+h)."""
    if n < 0:
        raise ValueError("point count must be >= 0")
    rng = _as_rng(rng_seed)
    u = rng.random((n, 2))
    return np.column_stack([bbox.x + u[:, 0] * bbox.w, bbox.y + u[:, 1] * bbox.h])


def label_points(points, instance, source="simulated"):
    """Label continuous points by the mask bit of the pixel containing them."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    a = instance.mask.array
    cols = np.floor(pts[:, 0]).astype(np.intp)
    rows = np.floor(pts[:, 1]).astype(np.intp)
    if (cols < 0).any() or (rows < 0).any() or (cols >= a.shape[1]).any() or (rows >= a.shape[0]).any():
        raise ValueError("point outside the image")
    labels = a[rows, cols].astype(int)
    return [
        LabeledPoint(float(x), float(y), int(l), source)
        for (x, y), l in zip(pts, labels)
    ]


def sample_boundary_biased(instance, n, bias, rng_seed, beta=None, band=BOUNDARY_BAND):
    """Mixture sampling: probability beta near the mask boundary, else uniform.

    The boundary branch picks uniformly among pixels inside the box whose
    boundary distance is <= band, then jitters within the pixel (clipped to
    the box). beta defaults per the named scheme: mild 0.5, heavy 1.0.
    """
    if beta is None:
        beta = BIAS_BETA[bias]
    rng = _as_rng(rng_seed)
    bbox = instance.bbox
    dist = boundary_distance(instance.mask)
    rows, cols = np.nonzero(dist <= band)
    in_box = bbox.contains(cols + 0.5, rows + 0.5)
    rows, cols = rows[in_box], cols[in_box]
    if len(rows) == 0:
        warnings.warn(
            "no pixel within the boundary band; falling back to uniform sampling",
            DegenerateSamplingWarning,
            stacklevel=2,
        )
        return sample_uniform_points(bbox, n, rng)
    take_boundary = rng.random(n) < beta
    out = sample_uniform_points(bbox, n, rng)
    k = int(take_boundary.sum())
    if k:
        j = rng.integers(len(rows), size=k)
        # jitter within the chosen pixel, clipped to the box
        x0 = np.maximum(cols[j].astype(np.float64), bbox.x)
        x1 = np.minimum(cols[j] + 1.0, bbox.x + bbox.w)
        y0 = np.maximum(rows[j].astype(np.float64), bbox.y)
        y1 = np.minimum(rows[j] + 1.0, bbox.y + bbox.h)
        jit = rng.random((k, 2))
        out[take_boundary, 0] = x0 + jit[:, 0] * (x1 - x0)
        out[take_boundary, 1] = y0 + jit[:, 1] * (y1 - y0)
    return out


def simulate_dataset(dataset, n_points, rng_seed, noise_mode="none", noise_rate=0.0):
    """One PointAnnotation per instance; boxes re-derived from masks.

    Reproducible byte-for-byte given (dataset, n_points, seed, noise config).
    Instances with empty masks are skipped and recorded in ``skipped``.
    """
    annotations = []
    skipped = []
    for inst in dataset.instances:
        if inst.mask.count() == 0:
            warnings.warn(
                f"instance {inst.instance_id} has an empty mask; skipped",
                EmptyMaskWarning,
                stacklevel=2,
            )
            skipped.append(inst.instance_id)
            continue
        bbox = bbox_from_mask(inst.mask)
        pts = sample_uniform_points(bbox, n_points, instance_rng(rng_seed, inst.instance_id))
        annotations.append(PointAnnotation(inst.instance_id, label_points(pts, inst)))
    coll = PointCollection(
        n_points=n_points,
        seed=int(rng_seed),
        annotations=annotations,
        dataset_id=dataset.dataset_id,
        skipped=skipped,
    )
    if noise_mode != "none" and noise_rate > 0:
        coll = inject_label_noise(coll, noise_rate, noise_mode, rng_seed, dataset)
    return coll


def _flip(point):
    return LabeledPoint(point.x, point.y, 1 - point.label, point.source)


def inject_label_noise(collection, rate, mode, rng_seed, dataset=None):
    """Flip exactly floor(rate * total) labels dataset-wide.

    random mode: a uniform subset of all points. boundary mode: the points
    with the smallest boundary distance to their instance's mask edge, ties
    broken by (instance id, point index) ascending; needs the dataset for
    the masks.
    """
    if not 0 <= rate <= 1:
        raise ValueError("noise rate must be in [0, 1]")
    index = [
        (ai, pi)
        for ai, ann in enumerate(collection.annotations)
        for pi in range(len(ann.points))
    ]
    k = int(np.floor(rate * len(index)))
    if mode == "random":
        rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 0x5EED]))
        chosen = [index[i] for i in sorted(rng.choice(len(index), size=k, replace=False))] if k else []
    elif mode == "boundary":
        if dataset is None:
            raise ValueError("boundary noise needs the dataset for its masks")
        keyed = []
        for ai, ann in enumerate(collection.annotations):
            inst = dataset.instance(ann.instance_id)
            dist = boundary_distance(inst.mask)
            for pi, p in enumerate(ann.points):
                d = dist[int(np.floor(p.y)), int(np.floor(p.x))]
                keyed.append((float(d), ann.instance_id, pi, ai))
        keyed.sort(key=lambda t: (t[0], t[1], t[2]))
        chosen = [(ai, pi) for _, _, pi, ai in keyed[:k]]
    else:
        raise ValueError(f"unknown noise mode {mode!r}")
    chosen_set = set(chosen)
    annotations = [
        PointAnnotation(
            ann.instance_id,
            [_flip(p) if (ai, pi) in chosen_set else p for pi, p in enumerate(ann.points)],
        )
        for ai, ann in enumerate(collection.annotations)
    ]
    flipped = sorted(
        (collection.annotations[ai].instance_id, pi) for ai, pi in chosen_set
    )
    return PointCollection(
        n_points=collection.n_points,
        seed=collection.seed,
        annotations=annotations,
        dataset_id=collection.dataset_id,
        noise_mode=mode,
        noise_rate=rate,
        flipped=[list(t) for t in flipped],
        skipped=list(collection.skipped),
    )


def agreement(annotation, instance):
    """Fraction of labels matching a fresh ground-truth lookup at the same
    coordinates; 1.0 for an empty annotation."""
    pts = [(p.x, p.y) for p in annotation.points]
    if not pts:
        return 1.0
    fresh = label_points(pts, instance)
    hits = sum(a.label == b.label for a, b in zip(annotation.points, fresh))
    return hits / len(pts)


def collection_agreement(collection, dataset):
    """Dataset-wide agreement: matching labels / total labeled points."""
    total = 0
    hits = 0
    for ann in collection.annotations:
        inst = dataset.instance(ann.instance_id)
        fresh = label_points([(p.x, p.y) for p in ann.points], inst) if ann.points else []
        hits += sum(a.label == b.label for a, b in zip(ann.points, fresh))
        total += len(ann.points)
    return hits / total if total else 1.0


def collection_to_dict(collection):
    meta = {
        "n_points": collection.n_points,
        "seed": collection.seed,
        "noise_mode": collection.noise_mode,
        "noise_rate": collection.noise_rate,
        "dataset_id": collection.dataset_id,
    }
    if collection.flipped:
        meta["flipped"] = collection.flipped
    if collection.skipped:
        meta["skipped"] = collection.skipped
    return {
        "meta": meta,
        "annotations": [
            {
                "instance_id": ann.instance_id,
                "points": [{"x": p.x, "y": p.y, "label": p.label} for p in ann.points],
            }
            for ann in collection.annotations
        ],
    }


def collection_from_dict(doc):
    meta = doc["meta"]
    return PointCollection(
        n_points=int(meta["n_points"]),
        seed=int(meta["seed"]),
        annotations=[
            PointAnnotation(
                a["instance_id"],
                [LabeledPoint(float(p["x"]), float(p["y"]), int(p["label"])) for p in a["points"]],
            )
            for a in doc["annotations"]
        ],
        dataset_id=meta.get("dataset_id", ""),
        noise_mode=meta.get("noise_mode", "none"),
        noise_rate=float(meta.get("noise_rate", 0.0)),
        flipped=[list(t) for t in meta.get("flipped", [])],
        skipped=list(meta.get("skipped", [])),
    )


def dump_points(collection):
    """Canonical bytes for a point-annotation file (stable across runs)."""
    return json.dumps(collection_to_dict(collection), sort_keys=True, separators=(",", ":")).encode() + b"\n"


def save_points(collection, path):
    with open(path, "wb") as f:
        f.write(dump_points(collection))


def load_points(path):
    with open(path, "rb") as f:
        return collection_from_dict(json.loads(f.read()))
