"""Masks, boxes, datasets, and the geometry utilities built on them.

Conventions used throughout the package:
  * pixel (col, row) has its continuous center at (col + 0.5, row + 0.5);
  * masks are row-major binary arrays of shape (height, width);
  * uncompressed RLE is column-major and starts with a background run.
"""

import hashlib
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class DegenerateGeometryWarning(UserWarning):
    """Raised for inputs that are formally valid but have no usable area."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous image coordinates."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    @property
    def cx(self):
        return self.x + self.w / 2.0

    @property
    def cy(self):
        return self.y + self.h / 2.0

    @property
    def diagonal(self):
        return float(np.hypot(self.w, self.h))

    def contains(self, px, py):
        """Closed containment test; accepts scalars or arrays."""
        return (
            (px >= self.x)
            & (px <= self.x + self.w)
            & (py >= self.y)
            & (py <= self.y + self.h)
        )

    def as_list(self):
        return [self.x, self.y, self.w, self.h]


class Bitmask:
    """Immutable binary mask; bits stored row-major as a (height, width) array."""

    __slots__ = ("_a",)

    def __init__(self, array):
        a = np.ascontiguousarray(np.asarray(array), dtype=bool)
        if a.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {a.shape}")
        a.setflags(write=False)
        self._a = a

    @property
    def array(self):
        return self._a

    @property
    def height(self):
        return self._a.shape[0]

    @property
    def width(self):
        return self._a.shape[1]

    def count(self):
        return int(self._a.sum())

    def __eq__(self, other):
        return isinstance(other, Bitmask) and np.array_equal(self._a, other._a)

    def __hash__(self):
        return hash((self._a.shape, self._a.tobytes()))

    def __repr__(self):
        return f"Bitmask({self.width}x{self.height}, fg={self.count()})"


@dataclass(frozen=True)
class InstanceRecord:
    """One annotated object: image reference, box, category, and bitmask."""

    instance_id: int | str
    image_id: int | str
    category: str
    bbox: BoundingBox
    mask: Bitmask
    bbox_derived: bool = False


@dataclass(frozen=True)
class ImageInfo:
    image_id: int | str
    file_name: str
    width: int
    height: int


@dataclass
class Dataset:
    images: list[ImageInfo]
    instances: list[InstanceRecord]
    dataset_id: str = ""

    def __post_init__(self):
        by_id = {im.image_id: im for im in self.images}
        for inst in self.instances:
            im = by_id.get(inst.image_id)
            if im is None:
                raise ValueError(f"instance {inst.instance_id} references unknown image {inst.image_id}")
            if (inst.mask.height, inst.mask.width) != (im.height, im.width):
                raise ValueError(
                    f"instance {inst.instance_id} mask {inst.mask.width}x{inst.mask.height} "
                    f"does not match image {im.width}x{im.height}"
                )
        self._images_by_id = by_id
        self._instances_by_id = {inst.instance_id: inst for inst in self.instances}

    def image(self, image_id):
        return self._images_by_id[image_id]

    def instance(self, instance_id):
        return self._instances_by_id[instance_id]


def rasterize_polygon(rings, width, height):
    """Rasterize closed rings with the even-odd rule at pixel centers.

    A pixel is foreground iff its center lies inside an odd number of rings.
    Zero-area input produces an all-background mask and a
    DegenerateGeometryWarning.
    """
    if not rings:
        raise ValueError("rasterize_polygon needs at least one ring")
    arrs = []
    for ring in rings:
        r = np.asarray(ring, dtype=np.float64)
        if r.ndim == 1:  # flat [x1, y1, x2, y2, ...]
            r = r.reshape(-1, 2)
        if r.shape[0] < 3:
            raise ValueError("each ring needs at least 3 vertices")
        if not np.all(np.isfinite(r)):
            raise ValueError("ring coordinates must be finite")
        arrs.append(r)

    cols = np.arange(width) + 0.5
    rows = np.arange(height) + 0.5
    px = np.broadcast_to(cols, (height, width))
    py = np.broadcast_to(rows[:, None], (height, width))
    inside = np.zeros((height, width), dtype=bool)
    for r in arrs:
        x1, y1 = r[:, 0], r[:, 1]
        x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
        for e in range(r.shape[0]):
            if y1[e] == y2[e]:
                continue  # horizontal edge never crosses a scanline strictly
            crosses = (y1[e] > py) != (y2[e] > py)
            xint = x1[e] + (py - y1[e]) * (x2[e] - x1[e]) / (y2[e] - y1[e])
            inside ^= crosses & (px < xint)
    if not inside.any():
        warnings.warn("polygon covers no pixel centers", DegenerateGeometryWarning, stacklevel=2)
    return Bitmask(inside)


def rle_encode(mask):
    """Column-major run lengths starting with background (COCO uncompressed)."""
    flat = mask.array.ravel(order="F")
    counts = []
    current = False  # runs start with background
    run = 0
    for bit in flat:
        if bit == current:
            run += 1
        else:
            counts.append(run)
            current = not current
            run = 1
    counts.append(run)
    return counts


def rle_decode(counts, size):
    """Inverse of :func:`rle_encode`; ``size`` is [height, width]."""
    h, w = int(size[0]), int(size[1])
    total = sum(counts)
    if total != h * w:
        raise ValueError(f"run lengths sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos : pos + c] = True
        pos += c
        value = not value
    return Bitmask(flat.reshape((h, w), order="F"))


def bbox_from_mask(mask):
    """Tight integer-aligned box around the foreground pixels."""
    a = mask.array
    ys, xs = np.nonzero(a)
    if len(xs) == 0:
        raise ValueError("cannot derive a box from an empty mask")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return BoundingBox(float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))


def boundary_distance(mask):
    """Per-pixel Euclidean distance to the nearest opposite-label pixel center.

    Exact Euclidean distances (center-to-center). If the mask is all one
    label there is no opposite pixel; distances to the image border are
    returned instead and a DegenerateGeometryWarning is emitted.
    """
    a = mask.array
    h, w = a.shape
    if a.all() or not a.any():
        warnings.warn(
            "mask has a single label; returning distances to the image border",
            DegenerateGeometryWarning,
            stacklevel=2,
        )
        rows = np.broadcast_to(np.arange(h, dtype=np.float64)[:, None], (h, w))
        cols = np.broadcast_to(np.arange(w, dtype=np.float64)[None, :], (h, w))
        return np.minimum(
            np.minimum(rows + 0.5, cols + 0.5), np.minimum(h - rows - 0.5, w - cols - 0.5)
        )
    # distance_transform_edt gives the exact distance to the nearest zero
    d_fg = ndimage.distance_transform_edt(a)
    d_bg = ndimage.distance_transform_edt(~a)
    return np.where(a, d_fg, d_bg).astype(np.float64)


def mask_iou(a, b):
    """Intersection over union; two empty masks have IoU 1.0 by convention."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("mask dimensions differ")
    inter = int(np.logical_and(a.array, b.array).sum())
    union = int(np.logical_or(a.array, b.array).sum())
    if union == 0:
        return 1.0
    return inter / union


def _segmentation_to_mask(seg, width, height):
    if "polygons" in seg:
        rings = [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in seg["polygons"]]
        return rasterize_polygon(rings, width, height)
    if "rle" in seg:
        return rle_decode(seg["rle"]["counts"], seg["rle"]["size"])
    raise ValueError("segmentation must contain 'polygons' or 'rle'")


def dataset_content_id(raw_bytes):
    return hashlib.sha256(raw_bytes).hexdigest()[:12]


def load_dataset(path):
    """Load the dataset JSON file described in the package docs."""
    with open(path, "rb") as f:
        raw = f.read()
    doc = json.loads(raw)
    images = [
        ImageInfo(im["id"], im["file_name"], int(im["width"]), int(im["height"]))
        for im in doc["images"]
    ]
    by_id = {im.image_id: im for im in images}
    instances = []
    for rec in doc["instances"]:
        im = by_id[rec["image_id"]]
        mask = _segmentation_to_mask(rec["segmentation"], im.width, im.height)
        bx = rec.get("bbox")
        if bx is not None:
            bbox = BoundingBox(*map(float, bx))
            derived = False
        else:
            bbox = bbox_from_mask(mask)
            derived = True
        instances.append(
            InstanceRecord(rec["id"], rec["image_id"], rec["category"], bbox, mask, derived)
        )
    return Dataset(images, instances, dataset_id=dataset_content_id(raw))


def save_dataset(dataset, path):
    """Write a dataset back out (masks as uncompressed RLE)."""
    doc = {
        "images": [
            {"id": im.image_id, "file_name": im.file_name, "width": im.width, "height": im.height}
            for im in dataset.images
        ],
        "instances": [
            {
                "id": inst.instance_id,
                "image_id": inst.image_id,
                "category": inst.category,
                "bbox": inst.bbox.as_list(),
                "segmentation": {
                    "rle": {
                        "counts": rle_encode(inst.mask),
                        "size": [inst.mask.height, inst.mask.width],
                    }
                },
            }
            for inst in dataset.instances
        ],
    }
    data = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as f:
        f.write(data)
    return dataset_content_id(data)
