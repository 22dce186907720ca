import json

import numpy as np
import pytest

from pointsup.masks import Bitmask, Dataset, ImageInfo, InstanceRecord, bbox_from_mask


def make_instance(instance_id, image_id, array, category="thing"):
    mask = Bitmask(array)
    return InstanceRecord(instance_id, image_id, category, bbox_from_mask(mask), mask, True)


@pytest.fixture
def toy_dataset():
    """Two 32x32 images, three instances: a square, a disk, and a bar."""
    a = np.zeros((32, 32), dtype=bool)
    a[4:20, 6:26] = True
    yy, xx = np.mgrid[0:32, 0:32]
    b = (xx - 16) ** 2 + (yy - 20) ** 2 <= 81
    c = np.zeros((32, 32), dtype=bool)
    c[10:14, 2:30] = True
    return Dataset(
        images=[
            ImageInfo(1, "img_1.png", 32, 32),
            ImageInfo(2, "img_2.png", 32, 32),
        ],
        instances=[
            make_instance(101, 1, a, "square"),
            make_instance(102, 1, b, "disk"),
            make_instance(103, 2, c, "bar"),
        ],
        dataset_id="toy-3",
    )


def write_dataset_json(path, rles):
    """Write a dataset file with the given {id: (image_id, counts, size)} RLEs."""
    doc = {
        "images": [
            {"id": 1, "file_name": "img_1.png", "width": 32, "height": 32},
            {"id": 2, "file_name": "img_2.png", "width": 32, "height": 32},
        ],
        "instances": [
            {
                "id": iid,
                "image_id": img,
                "category": "thing",
                "bbox": None,
                "segmentation": {"rle": {"counts": counts, "size": size}},
            }
            for iid, (img, counts, size) in rles.items()
        ],
    }
    for inst in doc["instances"]:
        del inst["bbox"]
    path.write_text(json.dumps(doc))
    return path
