"""Point-based instance annotation at desk scale.

Subpackages/modules:
    masks      mask representations, rasterization, RLE, distances
    simulate   point-annotation simulation, noise, agreement
    losses     bilinear sampling + point cross-entropy kernels
    head       dynamically-parameterized implicit point head
    render     adaptive subdivision mask rendering
    trainer    synthetic-instance training experiments
    budget     annotation-time arithmetic
    service    labeling workbench backend (HTTP)
    _kernels   compiled/pure numeric core (see _kernels.BACKEND)
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
