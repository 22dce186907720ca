"""Hot numeric kernels with a compiled core and a pure-NumPy fallback.

The compiled extension (``_core``, Cython) is preferred; if it is missing or
``POINTSUP_PURE_PYTHON=1`` is set, the pure backend is used. Both expose the
same functions with the same semantics; ``BACKEND`` names the active one.

Run ``benchmarks/bench_kernels.py`` for a speed comparison of the two.
"""

import os

from . import _pure

if os.environ.get("POINTSUP_PURE_PYTHON") == "1":
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND

bilinear_gather = _impl.bilinear_gather
bilinear_scatter = _impl.bilinear_scatter
bce_logits = _impl.bce_logits
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
fit_head = _impl.fit_head

__all__ = [
    "BACKEND",
    "bilinear_gather",
    "bilinear_scatter",
    "bce_logits",
    "mlp_forward",
    "mlp_backward",
    "fit_head",
]
