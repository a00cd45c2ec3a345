"""Kernel backend selection.

The compiled extension is preferred; set ``NSPRIVACY_PURE_PYTHON=1`` to force
the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("NSPRIVACY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"

union_measure = kernels.union_measure
max_box_distance = kernels.max_box_distance
touching_components = kernels.touching_components

__all__ = ["BACKEND", "kernels", "union_measure", "max_box_distance", "touching_components"]
