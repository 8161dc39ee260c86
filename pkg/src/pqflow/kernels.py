"""Backend selection for the face-energy kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``PQFLOW_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is used. ``BACKEND`` names the choice.
"""

import os

from . import _kernels_py

_force_py = os.environ.get("PQFLOW_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

energy_grad_1d = _impl.energy_grad_1d
energy_grad_2d = _impl.energy_grad_2d
face_gradients_1d = _kernels_py.face_gradients_1d
face_gradients_2d = _kernels_py.face_gradients_2d

__all__ = ["BACKEND", "energy_grad_1d", "energy_grad_2d",
           "face_gradients_1d", "face_gradients_2d"]
