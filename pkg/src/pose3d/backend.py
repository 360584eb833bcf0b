"""Convolution backend selection.

The hot kernels (3D convolution forward/backward) exist twice: a compiled
Cython extension (`pose3d._kernels`) and a vectorized numpy fallback
(`pose3d._kernels_np`). The active backend is chosen once at import:

* default: the compiled extension if it imported, else numpy;
* ``POSE3D_BACKEND=native`` forces the extension (ImportError if missing);
* ``POSE3D_BACKEND=numpy`` forces the fallback.

Both backends implement the same contract and are cross-checked by the
test suite and compared by ``benchmarks/bench_conv3d.py``.
"""

from __future__ import annotations

import os

from . import _kernels_np as numpy_impl

try:
    from . import _kernels as native_impl  # type: ignore[attr-defined]
except ImportError:  # extension not built
    native_impl = None

_choice = os.environ.get("POSE3D_BACKEND", "").strip().lower()
if _choice == "native":
    if native_impl is None:
        raise ImportError(
            "POSE3D_BACKEND=native but the pose3d._kernels extension is not built; "
            "reinstall the package or unset POSE3D_BACKEND"
        )
    _active = native_impl
elif _choice == "numpy":
    _active = numpy_impl
elif _choice == "":
    _active = native_impl if native_impl is not None else numpy_impl
else:
    raise ValueError(f"POSE3D_BACKEND must be 'native' or 'numpy', got {_choice!r}")

ACTIVE_BACKEND = "native" if _active is native_impl and native_impl is not None else "numpy"

conv3d_forward = _active.conv3d_forward
conv3d_backward = _active.conv3d_backward


def has_native_extension() -> bool:
    return native_impl is not None


def available_backends() -> dict:
    """Name -> module for every importable backend (used by benchmarks/tests)."""
    out = {"numpy": numpy_impl}
    if native_impl is not None:
        out["native"] = native_impl
    return out
