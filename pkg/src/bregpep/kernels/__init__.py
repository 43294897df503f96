"""Kernel backend selection.

``BREGPEP_KERNELS=numpy`` forces the pure-numpy path; the default is numba when
it imports, numpy otherwise.  The two backends run the same arithmetic, so
results agree to rounding.
"""

import os

from . import _numpy

BACKEND = os.environ.get("BREGPEP_KERNELS", "numba").strip().lower()

if BACKEND == "numba":
    try:
        from . import _numba as _impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"
        _impl = _numpy
elif BACKEND == "numpy":
    _impl = _numpy
else:
    raise ValueError(f"BREGPEP_KERNELS must be 'numba' or 'numpy', got {BACKEND!r}")


def get(backend=None):
    """Module implementing the kernels for ``backend`` (default: the active one)."""
    if backend is None:
        return _impl
    if backend == "numpy":
        return _numpy
    if backend == "numba":
        from . import _numba
        return _numba
    raise ValueError(backend)


project_l1_ball = _impl.project_l1_ball
l1_threshold = _impl.l1_threshold
dr_chunk = _impl.dr_chunk
project_cone = _impl.project_cone
