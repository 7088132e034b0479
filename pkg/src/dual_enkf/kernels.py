"""Kernel backend selection.

The compiled extension is preferred when it built; the numpy fallback is
always available.  Selection happens at import time and can be pinned with
the DUAL_ENKF_KERNELS environment variable ("cython", "python", "auto").
``use_backend`` exists so tests and the kernel benchmark can exercise both.
"""

import os

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _kernels_cy

    _BACKENDS["cython"] = _kernels_cy
except ImportError:
    _kernels_cy = None

mean_and_cov = None
cross_cov = None
linear_backward_step = None
_active = None


def available_backends():
    return sorted(_BACKENDS)


def backend_name() -> str:
    return _active


def use_backend(name: str) -> str:
    """Bind the named backend's kernels; returns the active backend name."""
    global mean_and_cov, cross_cov, linear_backward_step, _active
    if name == "auto":
        name = "cython" if "cython" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    impl = _BACKENDS[name]
    mean_and_cov = impl.mean_and_cov
    cross_cov = impl.cross_cov
    linear_backward_step = impl.linear_backward_step
    _active = name
    return _active


use_backend(os.environ.get("DUAL_ENKF_KERNELS", "auto").lower())
