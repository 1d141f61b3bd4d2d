"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations ship: a numba-jitted one and a pure
numpy one. Selection order: the WATTGATE_BACKEND environment variable
("numba" or "numpy") wins; otherwise numba when importable, else numpy.
Tests and benchmarks can switch at runtime via set_backend().
"""

import os

from ..errors import ConfigurationError
from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import numba_backend

    _BACKENDS["numba"] = numba_backend
except ImportError:
    numba_backend = None

_active = None

conv1d_forward = None
conv1d_backward = None
adam_update = None


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return _active


def set_backend(name):
    """Bind the module-level kernel functions to one backend."""
    global _active, conv1d_forward, conv1d_backward, adam_update
    if name not in _BACKENDS:
        raise ConfigurationError(
            f"unknown kernel backend {name!r}; available: {', '.join(available_backends())}"
        )
    mod = _BACKENDS[name]
    conv1d_forward = mod.conv1d_forward
    conv1d_backward = mod.conv1d_backward
    adam_update = mod.adam_update
    _active = name


def _default_backend():
    env = os.environ.get("WATTGATE_BACKEND")
    if env:
        if env not in _BACKENDS:
            raise ConfigurationError(
                f"WATTGATE_BACKEND={env!r} is not available; "
                f"choose from: {', '.join(available_backends())}"
            )
        return env
    return "numba" if "numba" in _BACKENDS else "numpy"


set_backend(_default_backend())
