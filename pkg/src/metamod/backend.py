"""Kernel backend selection.

The compiled extension (`metamod._speedups`) is preferred when importable;
the numpy implementation is the fallback. `METAMOD_BACKEND=python|compiled`
forces a choice at import time, and `use_backend()` switches at runtime
(tests and the benchmark use it).
"""

from __future__ import annotations

import os

from . import _kernels_numpy
from .errors import ConfigError

try:
    from . import _speedups
except ImportError:  # extension not built; numpy path still fully functional
    _speedups = None

_BACKENDS = {"python": _kernels_numpy}
if _speedups is not None:
    _BACKENDS["compiled"] = _speedups


def _initial_backend():
    forced = os.environ.get("METAMOD_BACKEND", "").strip().lower()
    if forced:
        if forced not in ("python", "compiled"):
            raise ConfigError(f"unknown backend {forced!r} (python|compiled)", field="METAMOD_BACKEND")
        if forced == "compiled" and _speedups is None:
            raise ConfigError("compiled backend requested but metamod._speedups is not built",
                              field="METAMOD_BACKEND")
        return forced
    return "compiled" if _speedups is not None else "python"


_active_name = _initial_backend()
_active = _BACKENDS[_active_name]


def available_backends():
    return tuple(sorted(_BACKENDS))


def active_backend():
    return _active_name


def use_backend(name):
    """Switch the kernel backend; returns the previously active name."""
    global _active_name, _active
    if name not in _BACKENDS:
        raise ConfigError(f"backend {name!r} not available (have {available_backends()})")
    previous = _active_name
    _active_name = name
    _active = _BACKENDS[name]
    return previous


def get_backend(name=None):
    """Return the kernel module for `name` (default: the active backend)."""
    if name is None:
        return _active
    if name not in _BACKENDS:
        raise ConfigError(f"backend {name!r} not available (have {available_backends()})")
    return _BACKENDS[name]


def kernel_forward(sizes, h_act, o_act, params, X):
    return _active.forward(sizes, h_act, o_act, params, X)


def kernel_forward_cached(sizes, h_act, o_act, params, X):
    return _active.forward_cached(sizes, h_act, o_act, params, X)


def kernel_backward(sizes, h_act, o_act, params, X, cache, dY):
    return _active.backward(sizes, h_act, o_act, params, X, cache, dY)
