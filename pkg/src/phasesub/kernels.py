"""Kernel backend selection.

The compiled extension is preferred; the numpy implementation is used when
the extension is missing or when ``PHASESUB_BACKEND=python`` is set.
"""

import importlib
import os

BACKENDS = ("cython", "python")


def _load(name):
    if name == "cython":
        return importlib.import_module("phasesub._kernels")
    if name == "python":
        return importlib.import_module("phasesub._pykernels")
    raise ValueError(f"unknown kernel backend {name!r}; choose from {BACKENDS}")


def _default():
    requested = os.environ.get("PHASESUB_BACKEND", "").strip().lower()
    if requested:
        return requested, _load(requested)
    try:
        return "cython", _load("cython")
    except ImportError:
        return "python", _load("python")


BACKEND, _impl = _default()


def available():
    """Names of the backends importable in this environment."""
    names = []
    for name in BACKENDS:
        try:
            _load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def get(name=None):
    """Kernel module for ``name``, or the import-time default."""
    return _impl if name is None else _load(name)
