"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable. Set
``POINTTRACK_BACKEND=python`` to force the numpy fallback.
"""
import importlib
import os

_FORCE = os.environ.get("POINTTRACK_BACKEND", "").strip().lower()


def _load(name):
    return importlib.import_module(f"pointtrack.{name}")


def available_backends():
    """Mapping of backend name to kernel module for every importable backend."""
    found = {"python": _load("_kernels_py")}
    try:
        found["cython"] = _load("_kernels")
    except ImportError:
        pass
    return found


if _FORCE == "python":
    kernels = _load("_kernels_py")
    BACKEND = "python"
else:
    try:
        kernels = _load("_kernels")
        BACKEND = "cython"
    except ImportError:
        if _FORCE == "cython":
            raise
        kernels = _load("_kernels_py")
        BACKEND = "python"
