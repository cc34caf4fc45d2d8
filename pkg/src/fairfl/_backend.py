"""Kernel backend selection.

The compiled module is used when it imports; set ``FAIRFL_BACKEND=python`` to
force the numpy fallback (the benchmark and the equivalence tests do this per
call through :func:`get_kernels`).
"""
import os
from types import ModuleType

from fairfl import _kernels_py


def _load_compiled():
    try:
        from fairfl import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_kernels(name: str | None = None) -> ModuleType:
    if name is None:
        name = BACKEND
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; reinstall with a C compiler and Cython")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


_requested = os.environ.get("FAIRFL_BACKEND", "").strip().lower()
if _requested == "python" or _compiled is None:
    BACKEND = "python"
elif _requested in ("", "cython"):
    BACKEND = "cython"
else:
    raise ImportError(f"FAIRFL_BACKEND must be 'cython' or 'python', got {_requested!r}")

kernels = get_kernels(BACKEND)
