"""Kernel backend selection.

The compiled module is used when it imports; otherwise the numpy kernels
take over.  ``load("python")`` forces the fallback, which the benchmark
and the cross-backend tests rely on.
"""

from __future__ import annotations

from types import ModuleType

from decaygraph import _pykernels

try:
    from decaygraph import _ckernels
except ImportError:  # extension not built
    _ckernels = None

DEFAULT: ModuleType = _ckernels if _ckernels is not None else _pykernels
BACKEND: str = DEFAULT.NAME


def available() -> list[str]:
    return ["python"] + (["cython"] if _ckernels is not None else [])


def load(name: str = "auto") -> ModuleType:
    if name == "auto":
        return DEFAULT
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}; choose auto, python or cython")
