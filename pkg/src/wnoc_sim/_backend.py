"""Kernel selection: compiled extension when available, Python otherwise.

Set ``WNOC_SIM_BACKEND=python`` to force the pure-Python kernel.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernel

try:
    from . import _kernel as _ckernel
except ImportError:  # extension not built
    _ckernel = None


def available() -> list[str]:
    return ["python"] + (["cython"] if _ckernel is not None else [])


def get(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` (``"cython"``, ``"python"`` or None for the default)."""
    if name is None:
        name = os.environ.get("WNOC_SIM_BACKEND", "").strip().lower() or None
    if name is None:
        return _ckernel if _ckernel is not None else _pykernel
    if name == "python":
        return _pykernel
    if name == "cython":
        if _ckernel is None:
            raise ImportError("compiled kernel wnoc_sim._kernel is not built")
        return _ckernel
    raise ValueError(f"unknown backend {name!r}; expected 'cython' or 'python'")


def default_name() -> str:
    return get().BACKEND
