"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the NumPy
fallback is used. ``SHOPGRID_BACKEND`` overrides the choice:

* ``auto`` (or unset): compiled if available, else numpy
* ``cython``: require the compiled extension, fail otherwise
* ``numpy``: force the pure-Python fallback

Both backends expose ``objective`` and ``gradients`` with identical
signatures; results agree to floating-point reordering.
"""

from __future__ import annotations

import os

from . import numpy_backend


def _load_compiled():
    from . import _core  # noqa: PLC0415

    return _core


def _select():
    choice = os.environ.get("SHOPGRID_BACKEND", "auto").strip().lower() or "auto"
    if choice in ("auto", ""):
        try:
            return _load_compiled()
        except ImportError:
            return numpy_backend
    if choice in ("cython", "compiled", "c"):
        return _load_compiled()
    if choice in ("numpy", "python", "pure"):
        return numpy_backend
    raise ValueError(f"unknown SHOPGRID_BACKEND value {choice!r}")


_impl = _select()

BACKEND = _impl.NAME
objective = _impl.objective
gradients = _impl.gradients


def available_backends() -> dict:
    """Name -> module for every importable backend."""
    out = {"numpy": numpy_backend}
    try:
        out["cython"] = _load_compiled()
    except ImportError:
        pass
    return out
