"""Kernel backend selection: compiled extension if present, numpy otherwise.

Set ``XSPLAT_FORCE_PYTHON=1`` to ignore the extension (useful for the
benchmark and for debugging kernel discrepancies).  Both backends implement
``forward_tiles`` / ``backward_tiles`` with identical signatures and
semantics.
"""

from __future__ import annotations

import os

from . import kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built; the numpy path is fully featured
    _compiled = None

_BACKENDS = {"python": kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

if os.environ.get("XSPLAT_FORCE_PYTHON") == "1" or _compiled is None:
    _active = "python"
else:
    _active = "compiled"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = name


def get_kernels():
    return _BACKENDS[_active]
