"""Backend selection for the sampler's inner loop.

The compiled Cython kernel is used when importable; otherwise the numpy
fallback takes over. Set ``SAGLMM_KERNEL`` to ``python`` or ``cython``
to pin a backend explicitly (``cython`` raises if the extension is
missing rather than silently falling back).
"""
from __future__ import annotations

import os

from . import _mala_py

_requested = os.environ.get("SAGLMM_KERNEL", "auto").strip().lower()
if _requested not in ("auto", "cython", "python"):
    raise ImportError(f"SAGLMM_KERNEL must be auto, cython or python, not {_requested!r}")

_cy = None
if _requested in ("auto", "cython"):
    try:
        from . import _mala_cy as _cy
    except ImportError:
        if _requested == "cython":
            raise

if _cy is not None:
    BACKEND = "cython"
    mala_chain = _cy.mala_chain
else:
    BACKEND = "python"
    mala_chain = _mala_py.mala_chain


def available_backends() -> dict:
    """Name -> kernel function for every importable backend."""
    backends = {"python": _mala_py.mala_chain}
    try:
        from . import _mala_cy
        backends["cython"] = _mala_cy.mala_chain
    except ImportError:
        pass
    return backends
