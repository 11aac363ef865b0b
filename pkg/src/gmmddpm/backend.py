"""Kernel backend selection.

The compiled extension is used when it imports; ``GMMDDPM_BACKEND=python``
forces the numpy fallback.  Both expose ``normals``, ``score_batch`` and
``reverse_step`` with identical signatures.
"""

from __future__ import annotations

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)


def _load_compiled():
    try:
        from . import _kernels
    except ImportError as exc:
        log.debug("compiled kernels unavailable: %s", exc)
        return None
    return _kernels


compiled = _load_compiled()
python = _pykernels

if os.environ.get("GMMDDPM_BACKEND", "").lower() == "python" or compiled is None:
    kernels = _pykernels
else:
    kernels = compiled


def get(name: str | None = None):
    """Return the kernel module called ``name`` (default: the selected one)."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
