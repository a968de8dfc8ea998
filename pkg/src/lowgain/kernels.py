"""Backend selection for the hot loops.

The compiled extension is used when it imports cleanly; otherwise the
pure-Python reference is used.  Setting ``LOWGAIN_PURE_PYTHON=1`` forces the
fallback (useful for debugging and for the backend comparison benchmark).
"""
from __future__ import annotations

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)

LIN, SAT, TANH = _kernels_py.LIN, _kernels_py.SAT, _kernels_py.TANH

python_backend = _kernels_py
compiled_backend = None
if os.environ.get("LOWGAIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend  # type: ignore[no-redef]
    except ImportError as exc:  # pragma: no cover - depends on build
        log.debug("compiled kernels unavailable (%s); using pure Python", exc)
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

fixed_point = backend.fixed_point
rk4_lfr = backend.rk4_lfr
