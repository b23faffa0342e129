"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``LIFISIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python

try:
    if os.environ.get("LIFISIM_PURE_PYTHON"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels as compiled
except ImportError:
    compiled = None

backend = compiled if compiled is not None else python
BACKEND_NAME = "compiled" if compiled is not None else "python"

pair_gains = backend.pair_gains
segments_blocked = backend.segments_blocked
trig_sums = backend.trig_sums

__all__ = ["pair_gains", "segments_blocked", "trig_sums", "BACKEND_NAME",
           "compiled", "python"]
