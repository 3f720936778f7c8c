"""Selects the SMO solver backend at import time.

The compiled extension is preferred when present; set COVTUNE_PURE_PYTHON=1
to force the NumPy fallback (used by the backend-parity tests and the
benchmark).  Both backends implement identical semantics.
"""

from __future__ import annotations

import os

_force_pure = os.environ.get("COVTUNE_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    from . import _smo_pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _smo as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _smo_pure as _impl

        BACKEND = "pure"

smo_svr = _impl.smo_svr
smo_svc = _impl.smo_svc
