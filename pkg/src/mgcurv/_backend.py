"""Select the compiled kernels when available, else the Python reference.

Set ``MGCURV_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("MGCURV_BACKEND", "").lower() != "python":
    try:
        from . import _kernels_cy

        kernels = _kernels_cy
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        pass

transport_simplex = kernels.transport_simplex
hopf_lax_min = kernels.hopf_lax_min
