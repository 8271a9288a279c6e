"""Kernel backends for the particle stepper and the PDE time loop.

Two interchangeable lanes expose the same block functions:

* ``numba``: loops compiled with numba.njit (default when importable),
* ``numpy``: vectorized per-step numpy with a LAPACK banded solve.

Selection: set ``RANKLAB_BACKEND`` to ``numba`` or ``numpy``; unset
picks numba when available. Reruns are byte-identical within a lane;
across lanes results agree only to rounding (different summation
order), so pin the variable when comparing artifacts.
"""
from __future__ import annotations

import os

from ..errors import ConfigError
from . import numpy_backend

try:
    from . import numba_backend

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba_backend = None
    _HAVE_NUMBA = False

ENV_VAR = "RANKLAB_BACKEND"


def backend_name() -> str:
    """Resolve the active lane name from the environment."""
    forced = os.environ.get(ENV_VAR, "").strip().lower()
    if forced == "numpy":
        return "numpy"
    if forced == "numba":
        if not _HAVE_NUMBA:
            raise ConfigError("RANKLAB_BACKEND=numba but numba is not importable")
        return "numba"
    if forced:
        raise ConfigError(f"unknown backend {forced!r}; expected 'numba' or 'numpy'")
    return "numba" if _HAVE_NUMBA else "numpy"


def get_backend():
    """Return the module implementing the active lane."""
    return numba_backend if backend_name() == "numba" else numpy_backend
