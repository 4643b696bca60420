"""Kernel backend selection.

The hot inner loops (convolution, max pooling) have two implementations:
a numba @njit path and a pure-numpy path.  Selection happens once at import:

    RLPRUNE_BACKEND=numba   force numba (error if numba is missing)
    RLPRUNE_BACKEND=numpy   force the pure-numpy fallback
    unset                   numba if importable, else numpy

Both paths are deterministic run-to-run; they are not guaranteed to agree
bitwise with each other (float32 accumulation order differs).
"""

import os

from .errors import ConfigError

_requested = os.environ.get("RLPRUNE_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise ConfigError(f"RLPRUNE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    NUMBA_AVAILABLE = False
    USE_NUMBA = False
else:
    try:
        import numba  # noqa: F401
        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False
    if _requested == "numba" and not NUMBA_AVAILABLE:
        raise ConfigError("RLPRUNE_BACKEND=numba but numba is not importable")
    USE_NUMBA = NUMBA_AVAILABLE


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
