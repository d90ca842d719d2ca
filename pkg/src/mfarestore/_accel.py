"""Backend selection for the hot numeric kernels.

Set ``MFARESTORE_NUMBA=0`` in the environment to force the pure-numpy
path.  The flag is read once at import time; tests and benchmarks call
the per-backend functions in :mod:`mfarestore._kernels` directly.
"""

import os

_FALSE = {"0", "false", "no", "off"}

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("MFARESTORE_NUMBA", "1").strip().lower() not in _FALSE


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
