"""Backend selection for the hot kernels.

The numba kernels are used when numba imports cleanly and the environment
variable ``ROBUSTMCD_BACKEND`` is not ``numpy``. The numpy fallback is a
separate vectorized implementation with the same tie-breaking rules.
"""

import os

BACKEND_ENV = "ROBUSTMCD_BACKEND"

_choice = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _choice not in ("numba", "numpy"):
    raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {_choice!r}")

HAS_NUMBA = False
if _choice == "numba":
    try:
        import numba  # noqa: F401

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAS_NUMBA = False


def backend():
    """Name of the active kernel backend."""
    return "numba" if HAS_NUMBA else "numpy"
