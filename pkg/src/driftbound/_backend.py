"""Backend selection for the hot simulation kernels.

Two implementations exist for every hot loop: a numba ``@njit`` per-path
version and a vectorized pure-numpy version.  Both consume identical
pre-drawn random blocks and perform arithmetic in the same order, so their
outputs are bitwise equal; which one runs is a runtime switch.

The environment variable ``DRIFTBOUND_BACKEND`` picks the backend at import
time: ``numba`` (require the JIT), ``numpy`` (pure numpy), or ``auto``
(default: numba when importable).  ``set_backend``/``use_backend`` change it
at runtime, e.g. for benchmarks.
"""

from __future__ import annotations

import contextlib
import os

ENV_VAR = "DRIFTBOUND_BACKEND"
_VALID = ("auto", "numba", "numpy")

try:
    import numba  # noqa: F401

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    NUMBA_AVAILABLE = False

_active: str = ""


def _resolve(choice: str) -> str:
    if choice not in _VALID:
        raise ValueError(
            f"{ENV_VAR} must be one of {_VALID}, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not NUMBA_AVAILABLE:
            raise ImportError(
                f"{ENV_VAR}=numba requested but numba is not importable"
            )
        return "numba"
    return "numba" if NUMBA_AVAILABLE else "numpy"


def active_backend() -> str:
    """Name of the backend currently in use (``numba`` or ``numpy``)."""
    return _active


def set_backend(choice: str) -> str:
    """Select the kernel backend; returns the resolved name."""
    global _active
    _active = _resolve(choice)
    return _active


@contextlib.contextmanager
def use_backend(choice: str):
    """Temporarily switch the kernel backend."""
    previous = _active
    set_backend(choice)
    try:
        yield _active
    finally:
        set_backend(previous if previous else "auto")


def set_num_threads(workers: int) -> int:
    """Bound the numba thread pool; no-op on the numpy backend.

    Returns the thread count actually applied.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if not NUMBA_AVAILABLE:
        return 1
    import numba

    applied = min(workers, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(applied)
    return applied


set_backend(os.environ.get(ENV_VAR, "auto"))
