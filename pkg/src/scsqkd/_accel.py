"""Backend switch for the numeric kernels.

Hot loops are written twice: once as a numba ``@njit`` kernel and once as a
plain numpy path. ``SCSQKD_DISABLE_NUMBA=1`` in the environment (or a missing
numba install) selects the numpy path; :func:`use_backend` overrides it for a
block of code, which is what the benchmark does.
"""

from __future__ import annotations

import logging
import os
from contextlib import contextmanager

logger = logging.getLogger(__name__)

_TRUTHY = {"1", "true", "yes", "on"}

try:
    import numba

    njit = numba.njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """Null decorator used when numba is unavailable."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def _default_backend() -> str:
    if os.environ.get("SCSQKD_DISABLE_NUMBA", "").strip().lower() in _TRUTHY:
        return "numpy"
    if not HAVE_NUMBA:
        logger.warning("numba not importable, falling back to numpy kernels")
        return "numpy"
    return "numba"


_backend = _default_backend()


def backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    _backend = name


@contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
