"""Kernel backend selection.

The compiled ``_core`` extension is preferred; the numpy fallback in
``_pycore`` is used when it is missing or when ``HESSSKETCH_BACKEND=python``.
"""
import os

from hesssketch import _pycore

BACKEND_ENV = "HESSSKETCH_BACKEND"
THREADS_ENV = "HESSSKETCH_THREADS"


def _load(name=None):
    name = name or os.environ.get(BACKEND_ENV, "auto")
    if name not in ("auto", "compiled", "python"):
        raise ValueError(f"{BACKEND_ENV} must be auto, compiled or python, got {name!r}")
    if name == "python":
        return _pycore, "python"
    try:
        from hesssketch import _core
    except ImportError:
        if name == "compiled":
            raise
        return _pycore, "python"
    return _core, "compiled"


kernels, name = _load()


def get(name):
    """Return the kernel module for ``"compiled"`` or ``"python"`` explicitly."""
    return _load(name)[0]


def thread_count():
    """Worker threads for trial fan-out; ``HESSSKETCH_THREADS`` caps it."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return min(8, os.cpu_count() or 1)
