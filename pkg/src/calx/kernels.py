"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is. Both expose ``pava``, ``best_split`` and ``forest_apply``.
"""

from types import ModuleType

from . import _pykernels as python

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

BACKEND = "compiled" if compiled is not None else "python"


def available() -> list[str]:
    return ["compiled", "python"] if compiled is not None else ["python"]


def get(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` (default: the selected backend)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return python
    if name == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return compiled
    raise ValueError(f"unknown kernel backend {name!r}")
