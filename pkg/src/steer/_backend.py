"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``STEER_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy fallback is used.
"""

import os

from . import _kernels_py

_force_py = os.environ.get("STEER_PURE_PYTHON", "") not in ("", "0")

compiled = None
if not _force_py:
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else _kernels_py
BACKEND = "compiled" if compiled is not None else "python"


def available():
    """Every importable backend, by name."""
    out = {"python": _kernels_py}
    if compiled is not None:
        out["compiled"] = compiled
    return out
