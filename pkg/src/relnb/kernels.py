"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
twin takes over. Both expose ``optimize_partition``, ``partition_cost``,
``class_loglik``, ``class_loglik_shifted`` and ``add_scaled``.
"""

import math

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

backend = _compiled if _compiled is not None else _kernels_py
BACKEND = backend.BACKEND

EXACT_LIMIT = 64

_LF = np.zeros(1)


def available_backends() -> dict:
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def log_factorial_table(n: int) -> np.ndarray:
    """``lf[k] = ln k!`` for ``k <= n`` (grown on demand, shared by both backends)."""
    global _LF
    if len(_LF) <= n:
        size = max(n + 1, 2 * len(_LF))
        _LF = np.array([math.lgamma(k + 1.0) for k in range(size)])
    return _LF
