"""Kernel backend selection: compiled extension if built, NumPy otherwise.

Set ``BLOCKGLM_PURE=1`` in the environment to force the fallback (used by the
kernel benchmark and for cross-checking the two backends).
"""

from __future__ import annotations

import os

from . import _cdcore_py

if os.environ.get("BLOCKGLM_PURE") == "1":
    _ext = None
else:
    try:
        from . import _cdcore as _ext
    except ImportError:
        _ext = None

HAVE_EXTENSION = _ext is not None
KERNEL_BACKEND = "cython" if HAVE_EXTENSION else "python"


def cd_cycle(indptr, rows, vals, g, w, beta, delta, d,
             mu, nu, lam1, lam2, start, count, stop_flag,
             coordinate_delay=0.0):
    if coordinate_delay > 0.0 or _ext is None:
        return _cdcore_py.cd_cycle(
            indptr, rows, vals, g, w, beta, delta, d,
            mu, nu, lam1, lam2, start, count, stop_flag,
            coordinate_delay,
        )
    return _ext.cd_cycle(
        indptr, rows, vals, g, w, beta, delta, d,
        mu, nu, lam1, lam2, start, count, stop_flag,
    )
