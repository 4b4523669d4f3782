"""Kernel backend selection.

Hot per-pixel kernels (sprite rasterization, polygon fill) ship in two
builds: a numba ``@njit`` one and a pure-numpy fallback. Both compute the
same expressions in the same order, so their outputs are bitwise equal.

Selection is controlled by the ``SLOTSEG_NUMBA`` environment variable at
import time: ``0``/``off``/``false`` forces the numpy path; anything else
(or unset) uses numba when it is importable.
"""

from __future__ import annotations

import os


def _env_wants_numba() -> bool:
    val = os.environ.get("SLOTSEG_NUMBA", "1").strip().lower()
    return val not in ("0", "false", "off", "no")


try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and _env_wants_numba()


def numba_enabled() -> bool:
    """True when the numba kernel build is selected for this process."""
    return NUMBA_ENABLED
