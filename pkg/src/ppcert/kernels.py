"""Backend selection for the enumeration kernels.

The compiled extension is used when it is importable; setting
``PPCERT_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _core_py

if os.environ.get("PPCERT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _core_py
        BACKEND = "python"

pdp_violation_mass = _impl.pdp_violation_mass
two_point_tails = _impl.two_point_tails
two_point_limit_tails = _impl.two_point_limit_tails
average_gaussian_deltas = _impl.average_gaussian_deltas
batch_chain_pdp = _impl.batch_chain_pdp

__all__ = [
    "BACKEND",
    "pdp_violation_mass",
    "two_point_tails",
    "two_point_limit_tails",
    "average_gaussian_deltas",
    "batch_chain_pdp",
]
