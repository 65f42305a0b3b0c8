"""Pick the compiled core when available, else the NumPy fallback.

Set ``ARTIFACT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _core_py

BACKEND = "python"
_impl = _core_py
if os.environ.get("ARTIFACT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _core_py

exp_sweep = _impl.exp_sweep
kernel_block = _impl.kernel_block
gamma_gain = _impl.gamma_gain
phi_weights = _core_py.phi_weights
