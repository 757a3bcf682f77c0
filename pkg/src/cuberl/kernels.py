"""Hot-loop backend, chosen once at import.

The compiled extension is preferred; set ``CUBERL_PURE_PYTHON=1`` to force
the numpy fallback (the benchmark and the parity tests do this explicitly by
importing both modules).
"""
import os

from . import _kernels_py

try:
    if os.environ.get("CUBERL_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

rank_states = _impl.rank_states
unrank_states = _impl.unrank_states
bfs_depths = _impl.bfs_depths
