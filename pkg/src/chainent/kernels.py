"""Hot-loop kernels, compiled when available.

The Cython build is used unless it failed to compile or ``CHAINENT_PURE=1``
is set in the environment. Both backends return identical results.
"""

import os

from . import _kernels_py

if os.environ.get("CHAINENT_PURE") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
uf_components = _impl.uf_components
direct_paths = _impl.direct_paths
best_split = _impl.best_split

__all__ = ["BACKEND", "uf_components", "direct_paths", "best_split"]
