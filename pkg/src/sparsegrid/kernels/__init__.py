"""Hot bitmask kernels with a compiled core and a pure-Python fallback.

The compiled extension is preferred when importable; set
``SPARSEGRID_KERNELS=python`` to force the fallback (used by the parity
tests and the benchmark). ``IMPL`` names the active implementation.
"""

import os

from . import _pyref

if os.environ.get("SPARSEGRID_KERNELS", "").lower() == "python":
    _impl = _pyref
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _pyref

IMPL = _impl.IMPL_NAME

chunk_dot = _impl.chunk_dot
mask_subcounts = _impl.mask_subcounts
match_count = _impl.match_count

__all__ = ["IMPL", "chunk_dot", "mask_subcounts", "match_count"]
