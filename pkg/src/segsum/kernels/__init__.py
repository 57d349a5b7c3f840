"""Kernel backend selection.

The compiled extension (``segsum.kernels._core``) is preferred when it
imported cleanly; the numpy reference implementation is the fallback.
``SEGSUM_KERNELS=py`` forces the reference backend, ``SEGSUM_KERNELS=c``
demands the compiled one (ImportError if it is missing).  Both backends
compute the same quantities; low-order floating point bits may differ
between them, so seeded byte-for-byte reproducibility holds per backend.
"""

import os

from . import reference

_choice = os.environ.get("SEGSUM_KERNELS", "auto").lower()

if _choice in ("py", "python", "reference"):
    _impl = reference
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise
        _impl = reference
        BACKEND = "python"

softmax_rows_fwd = _impl.softmax_rows_fwd
softmax_rows_bwd = _impl.softmax_rows_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
# conv compression lowers to one BLAS matmul; numpy is the fast path
conv_compress_fwd = reference.conv_compress_fwd
conv_compress_bwd = reference.conv_compress_bwd
cross_entropy_fwd = _impl.cross_entropy_fwd
cross_entropy_bwd = _impl.cross_entropy_bwd
