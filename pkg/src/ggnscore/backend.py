"""Kernel backend selection.

The compiled extension is preferred; ``GGNSCORE_BACKEND=python`` forces the
numpy fallback, ``GGNSCORE_BACKEND=cython`` makes a missing extension a hard
error instead of a silent fallback.
"""

import os

_requested = os.environ.get("GGNSCORE_BACKEND", "").lower()

if _requested == "python":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _kernels_py as _impl  # type: ignore[no-redef]

        BACKEND = "python"

silu = _impl.silu
silu_prime = _impl.silu_prime
relu = _impl.relu
relu_prime = _impl.relu_prime
pseudo_huber_value = _impl.pseudo_huber_value
pseudo_huber_grad = _impl.pseudo_huber_grad
pseudo_huber_hess_diag = _impl.pseudo_huber_hess_diag
pseudo_huber_all = _impl.pseudo_huber_all
rowwise_outer = _impl.rowwise_outer
