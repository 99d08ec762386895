"""Numeric kernel backend selection.

The hot inner loops (fused MLP forward/backward, circular convolution,
Adam updates) exist twice: a compiled Cython core (``_core``) and a
pure-numpy reference (``_ref``). The compiled core is preferred when it
imported successfully; set ``LEADS_KERNELS=numpy`` to force the fallback
(used by the backend-parity tests and the benchmark).
"""

import os

from leads.kernels import _ref

_FORCED = os.environ.get("LEADS_KERNELS", "").strip().lower()

if _FORCED == "numpy":
    _impl = _ref
else:
    try:
        from leads.kernels import _core as _impl
    except ImportError:
        if _FORCED == "cython":
            raise
        _impl = _ref

BACKEND = _impl.BACKEND_NAME

sigmoid = _impl.sigmoid
swish_fwd = _impl.swish_fwd
swish_bwd = _impl.swish_bwd
mlp4_fwd = _impl.mlp4_fwd
mlp4_bwd = _impl.mlp4_bwd
rk4_pair_fwd = _impl.rk4_pair_fwd
rk4_pair_bwd = _impl.rk4_pair_bwd
conv2d_circ_fwd = _impl.conv2d_circ_fwd
conv2d_circ_bwd = _impl.conv2d_circ_bwd
adam_update = _impl.adam_update

reference = _ref


def compiled_available():
    try:
        from leads.kernels import _core  # noqa: F401
    except ImportError:
        return False
    return True
