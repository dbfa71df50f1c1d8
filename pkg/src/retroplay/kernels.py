"""Kernel dispatch: the compiled extension when it imports, else the Python fallback.

Set ``RETROPLAY_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("RETROPLAY_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

substring_bits = _impl.substring_bits
tanimoto_matrix = _impl.tanimoto_matrix
dp_layer = _impl.dp_layer
