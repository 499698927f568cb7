"""Hot kernels: compiled extension when built, numpy fallback otherwise.

Set ``EDSR_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("EDSR_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

ctc_forward_backward = _impl.ctc_forward_backward
align_counts = _impl.align_counts

__all__ = ["BACKEND", "ctc_forward_backward", "align_counts"]
