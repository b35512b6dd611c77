"""Kernel backend selection.

The compiled extension is preferred when importable; setting the
environment variable ``GADKIT_NO_EXT`` forces the numpy fallback (used by
the benchmark and by the backend-consistency tests).
"""

import os

from . import _kernels_np

if os.environ.get("GADKIT_NO_EXT"):
    _impl = _kernels_np
    BACKEND = "numpy"
else:
    try:
        from . import _fieldcore as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_np
        BACKEND = "numpy"

laplacian = _impl.laplacian
ac_rhs = _impl.ac_rhs
ac_linearized = _impl.ac_linearized
ou_chain = _impl.ou_chain

numpy_backend = _kernels_np
