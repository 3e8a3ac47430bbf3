"""Backend selection for the recurrence kernels.

The compiled extension is used when it imports; set ``AEROSLOSH_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _recurrence_py

if os.environ.get("AEROSLOSH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _recurrence_py
else:
    try:
        from . import _recurrence as _impl
    except ImportError:  # extension not built
        _impl = _recurrence_py

BACKEND = "compiled" if _impl is not _recurrence_py else "python"

relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward
