"""Backend selection: compiled kernels when available, pure Python otherwise.

Set SYMOPT_PURE_PYTHON=1 to force the fallback (useful for debugging and for
the backend-comparison benchmark).
"""

import os

if os.environ.get("SYMOPT_PURE_PYTHON"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

from . import _kernels_py as kernels_py  # always importable, for parity checks


def backend_name() -> str:
    return kernels.BACKEND
