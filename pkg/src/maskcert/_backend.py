"""Selects the compiled kernels when available, pure Python otherwise.

Set MASKCERT_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the backend-equality tests). Both backends produce bit-identical results;
only speed differs.
"""

import os

from . import _kernels_py

if os.environ.get("MASKCERT_PURE_PYTHON"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND
