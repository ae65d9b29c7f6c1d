"""Select the compiled kernels when available, else the numpy fallback.

Set ``PVD_CROSSDIFF_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

kernels = _kernels_py
if os.environ.get("PVD_CROSSDIFF_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as kernels  # noqa: F811
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = kernels.BACKEND
