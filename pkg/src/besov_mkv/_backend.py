"""Select the compiled particle core, falling back to numpy.

Set BESOV_MKV_PURE=1 to force the numpy path.
"""
import os

if os.environ.get("BESOV_MKV_PURE", "") not in ("", "0"):
    from . import _fallback as core
else:
    try:
        from . import _core as core
    except ImportError:  # extension not built
        from . import _fallback as core

BACKEND = core.NAME
