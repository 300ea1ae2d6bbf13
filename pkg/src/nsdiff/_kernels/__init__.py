"""Propagation kernels with a compiled core and a NumPy fallback.

The compiled extension is preferred when it imports cleanly; set
``NSDIFF_KERNELS=python`` or ``NSDIFF_KERNELS=compiled`` to force a backend.
Both backends implement identical semantics (see ``_ref``); linear-model
kernels match bitwise and the log-evaluating ones to floating-point
rounding, so the choice only affects speed.
"""

import os

from . import _ref

_FORCED = os.environ.get("NSDIFF_KERNELS", "").strip().lower()

_compiled = None
if _FORCED != "python":
    try:
        from . import _core as _compiled
    except ImportError:
        _compiled = None
        if _FORCED == "compiled":
            raise ImportError(
                "NSDIFF_KERNELS=compiled but the nsdiff._kernels._core "
                "extension is not built; run `pip install -e . "
                "--no-build-isolation` or unset NSDIFF_KERNELS"
            )

_active = _compiled if _compiled is not None else _ref

backend_name = _active.BACKEND_NAME
ou_bridge = _active.ou_bridge
lv_bridge = _active.lv_bridge
ou_euler = _active.ou_euler
lv_euler = _active.lv_euler


def available_backends():
    """Mapping of backend name -> kernel module, for tests and benchmarks."""
    out = {"python": _ref}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
