"""Kernel backend selection.

The compiled extension ``irsdetect._kernels`` is used when it imports; the
numpy implementation in ``irsdetect._pykernels`` is the fallback. Setting
``IRSDETECT_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

if os.environ.get("IRSDETECT_PURE_PYTHON", "") not in ("", "0") or _compiled is None:
    NAME = "python"
else:
    NAME = "compiled"

kernels = BACKENDS[NAME]


def get(name: str | None = None):
    """Return the kernel module ``name`` (``"compiled"`` or ``"python"``), default the active one."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available (have {sorted(BACKENDS)})") from None
