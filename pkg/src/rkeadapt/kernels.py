"""Kernel backend selection.

The compiled Cython kernel is used when it was built; otherwise the
pure-Python twin is loaded.  Set ``RKEADAPT_BACKEND=python`` to force the
fallback.
"""

import os

from . import _kernel_py

try:
    from . import _kernel as _kernel_c
except ImportError:  # extension not built
    _kernel_c = None

BACKENDS = {"python": _kernel_py}
if _kernel_c is not None:
    BACKENDS["cython"] = _kernel_c


def default_backend() -> str:
    forced = os.environ.get("RKEADAPT_BACKEND")
    if forced:
        if forced not in BACKENDS:
            raise ImportError(f"RKEADAPT_BACKEND={forced!r} not available; have {sorted(BACKENDS)}")
        return forced
    return "cython" if "cython" in BACKENDS else "python"


BACKEND = default_backend()


def get_kernel(name=None):
    name = name or default_backend()
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}; have {sorted(BACKENDS)}") from None
