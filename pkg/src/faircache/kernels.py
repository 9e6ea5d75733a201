"""Selects the compiled kernels when they are built, the pure-Python ones otherwise.

``FAIRCACHE_BACKEND=python`` forces the fallback.  ``use()`` switches at
runtime (tests and the benchmark compare both).
"""
import os

from faircache import _pykernels

try:
    from faircache import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = ("bb_welfare", "mmf_mw", "gamma_solve", "pffeas_ahk")
BACKEND = None


def available():
    return ["python"] + (["compiled"] if _ckernels is not None else [])


def use(name):
    """Route kernel calls to ``"compiled"`` or ``"python"``; returns the previous backend."""
    global BACKEND
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built")
        mod = _ckernels
    elif name == "python":
        mod = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    prev = BACKEND
    for fn in _NAMES:
        globals()[fn] = getattr(mod, fn)
    BACKEND = name
    return prev


TIE_RTOL = _pykernels.TIE_RTOL
use("python" if _ckernels is None or os.environ.get("FAIRCACHE_BACKEND") == "python" else "compiled")
