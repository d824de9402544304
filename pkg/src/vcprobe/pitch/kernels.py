"""Pick the compiled kernels when available, else the numpy fallback.

Set ``VCPROBE_PURE_PYTHON=1`` to force the fallback. ``yin_cmnd`` always
uses the FFT version: the compiled direct-sum loop is O(win * tau) per frame
and loses to it at the default window (see ``benchmarks/bench_kernels.py``).
"""
import os

from . import _kernels_py

try:
    if os.environ.get("VCPROBE_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

yin_cmnd = _kernels_py.yin_cmnd
nccf = _impl.nccf
viterbi = _impl.viterbi


def backends() -> dict:
    """All importable kernel modules, keyed by backend name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
