"""Hot inner loops with a compiled backend and a numpy fallback.

The compiled module is used when it was built and ``TDDCSI_PURE_PYTHON``
is not set to ``1``. Both backends agree bit for bit; ``get_backend`` hands
out either one explicitly (used by the benchmark and the parity tests).
"""
import os
from types import SimpleNamespace

import numpy as np

from . import _pure

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_NAMES = ("adam_update", "tanh_backward", "sigmoid_backward", "interp_linear")


def available_backends():
    return ["python"] + (["cython"] if _core is not None else [])


def get_backend(name):
    if name == "python":
        mod = _pure
    elif name == "cython":
        if _core is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        mod = _core
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return SimpleNamespace(name=name, **{n: getattr(mod, n) for n in _NAMES})


if _core is not None and os.environ.get("TDDCSI_PURE_PYTHON") != "1":
    BACKEND = "cython"
else:
    BACKEND = "python"

_active = get_backend(BACKEND)


def adam_update(param, grad, m, v, step, beta1, beta2, eps):
    """In-place Adam step on flat contiguous arrays of one dtype.

    ``step`` is the bias-corrected learning rate for the current iteration.
    """
    _active.adam_update(param, grad, m, v, step, beta1, beta2, eps)


def activation_backward(kind, act, delta):
    """Multiply ``delta`` in place by the derivative of ``kind`` at output ``act``."""
    if kind == "tanh":
        _active.tanh_backward(act.reshape(-1), delta.reshape(-1))
    elif kind == "sigmoid":
        _active.sigmoid_backward(act.reshape(-1), delta.reshape(-1))
    elif kind != "linear":
        raise ValueError(f"no elementwise derivative for {kind!r}")


def interp_segments(knots, n_out):
    """Segment index and fractional position of every output point.

    Points beyond either end use the outermost segment (linear extrapolation).
    """
    knots = np.asarray(knots, dtype=np.int64)
    x = np.arange(n_out, dtype=np.int64)
    seg = np.searchsorted(knots, x, side="right") - 1
    seg = np.clip(seg, 0, len(knots) - 2).astype(np.int64)
    lo = knots[seg]
    frac = (x - lo).astype(np.float64) / (knots[seg + 1] - lo).astype(np.float64)
    return seg, frac


def interp_linear(values, knots, n_out):
    """Piecewise-linear interpolation of complex rows ``values`` sampled at ``knots``."""
    values = np.atleast_2d(np.asarray(values, dtype=np.complex128))
    seg, frac = interp_segments(knots, n_out)
    re = np.ascontiguousarray(values.real)
    im = np.ascontiguousarray(values.imag)
    out_re, out_im = _active.interp_linear(re, im, seg, frac)
    out = np.empty(out_re.shape, dtype=np.complex128)
    out.real = out_re
    out.imag = out_im
    return out
