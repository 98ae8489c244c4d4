"""Batched device-evaluation kernels.

Two interchangeable lanes compute the same results: a numba-jitted lane
(default when numba imports) and a pure-numpy lane. Selection is controlled
by the ``AKAN_BACKEND`` environment variable at import time:

    AKAN_BACKEND=numba   require the jitted lane (raise if numba is missing)
    AKAN_BACKEND=numpy   force the pure-numpy lane
    unset / auto         numba if available, numpy otherwise

Both lanes are deterministic (sequential loops, no parallel reductions) and
agree to float64 rounding. ``benchmarks/bench_kernels.py`` times them against
each other.
"""

import math
import os

import numpy as np

_ENV_VAR = "AKAN_BACKEND"


def _numpy_analytic_forward(volts, amp, win, bias):
    # volts (n, 7), win (units, 7), bias (units,), amp (units,) -> (n,)
    return np.tanh(volts @ win.T + bias) @ amp


def _numpy_analytic_jacobian(volts, amp, win, bias):
    t = np.tanh(volts @ win.T + bias)
    return ((1.0 - t * t) * amp) @ win


def _numpy_mlp_forward(volts, w_in, b_in, w_hid, b_hid, w_out, b_out):
    z = np.maximum(volts @ w_in + b_in, 0.0)
    for i in range(w_hid.shape[0]):
        z = np.maximum(z @ w_hid[i] + b_hid[i], 0.0)
    return z @ w_out + b_out


_NUMPY_LANE = {
    "analytic_forward": _numpy_analytic_forward,
    "analytic_jacobian": _numpy_analytic_jacobian,
    "mlp_forward": _numpy_mlp_forward,
}


def _build_numba_lane():
    from numba import njit

    @njit(cache=True)
    def analytic_forward(volts, amp, win, bias):
        n = volts.shape[0]
        units = amp.shape[0]
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(units):
                z = bias[j]
                for e in range(7):
                    z += win[j, e] * volts[i, e]
                acc += amp[j] * math.tanh(z)
            out[i] = acc
        return out

    @njit(cache=True)
    def analytic_jacobian(volts, amp, win, bias):
        n = volts.shape[0]
        units = amp.shape[0]
        out = np.zeros((n, 7))
        for i in range(n):
            for j in range(units):
                z = bias[j]
                for e in range(7):
                    z += win[j, e] * volts[i, e]
                t = math.tanh(z)
                s = amp[j] * (1.0 - t * t)
                for e in range(7):
                    out[i, e] += s * win[j, e]
        return out

    @njit(cache=True)
    def mlp_forward(volts, w_in, b_in, w_hid, b_hid, w_out, b_out):
        n = volts.shape[0]
        width = b_in.shape[0]
        depth = w_hid.shape[0]
        out = np.empty(n)
        z = np.empty(width)
        nxt = np.empty(width)
        for i in range(n):
            for j in range(width):
                a = b_in[j]
                for e in range(7):
                    a += volts[i, e] * w_in[e, j]
                z[j] = a if a > 0.0 else 0.0
            for layer in range(depth):
                for j in range(width):
                    a = b_hid[layer, j]
                    for u in range(width):
                        a += z[u] * w_hid[layer, u, j]
                    nxt[j] = a if a > 0.0 else 0.0
                z, nxt = nxt, z
            a = b_out
            for u in range(width):
                a += z[u] * w_out[u]
            out[i] = a
        return out

    return {
        "analytic_forward": analytic_forward,
        "analytic_jacobian": analytic_jacobian,
        "mlp_forward": mlp_forward,
    }


def _select_backend():
    requested = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if requested not in ("auto", "numba", "numpy"):
        raise RuntimeError(
            f"{_ENV_VAR}={requested!r} is not one of auto, numba, numpy"
        )
    if requested == "numpy":
        return "numpy", _NUMPY_LANE
    try:
        lane = _build_numba_lane()
        return "numba", lane
    except ImportError:
        if requested == "numba":
            raise RuntimeError(f"{_ENV_VAR}=numba but numba is not importable")
        return "numpy", _NUMPY_LANE


_BACKEND_NAME, _LANE = _select_backend()

analytic_forward = _LANE["analytic_forward"]
analytic_jacobian = _LANE["analytic_jacobian"]
mlp_forward = _LANE["mlp_forward"]


def active_backend() -> str:
    """Name of the lane bound at import time ('numba' or 'numpy')."""
    return _BACKEND_NAME


def lanes():
    """All available lanes keyed by name, for equivalence tests and benchmarks."""
    out = {"numpy": dict(_NUMPY_LANE)}
    if _BACKEND_NAME == "numba":
        out["numba"] = dict(_LANE)
    else:
        try:
            out["numba"] = _build_numba_lane()
        except ImportError:
            pass
    return out
