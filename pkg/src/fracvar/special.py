"""Gamma function by the Lanczos approximation (g=7, 9 terms).

Works on scalars and numpy arrays. Arguments below 1/2 go through the
reflection formula.
"""
import math

import numpy as np

__all__ = ["PoleError", "gamma_fn", "gamma_array", "rgamma_array"]

_G = 7.0
_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class PoleError(ValueError):
    """Gamma evaluated at a non-positive integer."""

    def __init__(self, x):
        super().__init__(f"gamma has a pole at {x!r}")
        self.x = x


def _lanczos(x):
    # valid for x >= 1/2
    x = x - 1.0
    acc = _COEF[0]
    for i in range(1, len(_COEF)):
        acc = acc + _COEF[i] / (x + i)
    tt = x + _G + 0.5
    return _SQRT_2PI * tt ** (x + 0.5) * np.exp(-tt) * acc


def _sinpi(x):
    # sin(pi x) with the argument reduced exactly first; plain sin(pi*x)
    # loses relative accuracy near the integers
    n = np.round(x)
    return np.where(np.fmod(n, 2.0) == 0.0, 1.0, -1.0) * np.sin(np.pi * (x - n))


def gamma_array(x):
    """Elementwise gamma without pole checks (poles give inf or nan)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    lo = x < 0.5
    with np.errstate(all="ignore"):
        if np.any(~lo):
            out[~lo] = _lanczos(x[~lo])
        if np.any(lo):
            xl = x[lo]
            out[lo] = np.pi / (_sinpi(xl) * _lanczos(1.0 - xl))
    return out


def rgamma_array(x):
    """Elementwise 1/Gamma(x)."""
    return 1.0 / gamma_array(x)


def gamma_fn(x):
    """Gamma function of a real scalar.

    Accurate to about 1e-15 relative on the positive axis. Raises
    :class:`PoleError` at 0, -1, -2, ...

    >>> round(gamma_fn(5.0), 10)
    24.0
    """
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        raise PoleError(x)
    if x < 0.5:
        return math.pi / (float(_sinpi(x)) * float(_lanczos(1.0 - x)))
    return float(_lanczos(x))
