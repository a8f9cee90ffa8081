"""ReLU and its C^1 smoothed family.

The smoothed activation with index r is a cubic spline supported on (0, 1/r):

    act_r(x) = 0                  x <= 0
    act_r(x) = 2 r x^2 - r^2 x^3  0 < x < 1/r
    act_r(x) = x                  x >= 1/r

It matches max(x, 0) and its derivative outside (0, 1/r), has act_r(0) = 0 and
act_r'(0) = 0, and its derivative is uniformly bounded by 4/3.  For every fixed
x the pair (value, derivative) equals the exact ReLU pair (max(x,0), 1_{x>0})
for all r > 1/|x| (for all r when x <= 0), so the family becomes pointwise
exact as r grows.  r = inf selects exact ReLU with the left-continuous
derivative convention relu'(0) = 0.
"""

from __future__ import annotations

import math

import numpy as np

INF = math.inf


def _check_index(r) -> float:
    r = float(r)
    if not (r >= 1):
        raise ValueError(f"smoothing index must be >= 1 or inf, got {r}")
    return r


def smoothed_act(r, x):
    """Activation value, vectorized over x."""
    r = _check_index(r)
    x = np.asarray(x, dtype=float)
    if math.isinf(r):
        out = np.maximum(x, 0.0)
    else:
        out = np.where(x >= 1.0 / r, x, np.where(x <= 0.0, 0.0, 2.0 * r * x**2 - r**2 * x**3))
    return out if out.ndim else float(out)


def smoothed_act_deriv(r, x):
    """Activation derivative, vectorized over x."""
    r = _check_index(r)
    x = np.asarray(x, dtype=float)
    if math.isinf(r):
        out = (x > 0.0).astype(float)
    else:
        out = np.where(x >= 1.0 / r, 1.0, np.where(x <= 0.0, 0.0, 4.0 * r * x - 3.0 * r**2 * x**2))
    return out if out.ndim else float(out)


def activation_knots(r) -> np.ndarray:
    """Pre-activation values where the activation's polynomial piece changes."""
    r = _check_index(r)
    if math.isinf(r):
        return np.array([0.0])
    return np.array([0.0, 1.0 / r])
