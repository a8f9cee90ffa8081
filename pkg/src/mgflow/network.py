"""Forward pass, centered readout, and risk of the ReLU network.

The realization subtracts, inside the final affine map only, the integral of
the last hidden layer's activations against the input measure:

    output(x) = W_L (h(x) - int h dmu) + b_L .

The subtracted term is the plain mu-integral of the activations, not the
mu-average; with unit total mass the two coincide.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .params import ParamVector
from .quadrature import InputMeasure, QuadratureError, quadrature_nodes
from .smoothing import INF, activation_knots, smoothed_act
from .targets import TargetFunction


def _as_batch(x, dim: int):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        if dim != 1:
            raise ValueError(f"scalar input for {dim}-dimensional network")
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if dim == 1:
            return x.reshape(-1, 1), False
        if x.shape[0] == dim:
            return x.reshape(1, dim), True
        raise ValueError(f"input of shape {x.shape} does not match dim {dim}")
    if x.shape[1] != dim:
        raise ValueError(f"input of shape {x.shape} does not match dim {dim}")
    return x, False


def forward(theta: ParamVector, x, r=INF):
    """Hidden pre-activations and activations, batched over x.

    Returns (pres, acts): lists over hidden layers k = 1..L-1, each entry of
    shape (n, l_k).  The final affine map and the centering term are applied
    by `realize`, which needs the input measure.
    """
    arch = theta.arch
    X, _ = _as_batch(x, arch.layer_dims[0])
    pres, acts = [], []
    h = X
    for k in range(1, arch.depth):
        z = h @ theta.weights(k).T + theta.biases(k)
        h = smoothed_act(r, z)
        pres.append(z)
        acts.append(h)
    return pres, acts


def exact_breakpoints(theta: ParamVector, f_breaks=None, r=INF) -> Optional[np.ndarray]:
    """Integrand breakpoints for the exact quadrature path.

    Only available for shallow networks (one hidden layer) with 1-d input,
    where every hidden pre-activation is affine in x: it crosses each
    activation knot at a single computable point.  Returns None otherwise.
    """
    arch = theta.arch
    if arch.depth != 2 or arch.layer_dims[0] != 1:
        return None
    w = theta.weights(1)[:, 0]
    b = theta.biases(1)
    knots = activation_knots(r)
    pts = []
    nz = w != 0.0
    for c in knots:
        pts.append((c - b[nz]) / w[nz])
    if f_breaks is not None:
        pts.append(np.asarray(f_breaks, dtype=float).ravel())
    return np.concatenate(pts) if pts else np.array([])


def _nodes_for(theta, measure, f_breaks, r, resolution):
    bp = exact_breakpoints(theta, f_breaks=f_breaks, r=r) if measure.kind == "uniform" else None
    return quadrature_nodes(measure, breakpoints=bp, resolution=resolution)


def hidden_mean(
    theta: ParamVector,
    measure: InputMeasure,
    r=INF,
    resolution: Optional[int] = None,
) -> np.ndarray:
    """mu-integral of the last hidden layer's activations (not mass-normalized)."""
    X, w = _nodes_for(theta, measure, None, r, resolution)
    if X.shape[0] == 0:
        return np.zeros(theta.arch.layer_dims[-2])
    _, acts = forward(theta, X, r=r)
    m = w @ acts[-1]
    if not np.all(np.isfinite(m)):
        raise QuadratureError("hidden mean is non-finite")
    return m


def realize(
    theta: ParamVector,
    x,
    measure: InputMeasure,
    r=INF,
    resolution: Optional[int] = None,
    mean: Optional[np.ndarray] = None,
):
    """Network output at x; `mean` may be passed to reuse a precomputed hidden mean."""
    arch = theta.arch
    X, squeeze = _as_batch(x, arch.layer_dims[0])
    if mean is None:
        mean = hidden_mean(theta, measure, r=r, resolution=resolution)
    _, acts = forward(theta, X, r=r)
    L = arch.depth
    out = (acts[-1] - mean) @ theta.weights(L).T + theta.biases(L)
    return out[0] if squeeze else out


def risk(
    theta: ParamVector,
    measure: InputMeasure,
    f: TargetFunction,
    r=INF,
    resolution: Optional[int] = None,
) -> float:
    """mu-integral of the squared output error against the target."""
    X, w = _nodes_for(theta, measure, f.breakpoints, r, resolution)
    if X.shape[0] == 0:
        return 0.0
    _, acts = forward(theta, X, r=r)
    mean = w @ acts[-1]
    L = theta.arch.depth
    out = (acts[-1] - mean) @ theta.weights(L).T + theta.biases(L)
    resid = out - f(X)
    value = float(w @ np.sum(resid**2, axis=1))
    if not math.isfinite(value):
        raise QuadratureError("risk is non-finite")
    return value
