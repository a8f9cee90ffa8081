"""Input measures on a box and the quadrature engine.

Integrals against the measure come in three flavors:

* discrete measures - exact weighted sums;
* uniform measure, 1-d input, with declared integrand breakpoints - the
  interval is split at every breakpoint and each segment gets a fixed-order
  Gauss-Legendre rule, which is exact for the piecewise-polynomial integrands
  produced by shallow ReLU networks and polynomial targets;
* everything else - a composite Gauss-Legendre tensor grid whose per-axis
  resolution is a configuration knob.

Weights always sum to the measure's total mass: integrals are against the
measure itself, never normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

DEFAULT_RESOLUTION = 2048  # nodes per axis for the composite grid
SEGMENT_GL_ORDER = 12      # exact for polynomials up to degree 23
_PANEL_ORDER = 4


class QuadratureError(RuntimeError):
    """Raised when an integrand produces non-finite values."""


@dataclass(frozen=True)
class InputMeasure:
    """Finite measure on [a, b]^dim: uniform (Lebesgue on the box) or discrete."""

    kind: str
    a: float
    b: float
    dim: int
    points: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "discrete"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if not self.b > self.a:
            raise ValueError("need b > a")
        if self.dim < 1:
            raise ValueError("need dim >= 1")
        if self.kind == "discrete":
            pts = np.atleast_2d(np.asarray(self.points, dtype=float))
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
            if pts.shape[1] != self.dim or pts.shape[0] != w.size:
                raise ValueError("points must be (n, dim) with matching weights")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            if pts.size and (pts.min() < self.a - 1e-12 or pts.max() > self.b + 1e-12):
                raise ValueError(f"points must lie in [{self.a}, {self.b}]^{self.dim}")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "weights", w)
        if not np.isfinite(self.total_mass):
            raise ValueError("total mass must be finite")

    @property
    def total_mass(self) -> float:
        if self.kind == "discrete":
            return float(self.weights.sum())
        return float((self.b - self.a) ** self.dim)


def uniform_measure(a: float = 0.0, b: float = 1.0, dim: int = 1) -> InputMeasure:
    return InputMeasure("uniform", float(a), float(b), int(dim))


def discrete_measure(points, weights, a: float = 0.0, b: float = 1.0) -> InputMeasure:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return InputMeasure("discrete", float(a), float(b), pts.shape[1], pts, np.asarray(weights, float))


def segment_rule(edges: np.ndarray, order: int = SEGMENT_GL_ORDER):
    """Gauss-Legendre nodes/weights on each [edges[j], edges[j+1]] segment."""
    x_ref, w_ref = np.polynomial.legendre.leggauss(order)
    lo = edges[:-1, None]
    hi = edges[1:, None]
    half = (hi - lo) / 2.0
    nodes = (lo + hi) / 2.0 + half * x_ref[None, :]
    weights = half * w_ref[None, :]
    return nodes.ravel(), weights.ravel()


def composite_rule(a: float, b: float, n_nodes: int):
    """Composite Gauss-Legendre rule on [a, b] with about n_nodes nodes."""
    panels = max(1, int(n_nodes) // _PANEL_ORDER)
    edges = np.linspace(a, b, panels + 1)
    return segment_rule(edges, order=_PANEL_ORDER)


def _clean_breakpoints(breakpoints, a: float, b: float) -> np.ndarray:
    if breakpoints is None:
        return np.array([])
    bp = np.asarray(breakpoints, dtype=float).ravel()
    bp = bp[np.isfinite(bp)]
    bp = np.unique(bp[(bp > a) & (bp < b)])
    return bp


def quadrature_nodes(
    measure: InputMeasure,
    breakpoints=None,
    resolution: Optional[int] = None,
):
    """Nodes (n, dim) and weights (n,) realizing integration against the measure."""
    if measure.kind == "discrete":
        return measure.points, measure.weights
    if measure.dim == 1 and breakpoints is not None:
        edges = np.concatenate(
            ([measure.a], _clean_breakpoints(breakpoints, measure.a, measure.b), [measure.b])
        )
        x, w = segment_rule(edges)
        return x[:, None], w
    res = DEFAULT_RESOLUTION if resolution is None else int(resolution)
    x1, w1 = composite_rule(measure.a, measure.b, res)
    if measure.dim == 1:
        return x1[:, None], w1
    grids = np.meshgrid(*([x1] * measure.dim), indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    W = w1
    for _ in range(measure.dim - 1):
        W = np.multiply.outer(W, w1)
    return X, W.ravel()


def integrate(g, measure: InputMeasure, breakpoints=None, resolution: Optional[int] = None):
    """Integral of g against the measure; g maps (n, dim) arrays to (n,) or (n, m)."""
    X, w = quadrature_nodes(measure, breakpoints=breakpoints, resolution=resolution)
    if X.shape[0] == 0:
        probe = np.asarray(g(np.zeros((1, measure.dim))), dtype=float)
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0
    vals = np.asarray(g(X), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("integrand produced non-finite values")
    if vals.ndim == 1:
        return float(w @ vals)
    return w @ vals
