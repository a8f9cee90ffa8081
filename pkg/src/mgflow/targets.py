"""Target functions.

Scalar targets on [0, 1] are piecewise polynomials with declared breakpoints so
that every integral against them can be evaluated exactly (segment-wise
Gauss-Legendre, or closed-form antiderivatives).  Multivariate targets wrap an
arbitrary evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

MAX_POLY_DEGREE = 5


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Piecewise polynomial on [breaks[0], breaks[-1]].

    `coeffs[j]` holds ascending-power coefficients of the polynomial on
    [breaks[j], breaks[j+1]].  Evaluation at a breakpoint uses the right piece
    (last piece at the right endpoint).
    """

    breaks: tuple[float, ...]
    coeffs: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        breaks = tuple(float(b) for b in self.breaks)
        coeffs = tuple(tuple(float(c) for c in piece) for piece in self.coeffs)
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coeffs", coeffs)
        if len(breaks) < 2 or any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])):
            raise ValueError("breakpoints must be strictly increasing, length >= 2")
        if len(coeffs) != len(breaks) - 1:
            raise ValueError("need one coefficient tuple per piece")
        if any(len(p) == 0 or len(p) - 1 > MAX_POLY_DEGREE for p in coeffs):
            raise ValueError(f"piece degree must be in 0..{MAX_POLY_DEGREE}")

    @property
    def degree(self) -> int:
        return max(len(p) - 1 for p in self.coeffs)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        piece = np.clip(
            np.searchsorted(self.breaks, s, side="right") - 1, 0, len(self.coeffs) - 1
        )
        for j, c in enumerate(self.coeffs):
            mask = piece == j
            if np.any(mask):
                out[mask] = np.polynomial.polynomial.polyval(s[mask], np.asarray(c))
        return out if out.ndim else float(out)

    def integral(self) -> float:
        """Exact integral over the full domain."""
        lo = np.asarray(self.breaks[:-1])
        hi = np.asarray(self.breaks[1:])
        total = 0.0
        for j, c in enumerate(self.coeffs):
            total += _poly_segment_integral(c, lo[j], hi[j], 0)
        return float(total)

    def mean(self) -> float:
        """Integral divided by the domain length."""
        return self.integral() / (self.breaks[-1] - self.breaks[0])

    def partial_moments(self, lo, hi, fbar: float):
        """Exact (A, B) with A = int_lo^hi (fbar - f) ds, B = same times s.

        `lo`, `hi` may be arrays (broadcast elementwise); an empty interval
        (hi <= lo) contributes zero.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        A = np.zeros(np.broadcast(lo, hi).shape)
        B = np.zeros_like(A)
        for j, c in enumerate(self.coeffs):
            c_lo = np.maximum(lo, self.breaks[j])
            c_hi = np.minimum(hi, self.breaks[j + 1])
            width_ok = c_hi > c_lo
            c_hi = np.where(width_ok, c_hi, c_lo)
            A += fbar * (c_hi - c_lo) - _poly_segment_integral(c, c_lo, c_hi, 0)
            B += fbar * (c_hi**2 - c_lo**2) / 2.0 - _poly_segment_integral(c, c_lo, c_hi, 1)
        return A, B

    def lipschitz_bound(self) -> float:
        """Max of |f'| over the domain (exact: critical points of each piece)."""
        best = 0.0
        for j, c in enumerate(self.coeffs):
            d = np.polynomial.polynomial.polyder(np.asarray(c)) if len(c) > 1 else np.zeros(1)
            pts = [self.breaks[j], self.breaks[j + 1]]
            if d.size > 1:
                dd = np.polynomial.polynomial.polyder(d)
                roots = np.roots(dd[::-1]) if dd.size > 1 else np.array([])
                for r in roots:
                    if abs(r.imag) < 1e-12 and self.breaks[j] <= r.real <= self.breaks[j + 1]:
                        pts.append(r.real)
            best = max(best, float(np.max(np.abs(np.polynomial.polynomial.polyval(np.asarray(pts), d)))))
        return best

    def interior_breaks(self) -> np.ndarray:
        return np.asarray(self.breaks[1:-1])


def _poly_segment_integral(coeffs, lo, hi, moment: int):
    """int_lo^hi s^moment * poly(s) ds, with array lo/hi."""
    total = np.zeros(np.broadcast(np.asarray(lo), np.asarray(hi)).shape)
    for p, c in enumerate(coeffs):
        q = p + moment + 1
        total = total + c * (np.asarray(hi) ** q - np.asarray(lo) ** q) / q
    return total


# Builders for the supported target families (all on [0, 1] by default).

def constant_target(c: float, domain=(0.0, 1.0)) -> PiecewisePolynomial:
    return PiecewisePolynomial(domain, ((c,),))


def affine_target(intercept: float, slope: float, domain=(0.0, 1.0)) -> PiecewisePolynomial:
    return PiecewisePolynomial(domain, ((intercept, slope),))


def abs_offset_target(center: float, domain=(0.0, 1.0)) -> PiecewisePolynomial:
    """s -> |s - center|."""
    a, b = domain
    if not a < center < b:
        # single affine piece, no interior kink
        sign = 1.0 if center <= a else -1.0
        return PiecewisePolynomial(domain, ((-sign * center, sign),))
    return PiecewisePolynomial((a, center, b), ((center, -1.0), (-center, 1.0)))


def piecewise_linear_target(knots_s, knots_y) -> PiecewisePolynomial:
    """Continuous piecewise-linear interpolant of (s_j, y_j)."""
    s = np.asarray(knots_s, dtype=float)
    y = np.asarray(knots_y, dtype=float)
    if s.ndim != 1 or s.size < 2 or s.shape != y.shape:
        raise ValueError("need matching 1-d knot arrays, at least two knots")
    if np.any(np.diff(s) <= 0):
        raise ValueError("knot locations must be strictly increasing")
    pieces = []
    for j in range(s.size - 1):
        slope = (y[j + 1] - y[j]) / (s[j + 1] - s[j])
        pieces.append((y[j] - slope * s[j], slope))
    return PiecewisePolynomial(tuple(s), tuple(pieces))


def polynomial_target(coeffs, domain=(0.0, 1.0)) -> PiecewisePolynomial:
    """Single polynomial piece, ascending coefficients, degree <= 5."""
    return PiecewisePolynomial(domain, (tuple(coeffs),))


@dataclass
class TargetFunction:
    """Target f: [a,b]^d -> R^m for the risk functional.

    `breakpoints` (1-d inputs only) lists interior kinks so the quadrature
    engine can split segments; `scalar` keeps the exact piecewise form when
    the target came from one.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    out_dim: int = 1
    lipschitz_bound: Optional[float] = None
    breakpoints: Optional[np.ndarray] = None
    scalar: Optional[PiecewisePolynomial] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.evaluator(x), dtype=float)
        n = x.shape[0]
        vals = vals.reshape(n, self.out_dim) if vals.ndim <= 1 else vals
        if vals.shape != (n, self.out_dim):
            raise ValueError(f"target returned shape {vals.shape}, expected ({n},{self.out_dim})")
        return vals

    @classmethod
    def from_scalar(cls, p: PiecewisePolynomial) -> "TargetFunction":
        return cls(
            evaluator=lambda x: p(x[:, 0]),
            out_dim=1,
            lipschitz_bound=p.lipschitz_bound(),
            breakpoints=p.interior_breaks(),
            scalar=p,
        )

    @classmethod
    def zero(cls, out_dim: int = 1) -> "TargetFunction":
        return cls(
            evaluator=lambda x: np.zeros((x.shape[0], out_dim)),
            out_dim=out_dim,
            lipschitz_bound=0.0,
            breakpoints=np.array([]),
        )

    @classmethod
    def affine_map(cls, weights, offset) -> "TargetFunction":
        """x -> W x + c for multivariate inputs."""
        W = np.atleast_2d(np.asarray(weights, dtype=float))
        c = np.atleast_1d(np.asarray(offset, dtype=float))
        if W.shape[0] != c.size:
            raise ValueError("weights/offset output dims disagree")
        return cls(
            evaluator=lambda x: x @ W.T + c,
            out_dim=c.size,
            lipschitz_bound=float(np.linalg.norm(W, 2)),
            breakpoints=np.array([]),
        )
