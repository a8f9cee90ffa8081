"""Time integration of the projected gradient flow and the normalized
gradient descent iteration.

The flow starts from the cascade-rescaled initial point and follows
d theta/dt = -gamma(t) * G(theta), where G projects the risk gradient onto
the tangent space of the unit-norm constraint set.  Integration is fixed-step
explicit (Euler or RK4) on purpose: the constraint invariance is exact in
continuous time, and the tests quantify the discretization drift rather than
assume it away.  Renormalizing the hidden subvectors after each step (a
retraction) is the default policy and can be disabled to measure drift.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .gradients import generalized_gradient
from .manifold import (
    max_constraint_deviation,
    min_subvector_norm,
    project_gradient,
    renormalize,
    rescale_full,
)
from .network import risk
from .params import ParamVector
from .quadrature import InputMeasure, QuadratureError
from .smoothing import INF
from .targets import TargetFunction

STATIONARY_TOL = 1e-12
DIVERGENCE_GUARD = 1e12
GAMMA_CAP = 1e6


@dataclass
class FlowConfig:
    t_end: float = 1.0
    step: float = 1e-3
    integrator: str = "rk4"
    reproject: bool = True
    gamma: Union[float, str] = 1.0  # constant factor, or "rescaled"
    record_every: int = 1
    r: float = INF
    resolution: Optional[int] = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.step <= self.t_end:
            raise ValueError("step must satisfy 0 < step <= t_end")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if isinstance(self.gamma, str):
            if self.gamma != "rescaled":
                raise ValueError(f"gamma must be a number or 'rescaled', got {self.gamma!r}")
        elif not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")


@dataclass
class TrajectoryRecord:
    """Recorded states and per-state diagnostics of one run."""

    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    risk: list[float] = field(default_factory=list)
    psi_max_dev: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    extra: dict[str, list] = field(default_factory=dict)
    tags: Optional[list[str]] = None
    termination: str = "completed"
    degenerate_events: int = 0

    def append(self, t, state, risk_val, psi_dev, gnorm):
        self.times.append(float(t))
        self.states.append(np.array(state, dtype=float))
        self.risk.append(float(risk_val))
        self.psi_max_dev.append(float(psi_dev))
        self.grad_norm.append(float(gnorm))

    def validate(self):
        n = len(self.times)
        assert n == len(self.states) == len(self.risk) == len(self.psi_max_dev) == len(self.grad_norm)
        assert all(t1 > t0 for t0, t1 in zip(self.times, self.times[1:]))
        for channel in self.extra.values():
            assert len(channel) == n

    @property
    def sup_norm(self) -> float:
        return max(float(np.linalg.norm(s)) for s in self.states)


class _ProjectedField:
    """Evaluates -gamma * G(theta) plus the diagnostics the stepper needs."""

    def __init__(self, measure, f, cfg: FlowConfig):
        self.measure = measure
        self.f = f
        self.cfg = cfg

    def gradient_pair(self, theta: ParamVector):
        raw = generalized_gradient(
            theta, self.measure, self.f, r=self.cfg.r, resolution=self.cfg.resolution
        )
        return raw, project_gradient(theta, raw)

    def gamma_of(self, raw, projected) -> float:
        if self.cfg.gamma == "rescaled":
            g2 = float(projected @ projected)
            if g2 == 0.0:
                return 0.0
            return min(float(raw @ raw) / g2, GAMMA_CAP)
        return float(self.cfg.gamma)


def rescaled_gamma(
    theta: ParamVector,
    measure: InputMeasure,
    f: TargetFunction,
    r=INF,
    resolution: Optional[int] = None,
) -> float:
    """Time-rescaling factor |raw|^2 / |G|^2 making the risk decay at the
    unconstrained rate.  Raises when G vanishes (stationary on the manifold)."""
    raw = generalized_gradient(theta, measure, f, r=r, resolution=resolution)
    proj = project_gradient(theta, raw)
    g2 = float(proj @ proj)
    if g2 == 0.0:
        raise ZeroDivisionError("projected gradient vanishes: stationary on the manifold")
    return float(raw @ raw) / g2


def _rk4_step(rhs, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_flow(
    xi: ParamVector,
    measure: InputMeasure,
    f: TargetFunction,
    cfg: FlowConfig,
) -> TrajectoryRecord:
    """Integrate the projected flow from the rescaled initial point.

    Early termination: 'stationary' when |G| falls below 1e-12, 'nonfinite'
    when a step produces non-finite values (the record keeps the last valid
    state), 'divergence_guard' when any component exceeds 1e12.
    """
    arch = xi.arch
    field_ = _ProjectedField(measure, f, cfg)
    record = TrajectoryRecord()
    if min_subvector_norm(xi) == 0.0:
        warnings.warn(
            "initial point has a zero hidden subvector: constraint invariance "
            "is not guaranteed from this start",
            RuntimeWarning,
        )
        record.degenerate_events += 1

    theta = rescale_full(xi)
    n_steps = int(round(cfg.t_end / cfg.step))

    def rhs(values):
        th = ParamVector(arch, values)
        raw, proj = field_.gradient_pair(th)
        return -field_.gamma_of(raw, proj) * proj

    def diagnostics(t, theta):
        raw, proj = field_.gradient_pair(theta)
        record.append(
            t,
            theta.values,
            risk(theta, measure, f, r=cfg.r, resolution=cfg.resolution),
            max_constraint_deviation(theta),
            np.linalg.norm(proj),
        )
        return proj

    proj = diagnostics(0.0, theta)
    if np.linalg.norm(proj) <= STATIONARY_TOL:
        record.termination = "stationary"
        # the exact flow is (approximately) constant from here on
        record.append(cfg.t_end, theta.values, record.risk[-1], record.psi_max_dev[-1], record.grad_norm[-1])
        return record

    for n in range(1, n_steps + 1):
        y = theta.values
        y_new = _rk4_step(rhs, y, cfg.step) if cfg.integrator == "rk4" else y + cfg.step * rhs(y)
        if not np.all(np.isfinite(y_new)):
            record.termination = "nonfinite"
            return record
        theta = ParamVector(arch, y_new)
        if cfg.reproject:
            theta = renormalize(theta)
        if min_subvector_norm(theta) == 0.0:
            record.degenerate_events += 1
        if np.max(np.abs(theta.values)) > DIVERGENCE_GUARD:
            record.termination = "divergence_guard"
            try:
                diagnostics(n * cfg.step, theta)
            except (QuadratureError, FloatingPointError):
                record.append(n * cfg.step, theta.values, float("nan"),
                              max_constraint_deviation(theta), float("nan"))
            return record
        if n % cfg.record_every == 0 or n == n_steps:
            proj = diagnostics(n * cfg.step, theta)
            if np.linalg.norm(proj) <= STATIONARY_TOL and n < n_steps:
                record.termination = "stationary"
                record.append(
                    cfg.t_end, theta.values, record.risk[-1], record.psi_max_dev[-1], record.grad_norm[-1]
                )
                return record
    return record


def gd_run(
    xi: ParamVector,
    measure: InputMeasure,
    f: TargetFunction,
    steps: int,
    gammas,
    r=INF,
    resolution: Optional[int] = None,
    record_every: int = 1,
) -> TrajectoryRecord:
    """Normalized gradient descent: step against G, then renormalize.

    `gammas` is a constant, a per-step sequence, or "rescaled".
    """
    arch = xi.arch
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if isinstance(gammas, str) and gammas != "rescaled":
        raise ValueError(f"gammas must be a number, a sequence, or 'rescaled', got {gammas!r}")
    if not isinstance(gammas, str) and np.ndim(gammas) == 1 and len(gammas) < steps:
        raise ValueError(f"gamma schedule has {len(gammas)} entries for {steps} steps")

    def gamma_at(n, raw, proj):
        if isinstance(gammas, str):
            g2 = float(proj @ proj)
            return 0.0 if g2 == 0.0 else min(float(raw @ raw) / g2, GAMMA_CAP)
        if np.ndim(gammas) == 0:
            return float(gammas)
        return float(gammas[n])

    cfg = FlowConfig(t_end=max(steps, 1), step=1.0, r=r, resolution=resolution)
    field_ = _ProjectedField(measure, f, cfg)
    record = TrajectoryRecord()
    theta = rescale_full(xi)

    for n in range(steps + 1):
        raw, proj = field_.gradient_pair(theta)
        if n % record_every == 0 or n == steps:
            record.append(
                float(n),
                theta.values,
                risk(theta, measure, f, r=r, resolution=resolution),
                max_constraint_deviation(theta),
                np.linalg.norm(proj),
            )
        if n == steps:
            break
        stepped = ParamVector(arch, theta.values - gamma_at(n, raw, proj) * proj)
        if not np.all(np.isfinite(stepped.values)):
            record.termination = "nonfinite"
            break
        if min_subvector_norm(stepped) == 0.0:
            record.degenerate_events += 1
        theta = renormalize(stepped)
        if np.max(np.abs(theta.values)) > DIVERGENCE_GUARD:
            record.termination = "divergence_guard"
            break
    return record
