"""Ricci-harmonic flow of a metric coupled to a real-valued map.

Unnormalized flow::

    d/dt g   = -2 Ric + 2 kappa dphi (x) dphi
    d/dt phi = Delta_g phi

The normalized flow adds ``(2/m) r g`` with ``r`` the volume average of
``S = R - kappa |grad phi|^2``; ``kappa = 0`` is the Ricci flow. The
homothetic Einstein family ``g(t) = c(t) g0`` is handled in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .diffgeo import (
    CoupledState,
    DegenerateMetricError,
    MetricField,
    ParameterError,
    coupling_tensors,
    integrate,
    tension_field,
    volume,
)

__all__ = [
    "CoupledState", "FlowConfig", "EinsteinParams", "FlowStepError",
    "rhs_unnormalized", "rhs_normalized", "average_r", "s_min", "stable_dt",
    "step", "evolve", "comparison_bound_y", "einstein_c", "einstein_S",
    "einstein_lambda_scaling", "einstein_horizon",
]


class FlowStepError(RuntimeError):
    """Step could not be completed even after repeated dt halving."""

    def __init__(self, msg: str, t: float, min_det: float):
        super().__init__(f"{msg} (t={t:.6g}, min det g={min_det:.3e})")
        self.t = t
        self.min_det = min_det


@dataclass(frozen=True)
class FlowConfig:
    kappa: float = 0.0
    normalized: bool = False
    t_end: float = 1.0
    dt_safety: float = 0.25
    stepper: str = "rk4"
    record_every: float = 0.05  # flow time between records

    def __post_init__(self):
        if self.kappa < 0:
            raise ParameterError(f"kappa must be nonnegative, got {self.kappa}")
        if not self.t_end > 0:
            raise ParameterError("t_end must be positive")
        if not 0 < self.dt_safety <= 1:
            raise ParameterError("dt_safety must lie in (0, 1]")
        if self.stepper not in ("euler", "rk4"):
            raise ParameterError(f"unknown stepper {self.stepper!r}")
        if not self.record_every > 0:
            raise ParameterError("record_every must be positive")


def rhs_unnormalized(state: CoupledState, kappa: float):
    """Metric and map rates ``(-2 Ric + 2 kappa dphi dphi, Delta_g phi)``."""
    calS, _ = coupling_tensors(state, kappa)
    return -2.0 * calS, tension_field(state)


def average_r(state: CoupledState, kappa: float) -> float:
    _, S = coupling_tensors(state, kappa)
    return integrate(S, state.g) / volume(state.g)


def rhs_normalized(state: CoupledState, kappa: float):
    calS, S = coupling_tensors(state, kappa)
    r = integrate(S, state.g) / volume(state.g)
    m = state.grid.dim
    return -2.0 * calS + (2.0 / m) * r * state.g.comps, tension_field(state)


def rates(state: CoupledState, config: FlowConfig):
    if config.normalized:
        return rhs_normalized(state, config.kappa)
    return rhs_unnormalized(state, config.kappa)


def s_min(state: CoupledState, kappa: float) -> float:
    _, S = coupling_tensors(state, kappa)
    return float(S.min())


def stable_dt(state: CoupledState, safety: float) -> float:
    """Parabolic step limit ``safety * h^2 / (4 max |g^ij|)`` over nodes."""
    h2 = min(state.grid.h) ** 2
    scale = float(np.max(np.abs(state.g.inv)))
    return safety * h2 / (4.0 * scale)


def _advance(state: CoupledState, dt: float, config: FlowConfig) -> CoupledState:
    def shifted(s, k, c):
        return CoupledState(MetricField(s.grid, s.g.comps + c * k[0]), s.phi + c * k[1], s.t + c)

    k1 = rates(state, config)
    if config.stepper == "euler":
        return shifted(state, k1, dt)
    k2 = rates(shifted(state, k1, 0.5 * dt), config)
    k3 = rates(shifted(state, k2, 0.5 * dt), config)
    k4 = rates(shifted(state, k3, dt), config)
    dg = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
    dphi = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
    return CoupledState(MetricField(state.grid, state.g.comps + dt * dg), state.phi + dt * dphi, state.t + dt)


def step(state: CoupledState, config: FlowConfig, dt: float | None = None) -> CoupledState:
    """One explicit step; halves ``dt`` (at most 10 times) on SPD or finiteness failure."""
    if dt is None:
        dt = stable_dt(state, config.dt_safety)
    for _ in range(11):
        try:
            with np.errstate(over="raise", invalid="raise"):
                return _advance(state, dt, config)
        except (DegenerateMetricError, FloatingPointError, ValueError):
            dt *= 0.5
    raise FlowStepError("explicit step failed after 10 halvings", state.t, float(state.g.det.min()))


def evolve(state: CoupledState, config: FlowConfig) -> Iterator[CoupledState]:
    """Yield the state at ``t = 0, record_every, 2*record_every, ... <= t_end``.

    Each record interval is split into equal substeps no longer than the
    stability limit, so records land exactly on the record times.
    """
    yield state
    n_rec = int(math.floor(config.t_end / config.record_every + 1e-9))
    t0 = state.t
    for k in range(1, n_rec + 1):
        target = round(t0 + k * config.record_every, 12)  # clean record times
        span = target - state.t
        nsub = max(1, math.ceil(span / stable_dt(state, config.dt_safety)))
        dt = span / nsub
        for _ in range(nsub):
            state = step(state, config, dt)
        state = replace(state, t=target)
        yield state


# --------------------------------------------------------------------------
# curvature comparison and the Einstein family


def comparison_bound_y(t: float, s_min0: float, m: int) -> float:
    """Solution of ``y' = (2/m) y^2`` with ``y(0) = s_min0``."""
    denom = 1.0 - (2.0 / m) * s_min0 * t
    if denom <= 0:
        raise ParameterError(f"t={t} is beyond the blow-up time m/(2 S_min(0)) = {m / (2 * s_min0)}")
    return s_min0 / denom


@dataclass(frozen=True)
class EinsteinParams:
    """Einstein data ``Ric(g0) = a g0`` evolved homothetically."""

    a: float
    kappa: float = 0.0
    m: int = 2
    p: float = 2.0
    horizon: float = math.inf

    def __post_init__(self):
        if self.kappa < 0:
            raise ParameterError("kappa must be nonnegative")
        if self.m < 1:
            raise ParameterError("dimension must be positive")


def einstein_horizon(params: EinsteinParams) -> float:
    """Upper end of the admissible time interval, ``min(T, 1/(2(a-kappa)))``."""
    if params.kappa < params.a:
        return min(params.horizon, 1.0 / (2.0 * (params.a - params.kappa)))
    return params.horizon


def einstein_c(t: float, params: EinsteinParams) -> float:
    c = (-2.0 * params.a + 2.0 * params.kappa) * t + 1.0
    if not c > 0:
        raise ParameterError(f"homothety factor c({t}) = {c} is not positive")
    return c


def einstein_S(t: float, params: EinsteinParams) -> float:
    ak = params.a - params.kappa
    return ak * params.m / einstein_c(t, params)


def einstein_lambda_scaling(lam0: float, t: float, params: EinsteinParams) -> float:
    """Exact first eigenvalue on ``c(t) g0`` for ``p = q``: ``lam0 c^(-p/2)``."""
    return lam0 * einstein_c(t, params) ** (-params.p / 2.0)
