"""Built-in invariant suite run by ``pqflow check``."""

from __future__ import annotations

import numpy as np

from ..diffgeo import (
    CoupledState,
    Grid,
    MetricField,
    coupling_tensors,
    grad_norm_sq,
    integrate,
    p_laplacian,
    partials,
    quad_form,
    raise_index,
    volume,
)
from ..geomflow import FlowConfig, rates, step
from ..monitor import Verdict, curvature_bound_check, lemma_continuity_check, run_monitor
from ..pqeigen import EigenParams, first_eigenpair


def _torus_state(n: int = 32, amp: float = 0.2, phi_amp: float = 0.0) -> CoupledState:
    grid = Grid.torus(n)
    x, y = grid.coords()
    g = MetricField.conformal(grid, amp * np.cos(x) + 0.5 * amp * np.sin(y))
    return CoupledState(g, phi_amp * np.sin(x), 0.0)


def divergence_theorem() -> Verdict:
    """``int Delta_p f dmu = 0`` on a curved torus for random ``f``."""
    rng = np.random.default_rng(1)
    st = _torus_state(24)
    worst = 0.0
    for p in (2.0, 3.0, 4.0):
        f = rng.standard_normal(st.grid.shape)
        lap = p_laplacian(f, st.g, p, 1e-8)
        rel = abs(integrate(lap, st.g)) / integrate(np.abs(lap), st.g)
        worst = max(worst, rel)
    return Verdict("discrete divergence theorem", worst <= 1e-10, 1e-10 - worst,
                   detail=f"max relative {worst:.2e}")


def scaling_law() -> Verdict:
    """``lambda(c g) c^(p/2)`` independent of ``c``."""
    worst = 0.0
    cases = [(_torus_state(16).g, EigenParams(2, 2)),
             (MetricField.conformal(Grid.circle(64), 0.1 * np.cos(Grid.circle(64).coords()[0])),
              EigenParams(4, 4, a=1))]
    for g, par in cases:
        vals = [first_eigenpair(g.scaled(c), par).lam * c ** (par.p / 2) for c in (0.5, 1.0, 2.0)]
        worst = max(worst, (max(vals) - min(vals)) / min(vals))
    return Verdict("scaling law lambda(c g) c^(p/2)", worst <= 5e-3, 5e-3 - worst,
                   detail=f"max spread {worst:.2e}")


def lemma_scaled() -> list[Verdict]:
    out = []
    g1 = _torus_state(16).g
    for par in (EigenParams(2, 2), EigenParams(4, 4, a=1)):
        v = lemma_continuity_check(g1, g1.scaled(1.1), 0.1, par)
        v.name = f"metric comparison bound, g2 = 1.1 g1, p = {par.p:g}"
        out.append(v)
    return out


def derivative_identity(p: float = 3.0, eps: float = 1e-5) -> Verdict:
    """Pointwise ``d/dt |grad f|^p = p |grad f|^(p-2) calS(grad f, grad f)`` for fixed ``f``."""
    st = _torus_state(32, phi_amp=0.3)
    kappa = 0.5
    x, y = st.grid.coords()
    f = np.sin(x) + 0.5 * np.cos(2 * y) + 0.2 * np.sin(x + y)
    rate, _ = rates(st, FlowConfig(kappa=kappa))
    gp = st.g + eps * rate
    gm = st.g + (-eps) * rate
    fd = (grad_norm_sq(f, gp) ** (p / 2) - grad_norm_sq(f, gm) ** (p / 2)) / (2 * eps)
    calS, _ = coupling_tensors(st, kappa)
    up = raise_index(partials(f, st.grid), st.g)
    pred = p * grad_norm_sq(f, st.g) ** (p / 2 - 1) * quad_form(calS, up)
    err = float(np.max(np.abs(fd - pred)) / np.max(np.abs(pred)))
    return Verdict("pointwise gradient-power derivative identity", err <= 0.02, 0.02 - err,
                   detail=f"relative error {err:.2e}")


def volume_rate() -> Verdict:
    """Richardson-extrapolated ``dVol/dt`` against ``-int S dmu`` (kappa = 0.5, phi = sin x)."""
    st = _torus_state(32, phi_amp=1.0)
    cfg = FlowConfig(kappa=0.5, stepper="rk4")
    _, S = coupling_tensors(st, cfg.kappa)
    target = -integrate(S, st.g)
    v0 = volume(st.g)
    dt = 1e-3
    d1 = (volume(step(st, cfg, dt).g) - v0) / dt
    d2 = (volume(step(st, cfg, dt / 2).g) - v0) / (dt / 2)
    rich = 2 * d2 - d1
    err = abs(rich - target) / abs(target)
    return Verdict("volume rate dVol/dt = -int S", err <= 0.02, 0.02 - err,
                   detail=f"relative error {err:.2e}")


def stock_curvature_bound() -> Verdict:
    st = _torus_state(24)
    trace = run_monitor(st, FlowConfig(t_end=0.1, record_every=0.025), EigenParams(2, 2))
    v = curvature_bound_check(trace)
    v.name = "stock run: " + v.name
    return v


def run_suite() -> list[Verdict]:
    return [divergence_theorem(), scaling_law(), *lemma_scaled(), derivative_identity(),
            volume_rate(), stock_curvature_bound()]
