import math

import numpy as np
import pytest

from pqflow.diffgeo import CoupledState, Grid, MetricField, ParameterError, integrate, ricci_and_scalar, volume
from pqflow.geomflow import (
    EinsteinParams,
    FlowConfig,
    FlowStepError,
    average_r,
    comparison_bound_y,
    einstein_c,
    einstein_horizon,
    einstein_lambda_scaling,
    einstein_S,
    evolve,
    rhs_normalized,
    rhs_unnormalized,
    s_min,
    stable_dt,
    step,
)


def flat_state(n=32, phi=None):
    grid = Grid.torus(n)
    x, _ = grid.coords()
    return CoupledState(MetricField.flat(grid), np.zeros(grid.shape) if phi is None else phi(x), 0.0)


def conformal_state(n=32, amp=0.2):
    grid = Grid.torus(n)
    x, _ = grid.coords()
    return CoupledState(MetricField.conformal(grid, amp * np.cos(x)), np.zeros(grid.shape), 0.0)


def centered_cos2(grid, x):
    return (np.sin(grid.h[0]) / grid.h[0] * np.cos(x)) ** 2


class TestRates:
    @pytest.mark.parametrize("kappa", [0.0, 0.7])
    def test_fixed_point(self, kappa):
        st = flat_state(phi=lambda x: np.full_like(x, 2.5))
        for rhs in (rhs_unnormalized, rhs_normalized):
            dg, dphi = rhs(st, kappa)
            assert np.all(dg == 0) and np.all(dphi == 0)
        nxt = step(st, FlowConfig(kappa=kappa))
        assert np.array_equal(nxt.g.comps, st.g.comps) and nxt.t > 0

    def test_flat_sine_map(self):
        st = flat_state(64, phi=np.sin)
        x = st.grid.coords()[0]
        dg, dphi = rhs_unnormalized(st, 1.0)
        assert np.allclose(dg[0], 2 * centered_cos2(st.grid, x), atol=1e-14)
        assert np.all(dg[1] == 0) and np.all(dg[2] == 0)
        assert np.max(np.abs(dphi + np.sin(x))) < 3e-3

    def test_average_r_and_s_min(self):
        st = flat_state(64, phi=np.sin)
        assert average_r(st, 1.0) == pytest.approx(-0.5, rel=5e-3)
        assert s_min(st, 1.0) == pytest.approx(-1.0, rel=5e-3)
        assert s_min(st, 1.0) <= average_r(st, 1.0)
        assert average_r(flat_state(), 0.3) == 0.0

    def test_ricci_flow_rate(self):
        st = conformal_state()
        ric, _ = ricci_and_scalar(st.g)
        dg, _ = rhs_unnormalized(st, 0.0)
        assert np.array_equal(dg, -2 * ric)

    def test_normalized_rate_preserves_volume_to_first_order(self):
        st = conformal_state()
        st = CoupledState(st.g, np.sin(st.grid.coords()[0]), 0.0)
        dg, _ = rhs_normalized(st, 0.5)
        g = st.g
        # d/dt sqrt(det g) = (1/2) sqrt(det g) tr(g^-1 dg)
        gi = g.inv
        tr = gi[0] * dg[0] + 2 * gi[1] * dg[1] + gi[2] * dg[2]
        assert abs(np.sum(0.5 * g.mass * tr)) < 1e-12 * volume(g)


class TestStepping:
    def test_stable_dt(self):
        st = flat_state(32)
        assert stable_dt(st, 0.25) == pytest.approx(0.25 * (2 * np.pi / 32) ** 2 / 4)

    def test_curvature_decays_under_ricci_flow(self):
        st = conformal_state(32)
        norms = []
        for s in evolve(st, FlowConfig(t_end=0.4, record_every=0.1)):
            norms.append(np.max(np.abs(ricci_and_scalar(s.g)[1])))
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_records_land_on_multiples(self):
        ts = [s.t for s in evolve(conformal_state(16), FlowConfig(t_end=0.1, record_every=0.025))]
        assert ts == [0.0, 0.025, 0.05, 0.075, 0.1]

    def test_euler_and_rk4_agree_to_first_order(self):
        st = conformal_state(16)
        errs = []
        for dt in (4e-3, 2e-3):
            a = step(st, FlowConfig(stepper="euler"), dt)
            b = step(st, FlowConfig(stepper="rk4"), dt)
            errs.append(np.max(np.abs(a.g.comps - b.g.comps)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)  # local error O(dt^2)

    def test_rk4_self_convergence(self):
        st = conformal_state(16)
        cfg = FlowConfig(stepper="rk4")

        def run(dt, n):
            s = st
            for _ in range(n):
                s = step(s, cfg, dt)
            return s.g.comps

        ref = run(0.0025, 40)
        e1 = np.max(np.abs(run(0.01, 10) - ref))
        e2 = np.max(np.abs(run(0.005, 20) - ref))
        assert e1 / e2 > 10

    def test_step_failure_reports_diagnostics(self):
        with pytest.raises(FlowStepError) as info:
            step(conformal_state(16, 0.5), FlowConfig(), dt=1e6)
        assert info.value.t == 0.0 and info.value.min_det > 0

    def test_unnormalized_volume_rate(self):
        st = conformal_state(32)
        st = CoupledState(st.g, np.sin(st.grid.coords()[0]), 0.0)
        cfg = FlowConfig(kappa=0.5)
        from pqflow.diffgeo import coupling_tensors

        target = -integrate(coupling_tensors(st, 0.5)[1], st.g)
        v0 = volume(st.g)
        d1 = (volume(step(st, cfg, 1e-3).g) - v0) / 1e-3
        d2 = (volume(step(st, cfg, 5e-4).g) - v0) / 5e-4
        assert (2 * d2 - d1) == pytest.approx(target, rel=0.02)

    def test_normalized_flow_conserves_volume(self):
        st = conformal_state(32)
        st = CoupledState(st.g, 0.5 * np.sin(st.grid.coords()[0]), 0.0)
        vols = [volume(s.g) for s in evolve(st, FlowConfig(kappa=0.5, normalized=True, t_end=0.2, record_every=0.05))]
        assert max(abs(v - vols[0]) for v in vols) <= 1e-3 * vols[0]

    def test_config_validation(self):
        for kw in (dict(kappa=-1), dict(t_end=0), dict(dt_safety=1.5), dict(stepper="leapfrog"), dict(record_every=0)):
            with pytest.raises(ParameterError):
                FlowConfig(**kw)


class TestComparisonAndEinstein:
    def test_y(self):
        assert comparison_bound_y(0.25, 2.0, 2) == pytest.approx(4.0)
        assert comparison_bound_y(3.0, 0.0, 2) == 0.0
        ys = [comparison_bound_y(t, -1.0, 2) for t in (0, 1, 2, 3)]
        assert ys[0] == -1.0 and all(b > a for a, b in zip(ys, ys[1:])) and ys[-1] < 0
        with pytest.raises(ParameterError):
            comparison_bound_y(0.6, 2.0, 2)

    def test_einstein_closed_form(self):
        ep = EinsteinParams(a=1.0, kappa=0.0, m=2, p=2.0)
        assert einstein_c(0.25, ep) == 0.5
        assert einstein_S(0.0, ep) == 2.0
        assert einstein_lambda_scaling(3.0, 0.25, ep) == pytest.approx(6.0)
        assert einstein_horizon(ep) == 0.5
        assert einstein_c(7.0, EinsteinParams(a=0.4, kappa=0.4)) == 1.0
        with pytest.raises(ParameterError):
            einstein_c(0.5, ep)

    def test_lambda_scaling_against_solver(self):
        from pqflow.pqeigen import EigenParams, first_eigenpair

        grid = Grid.torus(16)
        ep = EinsteinParams(a=1.0, m=2, p=4.0)
        par = EigenParams(4, 4, a=1)
        lam0 = first_eigenpair(MetricField.flat(grid), par).lam
        c = einstein_c(0.2, ep)
        lam = first_eigenpair(MetricField.flat(grid).scaled(c), par).lam
        assert lam == pytest.approx(einstein_lambda_scaling(lam0, 0.2, ep), rel=1e-2)
        assert math.isclose(lam * c**2, lam0, rel_tol=1e-6)
