import math

import numpy as np
import pytest

from pqflow.diffgeo import CoupledState, Grid, MetricField
from pqflow.geomflow import EinsteinParams, FlowConfig, rates
from pqflow.monitor import (
    PinchingError,
    Trace,
    TraceRecord,
    condition_tensor_min,
    einstein_trace,
    finite_difference_rates,
    integrated_lower_bound_check,
    lemma_continuity_check,
    monotone_quantity,
    monotonicity_verdict,
    run_monitor,
    standard_verdicts,
    surface_hypothesis_checks,
    variation_formula_G,
    variation_formula_G_normalized,
    variation_from_tensors,
)
from pqflow.pqeigen import EigenParams, first_eigenpair


def synthetic_trace(lams, cond=0.0, s_min0=0.0, G=None):
    recs = []
    for i, lam in enumerate(lams):
        recs.append(TraceRecord(t=0.1 * i, lam=lam, s_min=s_min0, volume=1.0, r=0.0, cond_min=cond,
                                Q=monotone_quantity(0.1 * i, lam, s_min0, 2),
                                G_formula=0.0 if G is None else G[i]))
    return Trace(recs, 2, s_min0, 2.0)


def curved_state(n=16, phi_amp=0.0):
    grid = Grid.torus(n)
    x, y = grid.coords()
    g = MetricField.conformal(grid, 0.2 * np.cos(x) + 0.1 * np.sin(y))
    return CoupledState(g, phi_amp * np.sin(x + y), 0.0)


class TestMonotoneQuantity:
    def test_examples(self):
        assert monotone_quantity(0.7, 3.0, 0.0, 2) == 3.0
        assert monotone_quantity(0.5, 3.0, 1.0, 2) == 1.5
        assert monotone_quantity(0.2, 3.0, 1.0, 4) == pytest.approx(3.0 * 0.9**2)

    def test_einstein_boundary_case(self):
        ep = EinsteinParams(a=1.0, kappa=0.0, m=2, p=2.0)
        tr = einstein_trace(ep, 2.0, 0.4, 0.05, 2.0)
        q = np.array([r.Q for r in tr.records])
        assert np.max(np.abs(q - 2.0)) <= 1e-12 * 2.0


class TestVerdicts:
    def test_constant_trace_passes(self):
        v = monotonicity_verdict(synthetic_trace([1.0] * 5))
        assert v.status == "PASS" and v.margin > 0

    def test_decreasing_trace_fails_when_asserted(self):
        v = monotonicity_verdict(synthetic_trace([1.0, 0.9, 0.8]))
        assert v.status == "FAIL" and v.margin < 0 and v.location == "t=0.1"

    def test_gating_makes_it_informational(self):
        v = monotonicity_verdict(synthetic_trace([1.0, 0.9, 0.8], cond=-0.1))
        assert v.status == "INFO" and "hypothesis-not-met" in v.detail
        v = monotonicity_verdict(synthetic_trace([1.0, 0.9], s_min0=-0.5))
        assert v.status == "INFO"

    def test_q_needs_strict_hypotheses(self):
        assert monotonicity_verdict(synthetic_trace([1.0] * 3), "Q").status == "INFO"
        # Q = lam (1 - 0.1 t) is constant for lam = 1/(1 - 0.1 t) and decreasing for constant lam
        lams = [1 / (1 - 0.1 * 0.1 * i) for i in range(3)]
        assert monotonicity_verdict(synthetic_trace(lams, cond=0.1, s_min0=0.1), "Q").status == "PASS"
        assert monotonicity_verdict(synthetic_trace([1.0] * 3, cond=0.1, s_min0=0.1), "Q").status == "FAIL"

    def test_integrated_bound_stationary(self):
        v = integrated_lower_bound_check(synthetic_trace([2.0] * 4))
        assert v.passed and v.margin == pytest.approx(1e-2 * 3.0)

    def test_integrated_bound_detects_overprediction(self):
        v = integrated_lower_bound_check(synthetic_trace([1.0, 1.0, 1.0], G=[1.0, 1.0, 1.0]))
        assert not v.passed

    def test_fd_rates_exact_for_quadratics(self):
        t = np.linspace(0, 1, 7)
        lam = 1 + 2 * t + 3 * t**2
        assert np.allclose(finite_difference_rates(t, lam), 2 + 6 * t, atol=1e-12)


class TestVariationFormula:
    def test_einstein_tensor_substitution(self):
        # calS = a g, S = m a with P_u = P_v = lam gives G = p a lam (p = q)
        g = curved_state().g
        par = EigenParams(4, 4, a=1)
        pair = first_eigenpair(g, par, )
        a = 0.7
        G = variation_from_tensors(g, pair, a * g.comps, np.full(g.grid.shape, 2 * a), par)
        assert G == pytest.approx(4 * a * pair.lam, rel=1e-9)

    @pytest.mark.parametrize("par,kappa,phi_amp,normalized", [
        (EigenParams(2, 2, tol_kkt=1e-8), 0.0, 0.0, False),
        (EigenParams(4, 4, a=1, tol_kkt=1e-8), 0.5, 0.3, False),
        (EigenParams(3, 2, a=0.5, tol_kkt=1e-8), 0.5, 0.3, True),
    ])
    def test_formula_is_derivative_of_discrete_eigenvalue(self, par, kappa, phi_amp, normalized):
        st = curved_state(16, phi_amp)
        cfg = FlowConfig(kappa=kappa, normalized=normalized)
        dg, _ = rates(st, cfg)
        pair = first_eigenpair(st.g, par)
        eps = 1e-5
        lp = first_eigenpair(st.g + eps * dg, par, warm_start=(pair.u, pair.v)).lam
        lm = first_eigenpair(st.g + (-eps) * dg, par, warm_start=(pair.u, pair.v)).lam
        fd = (lp - lm) / (2 * eps)
        f = variation_formula_G_normalized if normalized else variation_formula_G
        assert f(st, pair, kappa, par) == pytest.approx(fd, rel=1e-4, abs=1e-6)


class TestLemma:
    def test_identical_metrics(self):
        g = curved_state().g
        v = lemma_continuity_check(g, g, 0.1, EigenParams(2, 2))
        assert v.passed

    @pytest.mark.parametrize("p", [2.0, 4.0])
    def test_scaled_metric(self, p):
        g = curved_state().g
        v = lemma_continuity_check(g, g.scaled(1.1), 0.1, EigenParams(p, p, a=p / 2 - 1))
        assert v.passed and v.margin > 0.01

    def test_pinching_violation_names_node(self):
        g = curved_state().g
        comps = np.array(g.comps)
        comps[:, 5, 7] *= 1.5
        with pytest.raises(PinchingError, match=r"\(5, 7\)"):
            lemma_continuity_check(g, MetricField(g.grid, comps), 0.1, EigenParams(2, 2))

    def test_random_conformal_perturbation(self):
        g = curved_state().g
        x, y = g.grid.coords()
        rng = np.random.default_rng(11)
        dw = sum(rng.normal() * np.cos(kx * x + ky * y + rng.uniform(0, 6.3)) for kx, ky in ((1, 0), (0, 1), (1, 1)))
        dw *= 0.5 * math.log(1.1) / np.max(np.abs(dw))
        g2 = MetricField(g.grid, np.exp(2 * dw) * g.comps)
        assert lemma_continuity_check(g, g2, 0.1, EigenParams(4, 4, a=1)).passed


class TestHypotheses:
    def test_constant_map(self):
        st = CoupledState(MetricField.flat(Grid.torus(16)), np.full((16, 16), 1.0), 0.0)
        for k in (2.0, 3.0):
            v1, v2 = surface_hypothesis_checks(st, 0.5, k)
            assert v1.passed and v2.passed and v1.status == "INFO"

    def test_rank_one_gradient_fails_condition_two(self):
        grid = Grid.torus(16)
        st = CoupledState(MetricField.flat(grid), 0.3 * np.sin(grid.coords()[0]), 0.0)
        _, v2 = surface_hypothesis_checks(st, 0.5, 3.0)
        assert not v2.passed and v2.margin < 0

    def test_condition_one_margin(self):
        st = curved_state(16, 0.05)
        v1, _ = surface_hypothesis_checks(st, 0.5, 4.0)
        from pqflow.diffgeo import min_generalized_eigenvalue, outer, partials, ricci_and_scalar

        ric, _ = ricci_and_scalar(st.g)
        eps = 2 * 0.5 * 3 / 2
        ref = min_generalized_eigenvalue(ric - eps * outer(partials(st.phi, st.grid)), st.g)[0]
        assert v1.margin == ref

    def test_condition_tensor_vanishes_on_surfaces_for_k2(self):
        assert abs(condition_tensor_min(curved_state(), 0.0, 2.0)) < 1e-12


class TestRunMonitor:
    def test_flat_fixed_point(self):
        grid = Grid.torus(16)
        st = CoupledState(MetricField.flat(grid), np.full(grid.shape, 0.3), 0.0)
        tr = run_monitor(st, FlowConfig(kappa=0.5, t_end=0.1, record_every=0.025), EigenParams(2, 2))
        lam = tr.column("lambda")
        assert np.max(np.abs(lam - lam[0])) < 1e-12
        verdicts = standard_verdicts(tr)
        assert all(v.status in ("PASS", "INFO") for v in verdicts)
        assert {v.name: v.status for v in verdicts}["lambda nondecreasing"] == "PASS"

    def test_curved_run_records(self):
        tr = run_monitor(curved_state(16), FlowConfig(t_end=0.1, record_every=0.025), EigenParams(2, 2))
        assert [r.t for r in tr.records] == [0.0, 0.025, 0.05, 0.075, 0.1]
        assert not any(r.degraded for r in tr.records)
        vs = {v.name: v for v in standard_verdicts(tr)}
        assert vs["variation formula vs finite differences"].passed
        assert vs["lambda nondecreasing"].status == "INFO"
