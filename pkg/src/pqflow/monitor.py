"""Eigenvalue traces along the flow and checks of the monotonicity results.

The predicted rate ``G`` is evaluated with the same face quadrature that
defines the discrete energy, with the coupled curvature tensor averaged onto
faces. For the discrete eigenvalue this makes ``G`` the exact time
derivative along the discrete flow, so the comparison with finite
differences isolates time-stepping and solver error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .diffgeo import (
    CoupledState,
    MetricField,
    coupling_tensors,
    face_average,
    face_gradients,
    face_weights,
    generalized_eigenvalues,
    integrate,
    min_generalized_eigenvalue,
    outer,
    partials,
    quad_form,
    trace as tensor_trace,
    volume,
)
from .geomflow import FlowConfig, comparison_bound_y, evolve, s_min
from .pqeigen import EigenPair, EigenParams, _pow_abs, first_eigenpair

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "lambda", "S_min", "volume", "r", "cond_min", "Q", "G_formula",
               "dlambda_fd", "eig_iters", "eig_residual", "degraded")


class PinchingError(ValueError):
    """Two metrics are not (1+eps)-pinched against each other."""


@dataclass
class Tolerances:
    mono_rel: float = 1e-3
    int_rel: float = 1e-2
    curv_rel: float = 1e-3
    fd_rel: float = 0.05
    fd_floor: float = 0.01
    volume_drift: float = 1e-3
    hyp_slack: float = 1e-9
    branch_overlap: float = 0.9


@dataclass
class TraceRecord:
    t: float
    lam: float
    s_min: float
    volume: float
    r: float
    cond_min: float
    Q: float
    G_formula: float
    dlambda_fd: float = 0.0
    eig_iters: int = 0
    eig_residual: float = 0.0
    degraded: bool = False

    def row(self) -> tuple:
        return (self.t, self.lam, self.s_min, self.volume, self.r, self.cond_min, self.Q,
                self.G_formula, self.dlambda_fd, self.eig_iters, self.eig_residual,
                int(self.degraded))


@dataclass
class Verdict:
    name: str
    passed: bool
    margin: float
    location: str = ""
    informational: bool = False
    detail: str = ""

    @property
    def status(self) -> str:
        if self.informational:
            return "INFO"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        loc = f" at {self.location}" if self.location else ""
        det = f" ({self.detail})" if self.detail else ""
        return f"{self.status:4s} {self.name}: margin={self.margin:.3e}{loc}{det}"


@dataclass
class Trace:
    records: list[TraceRecord]
    m: int
    s_min0: float
    k: float
    normalized: bool = False
    kind: str = "flow"
    extra: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        idx = CSV_COLUMNS.index(name)
        return np.array([r.row()[idx] for r in self.records], dtype=float)


# --------------------------------------------------------------------------
# pointwise conditions


def condition_tensor(state: CoupledState, kappa: float, k: float):
    calS, S = coupling_tensors(state, kappa)
    return calS - (S / k) * state.g.comps


def condition_tensor_min(state: CoupledState, kappa: float, k: float) -> float:
    """Smallest generalized eigenvalue of ``calS - (S/k) g`` w.r.t. ``g``."""
    return min_generalized_eigenvalue(condition_tensor(state, kappa, k), state.g)[0]


def surface_hypothesis_checks(state: CoupledState, kappa: float, k: float):
    """The two alternative hypotheses of the surface monotonicity result.

    (1) ``Ric >= eps dphi (x) dphi`` with ``eps = 2 kappa (k-1)/(k-2)``;
    (2) ``|grad phi|^2 g >= k dphi (x) dphi`` as quadratic forms.
    Both are returned as informational verdicts carrying the pointwise margin.
    """
    g = state.g
    ric, _ = coupling_tensors(state, 0.0)
    dd = outer(partials(state.phi, state.grid))
    if kappa == 0:
        m1, loc1 = min_generalized_eigenvalue(ric, g)
        detail1 = "eps = 0"
    elif k > 2:
        eps = 2.0 * kappa * (k - 1.0) / (k - 2.0)
        m1, loc1 = min_generalized_eigenvalue(ric - eps * dd, g)
        detail1 = f"eps = {eps:.6g}"
    elif np.max(np.abs(dd)) == 0:
        m1, loc1 = min_generalized_eigenvalue(ric, g)
        detail1 = "k <= 2 forces grad phi = 0"
    else:
        m1, loc1, detail1 = -math.inf, (), "k <= 2 with kappa > 0 needs grad phi = 0"
    v1 = Verdict("surface condition (1) Ric >= eps dphi dphi", m1 >= 0, m1, str(loc1),
                 informational=True, detail=detail1)
    t2 = tensor_trace(dd, g) * g.comps - k * dd
    m2, loc2 = min_generalized_eigenvalue(t2, g)
    v2 = Verdict("surface condition (2) |grad phi|^2 g >= k dphi dphi", m2 >= 0, m2, str(loc2),
                 informational=True)
    return v1, v2


# --------------------------------------------------------------------------
# variation formulas


def _face_terms(f: np.ndarray, g: MetricField, T: np.ndarray, p: float, delta: float):
    """Face quadratures of ``T(grad f, grad f)|grad f|^(p-2)``, ``|grad f|^p tr T`` and ``|grad f|^p``."""
    grid = g.grid
    fm = g.faces
    Tf = face_average(T, grid)
    G = face_gradients(f, grid)
    w = face_weights(grid)
    fams = [(G, fm.gi, fm.sg, Tf)] if grid.dim == 1 else [(G[d], fm.gi[d], fm.sg[d], Tf[d]) for d in (0, 1)]
    i_t = i_s = i_p = 0.0
    for Gd, gi, sg, Td in fams:
        sq = quad_form(gi, Gd) + delta * delta
        W = sq ** (0.5 * p - 1.0) if p != 2 else np.ones_like(sq)
        if grid.dim == 1:
            up = gi * Gd
            trT = gi[0] * Td[0]
        else:
            up = np.stack([gi[0] * Gd[0] + gi[1] * Gd[1], gi[1] * Gd[0] + gi[2] * Gd[1]])
            trT = gi[0] * Td[0] + 2.0 * gi[1] * Td[1] + gi[2] * Td[2]
        dens = sq * W - delta**p
        i_t += w * float(np.sum(W * quad_form(Td, up) * sg))
        i_s += w * float(np.sum(dens * trT * sg))
        i_p += w * float(np.sum(dens * sg))
    return i_t, i_s, i_p


def variation_from_tensors(g: MetricField, pair: EigenPair, calS, S, params: EigenParams) -> float:
    """Right-hand side of the first-variation formula for given ``calS``, ``S``."""
    a, b = params.a, params.b
    u, v, lam = pair.u, pair.v, pair.lam
    i_b = integrate(S * _pow_abs(u, a) * _pow_abs(v, b) * u * v, g)
    tu, su, _ = _face_terms(u, g, calS, params.p, params.delta)
    tv, sv, _ = _face_terms(v, g, calS, params.q, params.delta)
    return (lam * i_b + (a + 1.0) * tu - (a + 1.0) / params.p * su
            + (b + 1.0) * tv - (b + 1.0) / params.q * sv)


def variation_formula_G(state: CoupledState, pair: EigenPair, kappa: float, params: EigenParams) -> float:
    """Predicted ``d lambda / dt`` under the unnormalized flow."""
    calS, S = coupling_tensors(state, kappa)
    return variation_from_tensors(state.g, pair, calS, S, params)


def variation_formula_G_normalized(state: CoupledState, pair: EigenPair, kappa: float,
                                   params: EigenParams) -> float:
    """Predicted ``d lambda / dt`` under the volume-normalized flow."""
    calS, S = coupling_tensors(state, kappa)
    g = state.g
    r = integrate(S, g) / volume(g)
    m = state.grid.dim
    base = variation_from_tensors(g, pair, calS, S, params)
    _, _, pu = _face_terms(pair.u, g, calS, params.p, params.delta)
    _, _, pv = _face_terms(pair.v, g, calS, params.q, params.delta)
    return base - (params.a + 1.0) / m * r * pu - (params.b + 1.0) / m * r * pv


def monotone_quantity(t: float, lam: float, s_min0: float, m: int) -> float:
    """``lam (1 - (2/m) S_min(0) t)^(m/2)``."""
    base = 1.0 - (2.0 / m) * s_min0 * t
    return lam * base ** (m / 2.0) if base > 0 else math.nan


# --------------------------------------------------------------------------
# trace construction


def _overlap(u0, u1, g: MetricField) -> float:
    num = abs(float(np.sum(g.mass * u0 * u1)))
    den = math.sqrt(float(np.sum(g.mass * u0 * u0)) * float(np.sum(g.mass * u1 * u1)))
    return num / den if den > 0 else 0.0


def finite_difference_rates(t: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Central differences inside, second-order one-sided at the ends."""
    n = len(t)
    out = np.zeros(n)
    if n == 2:
        out[:] = (lam[1] - lam[0]) / (t[1] - t[0])
    elif n >= 3:
        out[1:-1] = (lam[2:] - lam[:-2]) / (t[2:] - t[:-2])
        h0, h1 = t[1] - t[0], t[-1] - t[-2]
        out[0] = (-3 * lam[0] + 4 * lam[1] - lam[2]) / (2 * h0)
        out[-1] = (3 * lam[-1] - 4 * lam[-2] + lam[-3]) / (2 * h1)
    return out


def run_monitor(state0: CoupledState, config: FlowConfig, params: EigenParams,
                tol: Tolerances | None = None, warm=None, on_record=None) -> Trace:
    """Evolve ``state0`` and solve the eigenproblem at every record time."""
    tol = tol or Tolerances()
    kappa = config.kappa
    m = state0.grid.dim
    s0 = s_min(state0, kappa)
    records: list[TraceRecord] = []
    flips: list[int] = []
    prev = None
    for state in evolve(state0, config):
        pair = first_eigenpair(state.g, params, warm)
        warm = (pair.u, pair.v)
        if prev is not None and _overlap(prev, pair.u, state.g) < tol.branch_overlap:
            flips.append(len(records))
        prev = pair.u
        calS, S = coupling_tensors(state, kappa)
        vol = volume(state.g)
        cond = min_generalized_eigenvalue(calS - (S / params.k) * state.g.comps, state.g)[0]
        if config.normalized:
            G = variation_formula_G_normalized(state, pair, kappa, params)
        else:
            G = variation_formula_G(state, pair, kappa, params)
        rec = TraceRecord(
            t=state.t, lam=pair.lam, s_min=float(S.min()), volume=vol,
            r=integrate(S, state.g) / vol, cond_min=cond,
            Q=monotone_quantity(state.t, pair.lam, s0, m), G_formula=G,
            eig_iters=pair.iterations, eig_residual=pair.kkt_relative,
            degraded=not pair.converged,
        )
        records.append(rec)
        log.info("t=%.4f lambda=%.10f G=%.6g iters=%d", rec.t, rec.lam, G, pair.iterations)
        if on_record is not None:
            on_record(state, pair, rec)
    for i in flips:
        records[i].degraded = True
        records[i - 1].degraded = True
    t = np.array([r.t for r in records])
    fd = finite_difference_rates(t, np.array([r.lam for r in records]))
    for r, d in zip(records, fd):
        r.dlambda_fd = float(d)
    return Trace(records, m, s0, params.k, normalized=config.normalized)


def einstein_trace(ep, lam0: float, t_end: float, record_every: float, k: float,
                   volume0: float = 1.0) -> Trace:
    """Closed-form trace of the homothetic Einstein family (``p = q``)."""
    from .geomflow import einstein_S, einstein_c, einstein_lambda_scaling

    n = int(math.floor(t_end / record_every + 1e-9))
    s0 = einstein_S(0.0, ep)
    records = []
    for i in range(n + 1):
        t = i * record_every
        c = einstein_c(t, ep)
        lam = einstein_lambda_scaling(lam0, t, ep)
        S = einstein_S(t, ep)
        records.append(TraceRecord(
            t=t, lam=lam, s_min=S, volume=volume0 * c ** (ep.m / 2.0), r=S,
            cond_min=(ep.a - ep.kappa) * (1.0 - ep.m / k) / c,
            Q=monotone_quantity(t, lam, s0, ep.m),
            G_formula=ep.p * (ep.a - ep.kappa) * lam / c,
        ))
    fd = finite_difference_rates(np.array([r.t for r in records]), np.array([r.lam for r in records]))
    for r, d in zip(records, fd):
        r.dlambda_fd = float(d)
    return Trace(records, ep.m, s0, k, kind="einstein_analytic")


# --------------------------------------------------------------------------
# verdicts


def _usable(trace: Trace) -> list[int]:
    """Interior records whose central-difference stencil avoids degraded records."""
    recs = trace.records
    return [i for i in range(1, len(recs) - 1)
            if not (recs[i - 1].degraded or recs[i].degraded or recs[i + 1].degraded)]


def formula_vs_fd_check(trace: Trace, tol: Tolerances | None = None) -> Verdict:
    tol = tol or Tolerances()
    name = "variation formula (normalized) vs finite differences" if trace.normalized \
        else "variation formula vs finite differences"
    idx = _usable(trace)
    if not idx:
        return Verdict(name, True, math.nan, informational=True, detail="fewer than 3 usable records")
    worst, where = math.inf, ""
    for i in idx:
        r = trace.records[i]
        allowed = tol.fd_rel * (abs(r.dlambda_fd) + tol.fd_floor * r.lam)
        margin = allowed - abs(r.G_formula - r.dlambda_fd)
        if margin < worst:
            worst, where = margin, f"t={r.t:.6g}"
    return Verdict(name, worst >= 0, worst, where, detail=f"{len(idx)} interior records")


def integrated_lower_bound_check(trace: Trace, tol: Tolerances | None = None) -> Verdict:
    """``lam(t1) >= lam(t0) + int_{t0}^{t1} G`` over all recorded pairs (trapezoid rule)."""
    tol = tol or Tolerances()
    recs = [r for r in trace.records if not r.degraded]
    if len(recs) < 2:
        return Verdict("integrated lower bound", True, math.nan, informational=True,
                       detail="fewer than 2 usable records")
    t = np.array([r.t for r in recs])
    lam = np.array([r.lam for r in recs])
    G = np.array([r.G_formula for r in recs])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (G[1:] + G[:-1]) * np.diff(t))])
    worst, where = math.inf, ""
    for i in range(len(recs)):
        for j in range(i + 1, len(recs)):
            slack = tol.int_rel * (1.0 + max(abs(lam[i]), abs(lam[j])))
            margin = lam[j] - lam[i] - (cum[j] - cum[i]) + slack
            if margin < worst:
                worst, where = margin, f"t0={t[i]:.6g}, t1={t[j]:.6g}"
    return Verdict("integrated lower bound", worst >= 0, float(worst), where)


def curvature_bound_check(trace: Trace, tol: Tolerances | None = None) -> Verdict:
    """``S_min(t) >= y(t) - tol (1 + |y|)`` with ``y`` the comparison ODE solution."""
    tol = tol or Tolerances()
    worst, where = math.inf, ""
    for r in trace.records:
        if trace.s_min0 > 0 and r.t >= trace.m / (2 * trace.s_min0):
            break
        y = comparison_bound_y(r.t, trace.s_min0, trace.m)
        margin = r.s_min - y + tol.curv_rel * (1.0 + abs(y))
        if margin < worst:
            worst, where = margin, f"t={r.t:.6g}"
    return Verdict("curvature comparison S_min >= y(t)", worst >= 0, float(worst), where,
                   informational=trace.normalized,
                   detail="normalized flow: bound not implied" if trace.normalized else "")


def hypotheses(trace: Trace, tol: Tolerances | None = None) -> tuple[bool, bool]:
    """(weak, strict) hypothesis status: condition tensor and S_min(0) signs."""
    tol = tol or Tolerances()
    conds = [r.cond_min for r in trace.records]
    weak = all(c >= -tol.hyp_slack for c in conds) and trace.s_min0 >= 0
    strict = all(c > 0 for c in conds) and trace.s_min0 > 0
    return weak, strict


def sequence_monotone(t, values, slack: float) -> tuple[float, float]:
    """Worst step ``values[i+1] - values[i] + slack`` and the time it ends at."""
    worst, where = math.inf, math.nan
    for i in range(len(values) - 1):
        m = values[i + 1] - values[i] + slack
        if m < worst:
            worst, where = m, t[i + 1]
    return worst, where


def monotonicity_verdict(trace: Trace, which: str = "lambda", tol: Tolerances | None = None,
                         gate: bool = True) -> Verdict:
    """Nondecreasing check of ``lambda`` or ``Q`` (gated by the hypotheses)."""
    tol = tol or Tolerances()
    recs = [r for r in trace.records if not r.degraded]
    vals = np.array([r.lam if which == "lambda" else r.Q for r in recs])
    t = [r.t for r in recs]
    weak, strict = hypotheses(trace, tol)
    asserted = (weak if which == "lambda" else strict) or not gate
    name = f"{which} nondecreasing"
    if len(vals) < 2 or not np.all(np.isfinite(vals)):
        return Verdict(name, False, math.nan, informational=True, detail="no usable values")
    slack = tol.mono_rel * (1.0 + float(np.max(np.abs(vals))))
    worst, where = sequence_monotone(t, vals, slack)
    detail = "" if asserted else "hypothesis-not-met, informational"
    return Verdict(name, worst >= 0, float(worst), f"t={where:.6g}", informational=not asserted,
                   detail=detail)


def volume_drift_check(trace: Trace, tol: Tolerances | None = None) -> Verdict:
    tol = tol or Tolerances()
    v = np.array([r.volume for r in trace.records])
    drift = float(np.max(np.abs(v - v[0])) / v[0])
    return Verdict("volume conservation", drift <= tol.volume_drift, tol.volume_drift - drift,
                   informational=not trace.normalized,
                   detail=f"relative drift {drift:.3e}")


def trace_integrity_check(trace: Trace) -> Verdict:
    t = np.array([r.t for r in trace.records])
    finite = all(np.all(np.isfinite(np.array(r.row(), dtype=float))) for r in trace.records)
    ordered = bool(np.all(np.diff(t) > 0))
    n_deg = sum(r.degraded for r in trace.records)
    ok = finite and ordered
    return Verdict("trace integrity", ok, 0.0 if ok else -1.0,
                   detail=f"{len(t)} records, {n_deg} degraded")


def standard_verdicts(trace: Trace, tol: Tolerances | None = None) -> list[Verdict]:
    tol = tol or Tolerances()
    return [
        trace_integrity_check(trace),
        formula_vs_fd_check(trace, tol),
        integrated_lower_bound_check(trace, tol),
        curvature_bound_check(trace, tol),
        monotonicity_verdict(trace, "lambda", tol),
        monotonicity_verdict(trace, "Q", tol),
        volume_drift_check(trace, tol),
    ]


# --------------------------------------------------------------------------
# metric comparison


def pinching_range(g1: MetricField, g2: MetricField):
    """Pointwise generalized eigenvalues of ``g2`` w.r.t. ``g1``: (min, argmin, max, argmax)."""
    ev = generalized_eigenvalues(g2.comps, g1.comps)
    lo, hi = ev[0], ev[-1]
    i_lo = np.unravel_index(int(np.argmin(lo)), lo.shape)
    i_hi = np.unravel_index(int(np.argmax(hi)), hi.shape)
    return float(lo[i_lo]), i_lo, float(hi[i_hi]), i_hi


def lemma_continuity_check(g1: MetricField, g2: MetricField, eps: float, params: EigenParams,
                           pairs: tuple[EigenPair, EigenPair] | None = None) -> Verdict:
    """``lam(g2) - lam(g1) <= ((1+eps)^((p+m)/2) - (1+eps)^(-m/2)) lam(g1)``.

    The pinching ``(1+eps)^-1 g1 <= g2 <= (1+eps) g1`` is checked pointwise
    (closed, to 1e-12 relative) and ``p`` is the larger exponent.
    """
    lo, i_lo, hi, i_hi = pinching_range(g1, g2)
    rel = 1e-12
    if lo < (1 + eps) ** -1 * (1 - rel):
        raise PinchingError(f"g2 < (1+eps)^-1 g1 at node {tuple(map(int, i_lo))} (ratio {lo:.6g})")
    if hi > (1 + eps) * (1 + rel):
        raise PinchingError(f"g2 > (1+eps) g1 at node {tuple(map(int, i_hi))} (ratio {hi:.6g})")
    if pairs is None:
        pairs = (first_eigenpair(g1, params), first_eigenpair(g2, params))
    l1, l2 = pairs[0].lam, pairs[1].lam
    m = g1.dim
    p = max(params.p, params.q)
    bound = ((1 + eps) ** ((p + m) / 2.0) - (1 + eps) ** (-m / 2.0)) * l1
    margin = bound + 10.0 * params.tol_kkt - (l2 - l1)
    return Verdict("metric comparison bound", margin >= 0, float(margin),
                   detail=f"lam1={l1:.10g}, lam2={l2:.10g}, bound={bound:.6g}")
