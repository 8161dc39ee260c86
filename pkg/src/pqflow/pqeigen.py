"""First eigenpair of the coupled (p,q)-Laplacian system.

The pair solves ``Delta_p u = -lam |u|^a |v|^b v`` and
``Delta_q v = -lam |u|^a |v|^b u`` on a closed grid manifold; ``lam`` is the
infimum of

    A(u, v) = (a+1)/p int |grad u|^p + (b+1)/q int |grad v|^q

over ``B(u, v) = int |u|^a |v|^b u v = 1`` and the two zero-mean constraints
``int |u|^a |v|^b v = int |u|^a |v|^b u = 0``.

Because ``A`` is p-homogeneous in ``u`` and q-homogeneous in ``v`` the
rescaling ``(u, v) -> (s u, t v)`` that minimizes ``A`` on ``B = 1`` has a
closed form, and the reduced objective is the scale-free quotient

    J(u, v) = P_u^theta P_v^(1-theta) / B,   P_u = int |grad u|^p,
    theta = (a+1)/p,

whose minimum over the constraint set is ``lam``. The solver minimizes
``log J`` by preconditioned projected descent: steps follow an L-BFGS
direction built on an FFT Sobolev preconditioner, the constraints are
restored after every trial step by shifting ``u`` and ``v`` by constants (a
2x2 Newton solve; constants carry no energy), and an Armijo backtracking
line search accepts the step. At a feasible point the gradient of ``log J``
is orthogonal to constants, so no multiplier correction is needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .diffgeo import CoupledState, MetricField, ParameterError, dirichlet_energy

log = logging.getLogger(__name__)

PQ2_TOL = 1e-12
STALL_WINDOW = 100  # iterations without relative progress before giving up


class EigenSolverError(RuntimeError):
    """Eigensolver failed (non-finite values or exhausted restarts)."""


@dataclass(frozen=True)
class EigenParams:
    """Exponents and solver controls.

    ``b`` is derived from ``(p, q, a)`` so that ``(a+1)/p + (b+1)/q = 1``;
    passing ``b`` explicitly only validates it.
    """

    p: float
    q: float
    a: float = 0.0
    b: float | None = None
    delta: float = 1e-8
    tol_kkt: float = 1e-6
    max_iters: int = 50000
    init: str = "mixed"
    seed: int = 0
    memory: int = 10

    def __post_init__(self):
        if not (self.p > 1 and self.q > 1):
            raise ParameterError(f"need p, q > 1, got p={self.p}, q={self.q}")
        if self.a < 0:
            raise ParameterError(f"need a >= 0, got {self.a}")
        b = self.q * (1.0 - (self.a + 1.0) / self.p) - 1.0
        if self.b is not None:
            if abs((self.a + 1) / self.p + (self.b + 1) / self.q - 1.0) > PQ2_TOL:
                raise ParameterError(
                    f"(a+1)/p + (b+1)/q = 1 violated for p={self.p}, q={self.q}, "
                    f"a={self.a}, b={self.b}"
                )
            b = float(self.b)
        if b < -PQ2_TOL:
            raise ParameterError(f"derived b = {b:.6g} is negative for p={self.p}, q={self.q}, a={self.a}")
        object.__setattr__(self, "b", max(b, 0.0))
        if self.delta < 0:
            raise ParameterError("delta must be nonnegative")
        if self.init not in ("mixed", "sine", "random"):
            raise ParameterError(f"unknown init mode {self.init!r}")

    @property
    def theta(self) -> float:
        return (self.a + 1.0) / self.p

    @property
    def k(self) -> float:
        return min(self.p, self.q)


@dataclass
class EigenPair:
    lam: float
    u: np.ndarray
    v: np.ndarray
    kkt_residual: float
    kkt_relative: float
    constraint_residuals: tuple[float, float, float]
    iterations: int
    converged: bool
    restarts: int = 0
    history: list[float] = field(default_factory=list, repr=False)


# --------------------------------------------------------------------------
# functionals


def _pow_abs(x: np.ndarray, e: float) -> np.ndarray:
    if e == 0:
        return np.ones_like(x)
    return np.abs(x) ** e


def _dpow_abs(x: np.ndarray, e: float) -> np.ndarray:
    """Derivative of ``|x|^e``; zero where ``x == 0``."""
    if e == 0:
        return np.zeros_like(x)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = e * np.abs(x[nz]) ** (e - 1.0) * np.sign(x[nz])
    return out


def gradient_power_integral(f: np.ndarray, g: MetricField, p: float, delta: float = 0.0) -> float:
    """Discrete ``int |grad f|^p dmu`` (face quadrature)."""
    e, _ = dirichlet_energy(f, g, p, delta)
    return p * e


def functional_A(u, v, g: MetricField, params: EigenParams) -> float:
    return (params.theta * gradient_power_integral(u, g, params.p, params.delta)
            + (1.0 - params.theta) * gradient_power_integral(v, g, params.q, params.delta))


def functional_B(u, v, g: MetricField, params: EigenParams) -> float:
    return float(np.sum(g.mass * _pow_abs(u, params.a) * _pow_abs(v, params.b) * u * v))


def zero_mean_constraints(u, v, g: MetricField, params: EigenParams) -> tuple[float, float]:
    w = g.mass * _pow_abs(u, params.a) * _pow_abs(v, params.b)
    return float(np.sum(w * v)), float(np.sum(w * u))


def residual_fields(lam, u, v, g: MetricField, params: EigenParams):
    """Pointwise residuals of both equations and their right-hand sides."""
    _, gu = dirichlet_energy(u, g, params.p, params.delta)
    _, gv = dirichlet_energy(v, g, params.q, params.delta)
    w = _pow_abs(u, params.a) * _pow_abs(v, params.b)
    ru, rv = -gu / g.mass + lam * w * v, -gv / g.mass + lam * w * u
    return ru, rv, w * v, w * u


def kkt_residual(lam: float, u, v, g: MetricField, params: EigenParams) -> float:
    """max of the L2(dmu) norms of ``Delta_p u + lam |u|^a|v|^b v`` and its twin."""
    ru, rv, _, _ = residual_fields(lam, u, v, g, params)
    return max(_l2(ru, g), _l2(rv, g))


def _l2(f, g: MetricField) -> float:
    return float(np.sqrt(np.sum(g.mass * f * f)))


# --------------------------------------------------------------------------
# solver


class _Problem:
    def __init__(self, g: MetricField, params: EigenParams):
        self.g = g
        self.pr = params
        self.m = g.mass
        grid = g.grid
        sym = 0.0
        ks = []
        for d, (n, h) in enumerate(zip(grid.shape, grid.h)):
            k = np.fft.fftfreq(n) if d < grid.dim - 1 else np.fft.rfftfreq(n)
            ks.append(4.0 * np.sin(np.pi * k) ** 2 / h**2)
        sym = ks[0] if grid.dim == 1 else ks[0][:, None] + ks[1][None, :]
        self.symbol = sym + min((2 * np.pi / L) ** 2 for L in grid.lengths)
        self.shape = grid.shape

    def precondition(self, r: np.ndarray) -> np.ndarray:
        out = np.empty_like(r)
        for blk in range(2):
            fr = np.fft.rfftn(r[blk])
            out[blk] = np.fft.irfftn(fr / self.symbol, s=self.shape, axes=tuple(range(len(self.shape))))
        return out

    def project(self, u, v):
        """Shift ``u``, ``v`` by constants so both zero-mean constraints hold."""
        a, b, m = self.pr.a, self.pr.b, self.m
        cu = cv = 0.0
        for _ in range(40):
            uu, vv = u + cu, v + cv
            pa, pb = _pow_abs(uu, a), _pow_abs(vv, b)
            wm = m * pa * pb
            Cu, Cv = float(np.sum(wm * vv)), float(np.sum(wm * uu))
            scale = float(np.sum(wm * (np.abs(uu) + np.abs(vv))))
            if not np.isfinite(scale) or scale <= 0:
                return None
            if max(abs(Cu), abs(Cv)) <= 1e-14 * scale:
                return uu, vv
            J11 = float(np.sum(m * (_dpow_abs(uu, a) * pb) * vv))
            J22 = float(np.sum(m * (pa * _dpow_abs(vv, b)) * uu))
            W = float(np.sum(wm))
            J12, J21 = (b + 1.0) * W, (a + 1.0) * W
            det = J11 * J22 - J12 * J21
            if det == 0 or not np.isfinite(det):
                return None
            cu -= (J22 * Cu - J12 * Cv) / det
            cv -= (J11 * Cv - J21 * Cu) / det
        return None

    def evaluate(self, z):
        """``log J``, its gradient and the pieces needed downstream."""
        pr = self.pr
        u, v = z
        Eu, gu = dirichlet_energy(u, self.g, pr.p, pr.delta)
        Ev, gv = dirichlet_energy(v, self.g, pr.q, pr.delta)
        Pu, Pv = pr.p * Eu, pr.q * Ev
        pa, pb = _pow_abs(u, pr.a), _pow_abs(v, pr.b)
        wm = self.m * pa * pb
        B = float(np.sum(wm * u * v))
        if not (B > 0 and Pu > 0 and Pv > 0):
            return np.inf, None, None
        th = pr.theta
        F = th * np.log(Pu) + (1.0 - th) * np.log(Pv) - np.log(B)
        grad = np.empty_like(z)
        grad[0] = th * pr.p * gu / Pu - (pr.a + 1.0) * wm * v / B
        grad[1] = (1.0 - th) * pr.q * gv / Pv - (pr.b + 1.0) * wm * u / B
        aux = dict(Pu=Pu, Pv=Pv, B=B, gu=gu, gv=gv, pa=pa, pb=pb)
        return F, grad, aux

    def kkt(self, z, F, aux):
        """Absolute and relative KKT residuals at the normalized pair."""
        pr, m = self.pr, self.m
        lam = float(np.exp(F))
        s = (lam / aux["Pu"]) ** (1.0 / pr.p)
        t = (lam / aux["Pv"]) ** (1.0 / pr.q)
        w = s**pr.a * t**pr.b * aux["pa"] * aux["pb"]
        rhs_u, rhs_v = w * t * z[1], w * s * z[0]
        ru = -s ** (pr.p - 1.0) * aux["gu"] / m + lam * rhs_u
        rv = -t ** (pr.q - 1.0) * aux["gv"] / m + lam * rhs_v
        nu, nv = np.sqrt(np.sum(m * ru * ru)), np.sqrt(np.sum(m * rv * rv))
        du, dv = np.sqrt(np.sum(m * rhs_u**2)), np.sqrt(np.sum(m * rhs_v**2))
        rel = max(nu / (lam * du), nv / (lam * dv)) if lam > 0 else np.inf
        return float(max(nu, nv)), float(rel)

    def normalize(self, z, aux, lam):
        pr = self.pr
        s = (lam / aux["Pu"]) ** (1.0 / pr.p)
        t = (lam / aux["Pv"]) ** (1.0 / pr.q)
        return s * z[0], t * z[1]


def initial_fields(grid, mode: str, seed: int = 0, attempt: int = 0) -> np.ndarray:
    """Starting ``(u, v)``; both components equal."""
    xs = grid.coords()
    k = [2 * np.pi / L for L in grid.lengths]
    if mode == "random" or attempt > 0:
        rng = np.random.default_rng([seed, attempt])
        u = np.zeros(grid.shape)
        for _ in range(6):
            phase = sum(int(rng.integers(-2, 3)) * kd * x for kd, x in zip(k, xs))
            u += rng.normal() * np.cos(phase + rng.uniform(0, 2 * np.pi))
        if np.ptp(u) == 0:
            u = np.sin(k[0] * xs[0])
    elif mode == "sine":
        u = np.sin(k[0] * xs[0])
    else:
        u = np.sin(k[0] * xs[0]) + 0.5 * np.cos(k[0] * xs[0])
        if grid.dim == 2:
            u += 0.3 * np.sin(k[1] * xs[1]) + 0.2 * np.cos(k[1] * xs[1])
    return np.stack([u, u.copy()])


def first_eigenpair(g: MetricField, params: EigenParams, warm_start=None) -> EigenPair:
    """Minimize ``A`` on ``B = 1`` with the zero-mean constraints.

    Deterministic for fixed inputs. Raises :class:`EigenSolverError` on
    non-finite values or when three restarts fail to give a feasible start.
    """
    prob = _Problem(g, params)
    restarts = 0
    start = None
    if warm_start is not None:
        z0 = np.stack([np.asarray(warm_start[0], float), np.asarray(warm_start[1], float)])
        g.grid.check(z0, "warm start", lead=1)
        start = _feasible(prob, z0)
        restarts += start is None
    attempt = 0
    while start is None:
        if restarts > 3:
            raise EigenSolverError("no feasible starting point after 3 restarts")
        start = _feasible(prob, initial_fields(g.grid, params.init, params.seed, attempt))
        restarts += start is None
        attempt += 1
    return _descend(prob, *start, restarts=restarts)


def _feasible(prob, z0):
    if not np.all(np.isfinite(z0)):
        raise EigenSolverError("non-finite starting fields")
    proj = prob.project(*z0)
    if proj is None:
        return None
    z = np.stack(proj)
    F, grad, aux = prob.evaluate(z)
    if not np.isfinite(F):
        return None
    return z, F, grad, aux


def _descend(prob: _Problem, z, F, grad, aux, restarts=0) -> EigenPair:
    pr = prob.pr
    S, Y, RHO = [], [], []
    history = [float(np.exp(F))]
    converged = False
    it = 0
    res_abs, res_rel = prob.kkt(z, F, aux)
    stalls = 0
    while it < pr.max_iters:
        if res_rel <= pr.tol_kkt:
            converged = True
            break
        d = _lbfgs_direction(prob, grad, S, Y, RHO)
        slope = float(np.sum(grad * d))
        if not slope > 0:
            S.clear(), Y.clear(), RHO.clear()
            d = prob.precondition(grad)
            slope = float(np.sum(grad * d))
        alpha = 1.0
        if not S:
            nz, nd = np.sqrt(np.sum(z * z)), np.sqrt(np.sum(d * d))
            alpha = min(1.0, 0.1 * nz / nd) if nd > 0 else 1.0
        accepted = None
        for _ in range(40):
            trial = prob.project(*(z - alpha * d))
            if trial is not None:
                zt = np.stack(trial)
                Ft, gt, auxt = prob.evaluate(zt)
                if np.isfinite(Ft) and Ft <= F - 1e-4 * alpha * slope:
                    accepted = (zt, Ft, gt, auxt)
                    break
            alpha *= 0.5
        it += 1
        if accepted is None:
            if not S:
                stalls += 1
                if stalls >= 2:
                    break
            S.clear(), Y.clear(), RHO.clear()
            continue
        stalls = 0
        zt, Ft, gt, auxt = accepted
        if not np.all(np.isfinite(gt)):
            raise EigenSolverError(f"non-finite gradient at iteration {it}")
        s_k, y_k = zt - z, gt - grad
        sy = float(np.sum(s_k * y_k))
        if sy > 1e-300:
            S.append(s_k), Y.append(y_k), RHO.append(1.0 / sy)
            if len(S) > pr.memory:
                S.pop(0), Y.pop(0), RHO.pop(0)
        z, F, grad, aux = zt, Ft, gt, auxt
        history.append(float(np.exp(F)))
        res_abs, res_rel = prob.kkt(z, F, aux)
        if len(history) > STALL_WINDOW and history[-STALL_WINDOW - 1] - history[-1] <= 1e-14 * history[-1]:
            log.debug("eigensolve stagnated at rel_kkt=%.2e", res_rel)
            break
        # keep the iterate O(1); F is invariant under separate rescaling of u, v
        nu, nv = np.sqrt(np.mean(z[0] ** 2)), np.sqrt(np.mean(z[1] ** 2))
        if not (0.1 < nu < 10 and 0.1 < nv < 10):
            z = np.stack([z[0] / nu, z[1] / nv])
            F, grad, aux = prob.evaluate(z)
            S.clear(), Y.clear(), RHO.clear()

    lam = float(np.exp(F))
    u, v = prob.normalize(z, aux, lam)
    Bn = functional_B(u, v, prob.g, pr)
    Cu, Cv = zero_mean_constraints(u, v, prob.g, pr)
    res_abs = kkt_residual(lam, u, v, prob.g, pr)
    log.debug("eigensolve: lam=%.12g iters=%d rel_kkt=%.2e", lam, it, res_rel)
    return EigenPair(lam, u, v, res_abs, res_rel, (abs(Bn - 1.0), abs(Cu), abs(Cv)),
                     it, converged, restarts, history)


def _lbfgs_direction(prob, grad, S, Y, RHO):
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(S), reversed(Y), reversed(RHO)):
        a = rho * float(np.sum(s * q))
        alphas.append(a)
        q -= a * y
    r = prob.precondition(q)
    if S:
        Hy = prob.precondition(Y[-1])
        r *= float(np.sum(S[-1] * Y[-1])) / float(np.sum(Y[-1] * Hy))
    for s, y, rho, a in zip(S, Y, RHO, reversed(alphas)):
        beta = rho * float(np.sum(y * r))
        r += (a - beta) * s
    return r


def lambda_of_t(state: CoupledState, params: EigenParams, warm=None) -> float:
    return first_eigenpair(state.g, params, warm).lam
