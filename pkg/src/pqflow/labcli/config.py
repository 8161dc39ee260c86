"""Scenario files: flat ``section.key = value`` text.

Example::

    manifold = conformal_torus
    grid.n = 64
    metric.u0 = cos:1:0:0.2
    flow.kappa = 0
    flow.t_end = 0.5
    eigen.p = 2
    eigen.q = 2
    output.csv = trace.csv

Fourier modes are comma-separated ``kind:k1[:k2]:amp`` entries with
``kind`` in ``cos``/``sin``; wavenumbers are integers relative to the
period, so ``cos:1:0:0.2`` is ``0.2 cos(2 pi x / L1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diffgeo import CoupledState, Grid, MetricField, ParameterError
from ..geomflow import EinsteinParams, FlowConfig, einstein_c
from ..monitor import Tolerances
from ..pqeigen import EigenParams

MANIFOLDS = ("conformal_torus", "general_torus", "circle", "einstein_analytic")


class ConfigError(ValueError):
    """Scenario file could not be parsed or fails validation."""


def _float(s: str) -> float:
    s = s.strip()
    if s.endswith("pi"):
        coef = s[:-2].strip().rstrip("*").strip()
        return (float(coef) if coef else 1.0) * math.pi
    return float(s)


def _bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class Mode:
    kind: str
    k: tuple[int, ...]
    amp: float

    def evaluate(self, grid: Grid) -> np.ndarray:
        xs = grid.coords()
        arg = sum(2 * math.pi * kk * x / L for kk, x, L in zip(self.k, xs, grid.lengths))
        arg = np.zeros(grid.shape) + arg
        return self.amp * (np.cos(arg) if self.kind == "cos" else np.sin(arg))


def parse_modes(text: str, dim: int) -> list[Mode]:
    modes = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        parts = item.split(":")
        if len(parts) != dim + 2 or parts[0] not in ("cos", "sin"):
            raise ValueError(f"bad mode {item!r}; expected kind:{':'.join(['k'] * dim)}:amp")
        modes.append(Mode(parts[0], tuple(int(p) for p in parts[1:-1]), _float(parts[-1])))
    return modes


def synthesize(modes: list[Mode], grid: Grid, const: float = 0.0) -> np.ndarray:
    out = np.full(grid.shape, float(const))
    for m in modes:
        out += m.evaluate(grid)
    return out


# key -> (converter, default)
_KEYS = {
    "manifold": (str, "conformal_torus"),
    "seed": (int, 0),
    "grid.n": (int, 64),
    "grid.L1": (_float, 2 * math.pi),
    "grid.L2": (_float, None),
    "metric.u0": (str, ""),
    "metric.g11": (_float, 1.0),
    "metric.g12": (_float, 0.0),
    "metric.g22": (_float, 1.0),
    "metric.g11.modes": (str, ""),
    "metric.g12.modes": (str, ""),
    "metric.g22.modes": (str, ""),
    "phi.const": (_float, 0.0),
    "phi.modes": (str, ""),
    "flow.kappa": (_float, 0.0),
    "flow.normalized": (_bool, False),
    "flow.t_end": (_float, 0.5),
    "flow.dt_safety": (_float, 0.25),
    "flow.stepper": (str, "rk4"),
    "flow.record_every": (_float, 0.025),
    "eigen.p": (_float, 2.0),
    "eigen.q": (_float, 2.0),
    "eigen.a": (_float, 0.0),
    "eigen.b": (_float, None),
    "eigen.delta": (_float, 1e-8),
    "eigen.tol_kkt": (_float, 1e-6),
    "eigen.max_iters": (int, 50000),
    "eigen.init": (str, "mixed"),
    "einstein.a": (_float, 1.0),
    "einstein.m": (int, 2),
    "einstein.lambda0": (_float, 1.0),
    "einstein.volume0": (_float, 1.0),
    "monitor.tol_mono_rel": (_float, 1e-3),
    "monitor.tol_int_rel": (_float, 1e-2),
    "monitor.tol_curv_rel": (_float, 1e-3),
    "monitor.fd_rel": (_float, 0.05),
    "monitor.fd_floor": (_float, 0.01),
    "monitor.volume_drift": (_float, 1e-3),
    "monitor.hyp_slack": (_float, 1e-9),
    "output.csv": (str, "trace.csv"),
    "output.summary": (str, ""),
    "output.fields": (str, "eigen_fields.csv"),
}


def parse_text(text: str, source: str = "<string>") -> dict:
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {raw[key][1]})")
        raw[key] = (value, lineno)
    values = {}
    for key, (conv, default) in _KEYS.items():
        if key in raw:
            value, lineno = raw[key]
            try:
                values[key] = conv(value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
        else:
            values[key] = default
    return values


@dataclass
class Scenario:
    manifold: str
    grid: Grid | None
    state: CoupledState | None
    flow: FlowConfig
    eigen: EigenParams
    tolerances: Tolerances
    csv_path: Path
    summary_path: Path | None
    fields_path: Path
    seed: int = 0
    einstein: EinsteinParams | None = None
    lambda0: float = 1.0
    volume0: float = 1.0
    source: str = ""
    values: dict = field(default_factory=dict, repr=False)


def _build_state(v: dict) -> tuple[Grid, CoupledState]:
    manifold = v["manifold"]
    n = v["grid.n"]
    if manifold == "circle":
        grid = Grid.circle(n, v["grid.L1"])
    else:
        grid = Grid.torus(n, v["grid.L1"], v["grid.L2"])
    dim = grid.dim
    if manifold in ("conformal_torus", "circle"):
        g = MetricField.conformal(grid, synthesize(parse_modes(v["metric.u0"], dim), grid))
    else:
        comps = [synthesize(parse_modes(v[f"metric.{c}.modes"], dim), grid, v[f"metric.{c}"])
                 for c in ("g11", "g12", "g22")]
        g = MetricField(grid, np.stack(comps))
    phi = synthesize(parse_modes(v["phi.modes"], dim), grid, v["phi.const"])
    return grid, CoupledState(g, phi, 0.0)


def build_scenario(v: dict, source: str = "<string>") -> Scenario:
    manifold = v["manifold"]
    if manifold not in MANIFOLDS:
        raise ConfigError(f"{source}: unknown manifold {manifold!r}; expected one of {', '.join(MANIFOLDS)}")
    try:
        flow = FlowConfig(kappa=v["flow.kappa"], normalized=v["flow.normalized"], t_end=v["flow.t_end"],
                          dt_safety=v["flow.dt_safety"], stepper=v["flow.stepper"],
                          record_every=v["flow.record_every"])
        eigen = EigenParams(p=v["eigen.p"], q=v["eigen.q"], a=v["eigen.a"], b=v["eigen.b"],
                            delta=v["eigen.delta"], tol_kkt=v["eigen.tol_kkt"],
                            max_iters=v["eigen.max_iters"], init=v["eigen.init"], seed=v["seed"])
        tol = Tolerances(mono_rel=v["monitor.tol_mono_rel"], int_rel=v["monitor.tol_int_rel"],
                         curv_rel=v["monitor.tol_curv_rel"], fd_rel=v["monitor.fd_rel"],
                         fd_floor=v["monitor.fd_floor"], volume_drift=v["monitor.volume_drift"],
                         hyp_slack=v["monitor.hyp_slack"])
        grid = state = ep = None
        if manifold == "einstein_analytic":
            if eigen.p != eigen.q:
                raise ParameterError("einstein_analytic needs p = q (closed-form scaling)")
            ep = EinsteinParams(a=v["einstein.a"], kappa=flow.kappa, m=v["einstein.m"], p=eigen.p)
            einstein_c(flow.t_end, ep)
        else:
            grid, state = _build_state(v)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    summary = v["output.summary"]
    return Scenario(
        manifold=manifold, grid=grid, state=state, flow=flow, eigen=eigen, tolerances=tol,
        csv_path=Path(v["output.csv"]), summary_path=Path(summary) if summary else None,
        fields_path=Path(v["output.fields"]), seed=v["seed"], einstein=ep,
        lambda0=v["einstein.lambda0"], volume0=v["einstein.volume0"], source=source, values=v,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return build_scenario(parse_text(text, str(path)), str(path))


def scenario_from_string(text: str) -> Scenario:
    return build_scenario(parse_text(text), "<string>")
