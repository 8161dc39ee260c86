import os
import subprocess
import sys

import numpy as np
import pytest

from pqflow import _kernels_py, kernels
from pqflow.diffgeo import Grid, MetricField

ck = pytest.importorskip("pqflow._ckernels")


def _metric_arrays(n, dim, seed=0):
    rng = np.random.default_rng(seed)
    if dim == 1:
        grid = Grid.circle(n)
        g = MetricField.conformal(grid, 0.3 * np.sin(grid.coords()[0]))
    else:
        grid = Grid.torus(n)
        x, y = grid.coords()
        g = MetricField(grid, np.stack([np.exp(0.2 * np.cos(x)), 0.2 * np.sin(x + y), np.exp(0.1 * np.sin(y))]))
    return grid, g, rng.standard_normal(grid.shape)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_backends_agree_1d(p):
    grid, g, f = _metric_arrays(64, 1)
    fm = g.faces
    e1, g1 = ck.energy_grad_1d(f, fm.gi, fm.sg, grid.h[0], p, 1e-6)
    e2, g2 = _kernels_py.energy_grad_1d(f, fm.gi, fm.sg, grid.h[0], p, 1e-6)
    assert e1 == pytest.approx(e2, rel=1e-13)
    assert np.max(np.abs(g1 - g2)) <= 1e-12 * np.max(np.abs(g2))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
def test_backends_agree_2d(p):
    grid, g, f = _metric_arrays(24, 2)
    fm = g.faces
    e1, g1 = ck.energy_grad_2d(f, fm.gi, fm.sg, *grid.h, p, 1e-6)
    e2, g2 = _kernels_py.energy_grad_2d(f, fm.gi, fm.sg, *grid.h, p, 1e-6)
    assert e1 == pytest.approx(e2, rel=1e-13)
    assert np.max(np.abs(g1 - g2)) <= 1e-12 * np.max(np.abs(g2))


def test_zero_gradient_with_p_below_two_is_finite():
    grid = Grid.torus(8)
    fm = MetricField.flat(grid).faces
    for mod in (ck, _kernels_py):
        e, gr = mod.energy_grad_2d(np.zeros(grid.shape), fm.gi, fm.sg, *grid.h, 1.5, 0.0)
        assert e == 0.0 and np.all(gr == 0.0)


def test_default_backend_is_compiled():
    assert kernels.BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, PQFLOW_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import pqflow; print(pqflow.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
