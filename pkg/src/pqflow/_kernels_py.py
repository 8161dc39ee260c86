"""Pure-numpy face-energy kernels.

Reference implementation of the hot loop used by the eigensolver. The
compiled module ``pqflow._ckernels`` exposes the same two functions with
identical semantics; ``pqflow.kernels`` selects one at import time.

Layout of the face data (see ``diffgeo.FaceMetric``):

* 1D: ``gi`` has shape ``(1, n)`` and holds ``g^11`` on the face ``i+1/2``.
* 2D: ``gi`` has shape ``(2, 3, n, n)``; ``gi[d]`` holds
  ``(g^11, g^12, g^22)`` on the faces normal to axis ``d``.

``sg`` holds ``sqrt(det g)`` on the same faces, ``w`` the quadrature weight
of one face (``h`` in 1D, ``h1*h2/2`` in 2D since both face families carry
the full gradient).
"""

import numpy as np


def _weight(sq, p):
    if p >= 2.0:
        return sq ** (0.5 * p - 1.0)
    # p < 2 with delta = 0: the flux weight*d tends to 0 where the gradient does
    out = np.zeros_like(sq)
    np.power(sq, 0.5 * p - 1.0, out=out, where=sq > 0.0)
    return out


def face_gradients_1d(f, h):
    return ((np.roll(f, -1) - f) / h,)


def face_gradients_2d(f, h1, h2):
    """Covariant gradient components on both face families.

    Returns ``((d1x, d2x), (d1y, d2y))``: the normal component is a compact
    difference across the face, the tangential one the mean of the centered
    differences at the two adjacent nodes.
    """
    c1 = (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2.0 * h1)
    c2 = (np.roll(f, -1, 1) - np.roll(f, 1, 1)) / (2.0 * h2)
    d1x = (np.roll(f, -1, 0) - f) / h1
    d2x = 0.5 * (c2 + np.roll(c2, -1, 0))
    d2y = (np.roll(f, -1, 1) - f) / h2
    d1y = 0.5 * (c1 + np.roll(c1, -1, 1))
    return (d1x, d2x), (d1y, d2y)


def energy_grad_1d(f, gi, sg, h, p, delta):
    (d,) = face_gradients_1d(f, h)
    sq = gi[0] * d * d + delta * delta
    wgt = _weight(sq, p)
    dens = (sq * wgt - delta**p) / p
    energy = h * float(np.sum(dens * sg))
    flux = h * wgt * sg * gi[0] * d
    grad = (np.roll(flux, 1) - flux) / h
    return energy, grad


def energy_grad_2d(f, gi, sg, h1, h2, p, delta):
    (d1x, d2x), (d1y, d2y) = face_gradients_2d(f, h1, h2)
    w = 0.5 * h1 * h2
    energy = 0.0
    grad = np.zeros_like(f)

    # x-faces
    g11, g12, g22 = gi[0]
    sq = g11 * d1x * d1x + 2.0 * g12 * d1x * d2x + g22 * d2x * d2x + delta * delta
    wgt = _weight(sq, p)
    energy += w * float(np.sum((sq * wgt - delta**p) / p * sg[0]))
    fn = w * wgt * sg[0] * (g11 * d1x + g12 * d2x)
    ft = w * wgt * sg[0] * (g12 * d1x + g22 * d2x)
    grad += (np.roll(fn, 1, 0) - fn) / h1
    q = 0.5 * (ft + np.roll(ft, 1, 0))
    grad += (np.roll(q, 1, 1) - np.roll(q, -1, 1)) / (2.0 * h2)

    # y-faces
    g11, g12, g22 = gi[1]
    sq = g11 * d1y * d1y + 2.0 * g12 * d1y * d2y + g22 * d2y * d2y + delta * delta
    wgt = _weight(sq, p)
    energy += w * float(np.sum((sq * wgt - delta**p) / p * sg[1]))
    fn = w * wgt * sg[1] * (g12 * d1y + g22 * d2y)
    ft = w * wgt * sg[1] * (g11 * d1y + g12 * d2y)
    grad += (np.roll(fn, 1, 1) - fn) / h2
    q = 0.5 * (ft + np.roll(ft, 1, 1))
    grad += (np.roll(q, 1, 0) - np.roll(q, -1, 0)) / (2.0 * h1)
    return energy, grad
