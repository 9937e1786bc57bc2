"""Adaptive Gauss-Kronrod quadrature carried out in the log domain.

The integrand is supplied as its logarithm. Values are shifted by the running
maximum before exponentiation, so integrals of functions of size ``exp(-5000)``
are computed as accurately as integrals of order one. ``-inf`` is a legal
integrand value (zero mass).
"""

import math

import numpy as np

from .exceptions import QuadratureFailure

# 15-point Kronrod rule with its embedded 7-point Gauss rule, on [-1, 1].
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes.
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


class _Panels:
    """Panel bookkeeping for one adaptive integration."""

    def __init__(self, logf, edges):
        self.logf = logf
        self.shift = -math.inf
        self.a = np.empty(0)
        self.b = np.empty(0)
        self.kron = np.empty(0)
        self.err = np.empty(0)
        self.add(edges[:-1], edges[1:])

    def add(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        x = mid[:, None] + half[:, None] * NODES[None, :]
        g = np.asarray(self.logf(x.ravel()), dtype=float).reshape(x.shape)
        if np.isnan(g).any():
            raise QuadratureFailure("integrand returned NaN")
        if np.isposinf(g).any():
            raise QuadratureFailure("integrand returned +inf")
        new_max = g.max(initial=-math.inf)
        if new_max > self.shift:
            if np.isfinite(self.shift):
                scale = math.exp(self.shift - new_max)
                self.kron *= scale
                self.err *= scale
            self.shift = new_max
        if np.isfinite(self.shift):
            v = np.exp(g - self.shift)
        else:
            v = np.zeros_like(g)
        kron = half * (v @ KRONROD_WEIGHTS)
        gauss = half * (v @ GAUSS_WEIGHTS)
        self.a = np.concatenate([self.a, a])
        self.b = np.concatenate([self.b, b])
        self.kron = np.concatenate([self.kron, kron])
        self.err = np.concatenate([self.err, np.abs(kron - gauss)])

    def split(self, mask):
        a, b = self.a[mask], self.b[mask]
        mid = 0.5 * (a + b)
        keep = ~mask
        self.a, self.b = self.a[keep], self.b[keep]
        self.kron, self.err = self.kron[keep], self.err[keep]
        self.add(np.concatenate([a, mid]), np.concatenate([mid, b]))


def log_integrate(logf, edges, rtol=1e-10, max_panels=4000):
    """Return ``log(integral)`` of ``exp(logf)`` over the span of ``edges``.

    Parameters
    ----------
    logf : callable
        Vectorised log-integrand. Receives a 1-D array of abscissae.
    edges : array_like
        Increasing panel boundaries forming the initial partition. Place
        kinks and the location of the peak on panel boundaries.
    rtol : float
        Target relative error of the integral.
    max_panels : int
        Refinement budget; exceeding it raises ``QuadratureFailure``.

    Returns
    -------
    float
        Natural log of the integral, ``-inf`` if the integrand vanishes.
    """
    edges = np.unique(np.asarray(edges, dtype=float))
    if edges.size < 2:
        return -math.inf
    panels = _Panels(logf, edges)
    while True:
        total = panels.kron.sum()
        if total <= 0.0:
            if not np.isfinite(panels.shift):
                return -math.inf
            raise QuadratureFailure("non-positive integral estimate")
        errsum = panels.err.sum()
        if errsum <= rtol * total:
            return panels.shift + math.log(total)
        n = panels.a.size
        if n >= max_panels:
            raise QuadratureFailure(
                f"no convergence with {n} panels (error {errsum / total:.3g} relative)"
            )
        mask = panels.err > max(rtol * total / n, 0.25 * panels.err.max())
        width = panels.b - panels.a
        too_small = width <= 1e-15 * np.maximum(1.0, np.abs(panels.a))
        if np.all(too_small[mask]):
            raise QuadratureFailure("panel width underflow during refinement")
        panels.split(mask & ~too_small)


def logsumexp_pair(x, y):
    """``log(exp(x) + exp(y))`` for scalars, tolerant of ``-inf``."""
    if x == -math.inf:
        return y
    if y == -math.inf:
        return x
    m = max(x, y)
    return m + math.log(math.exp(x - m) + math.exp(y - m))
