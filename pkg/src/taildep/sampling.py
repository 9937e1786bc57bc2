"""Seeded simulation of elliptical vectors ``X = R * L @ U``.

Random numbers come from the counter-based Philox generator. Rows are
produced in fixed-size blocks and every block owns two child streams derived
from ``SeedSequence(seed, spawn_key=(block, stream))``: one for directions and
one for radii. A block therefore depends only on ``(seed, block index)``, so
any partition of the rows into worker chunks yields the same matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EllipticalModel, radial_isf_log

BLOCK_ROWS = 65536
_DIRECTION, _RADIUS = 0, 1
NORM_FLOOR = 1e-12


def block_generator(seed, block, stream):
    """Philox generator for one (block, stream) pair."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def sample_sphere(k, n, rng):
    """Draw ``n`` points uniformly on the unit sphere of ``R^k``.

    Parameters
    ----------
    k : int
        Dimension, at least 2.
    n : int
        Number of rows.
    rng : numpy.random.Generator

    Returns
    -------
    ndarray of shape (n, k)
    """
    k, n = int(k), int(n)
    if k < 2 or n < 1:
        raise ValueError("need k >= 2 and n >= 1")
    z = rng.standard_normal((n, k))
    norms = np.linalg.norm(z, axis=1)
    bad = norms < NORM_FLOOR
    while bad.any():
        z[bad] = rng.standard_normal((int(bad.sum()), k))
        norms[bad] = np.linalg.norm(z[bad], axis=1)
        bad = norms < NORM_FLOOR
    return z / norms[:, None]


def sample_radius(law, n, rng):
    """Radial draws by inversion of the log-survival.

    ``log V`` with ``V`` uniform on (0, 1] is used as the log-survival target,
    which keeps the extreme upper quantiles exact.
    """
    v = 1.0 - rng.random(int(n))
    return radial_isf_log(law, np.log(v))


def sample_block(model, seed, block, rows):
    """Rows of block ``block``; ``rows <= BLOCK_ROWS`` gives a prefix of the full block."""
    if not 0 < rows <= BLOCK_ROWS:
        raise ValueError(f"rows must lie in 1..{BLOCK_ROWS}")
    u = sample_sphere(model.k, rows, block_generator(seed, block, _DIRECTION))
    r = sample_radius(model.radial, rows, block_generator(seed, block, _RADIUS))
    return r[:, None] * _lower_times(model.chol, u)


def _lower_times(L, u):
    # Row-wise u @ L.T with a fixed summation order; BLAS kernels vary with the
    # row count, which would break bit-exactness across block sizes.
    out = np.zeros_like(u)
    for i in range(L.shape[0]):
        for j in range(i + 1):
            out[:, i] += L[i, j] * u[:, j]
    return out


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """An ``n x k`` simulated sample together with its provenance."""

    data: np.ndarray
    seed: int
    model: EllipticalModel

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def k(self):
        return self.data.shape[1]

    def column(self, j):
        return self.data[:, j]


def sample_elliptical(model, n, seed, blocks=None):
    """Simulate ``n`` rows of ``model`` reproducibly from ``seed``.

    Parameters
    ----------
    model : EllipticalModel
    n : int
        Sample size, at least 1.
    seed : int
        Non-negative 64-bit seed.
    blocks : iterable of int, optional
        Restrict generation to these block indices (for partitioned work);
        default generates all of them in order.

    Returns
    -------
    SampleMatrix
    """
    n = int(n)
    seed = int(seed)
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    n_blocks = -(-n // BLOCK_ROWS)
    ids = range(n_blocks) if blocks is None else sorted(set(int(b) for b in blocks))
    parts = []
    for b in ids:
        rows = min(BLOCK_ROWS, n - b * BLOCK_ROWS)
        parts.append(sample_block(model, seed, b, rows))
    data = np.concatenate(parts, axis=0) if parts else np.empty((0, model.k))
    data.setflags(write=False)
    return SampleMatrix(data=data, seed=seed, model=model)
