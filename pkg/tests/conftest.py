import numpy as np
from hypothesis import strategies as st


def random_correlation(rng, k, extra=2):
    """Random correlation matrix from a Wishart-like draw."""
    g = rng.standard_normal((k, k + extra))
    s = g @ g.T
    d = np.sqrt(np.diag(s))
    c = s / np.outer(d, d)
    np.fill_diagonal(c, 1.0)
    return 0.5 * (c + c.T)


@st.composite
def correlations(draw, kmin=2, kmax=6):
    k = draw(st.integers(kmin, kmax))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_correlation(np.random.default_rng(seed), k)
