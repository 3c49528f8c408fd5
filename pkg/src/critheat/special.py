"""Small special-function helpers: Lanczos gamma, sphere areas, Gauss rules."""

import math
from functools import lru_cache

import numpy as np

# Lanczos coefficients for g = 7, n = 9 (Godfrey's set); ~15 digits on the real axis.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def lanczos_gamma(x: float) -> float:
    """Gamma function by the Lanczos approximation.

    Uses the reflection formula for ``x < 1/2``. Poles (non-positive
    integers) raise ``ValueError``.
    """
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise ValueError(f"gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * lanczos_gamma(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for k, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (z + k)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N, 2 pi^{N/2} / Gamma(N/2).

    ``N = 1`` gives 2 (the two points of S^0), which is the weight that turns
    an integral over (0, inf) into one over the line for even data.
    """
    if N < 1:
        raise ValueError("dimension must be >= 1")
    return 2.0 * math.pi ** (N / 2.0) / lanczos_gamma(N / 2.0)


@lru_cache(maxsize=None)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(order: int, a: float = -1.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to ``[a, b]``."""
    x, w = _leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def barycentric_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights for Lagrange interpolation through the nodes ``x``."""
    x = np.asarray(x, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_basis(x_nodes: np.ndarray, bary: np.ndarray, x_eval: np.ndarray) -> np.ndarray:
    """Values of every Lagrange basis polynomial at ``x_eval``.

    Returns an array of shape ``x_eval.shape + (len(x_nodes),)``. Points that
    coincide with a node get the exact unit vector.
    """
    x_eval = np.asarray(x_eval, dtype=float)
    d = x_eval[..., None] - x_nodes
    hit = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = bary / d
        out = terms / terms.sum(axis=-1, keepdims=True)
    rows = hit.any(axis=-1)
    if rows.any():
        out[rows] = hit[rows].astype(float)
    return out
