"""Radial grids, graded time meshes and quadrature for singular integrands.

A :class:`RadialGrid` is a chain of panels covering ``[r_min, R]``. The inner
panels are geometric (uniform in ``log r``) and end at ``r_split``; the outer
panels are uniform in ``r``. Every panel carries an 8-point Gauss-Legendre
rule in its own variable (``log r`` or ``r``), and the grid nodes are the
union of those points. Radial fields are sampled at the nodes; inside a panel
they are represented by the Lagrange interpolant of the *density*
``f(r) * J(x)`` where ``J = dr/dx * r**(N-1)``, which is smooth for the
``r**-N``-type profiles used here.

The region ``0 < r < r_min`` is not sampled. A field carries a small core
model for it, so integrals over balls stay exact for the singular data of
:mod:`critheat.initdata` instead of silently dropping the core mass.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as _spi
from scipy import optimize as _spo

from .special import barycentric_weights, gauss_legendre, lagrange_basis, sphere_area

PANEL_ORDER = 8
_W_MAX = 700.0
E_INV = math.exp(-1.0)


# ---------------------------------------------------------------------------
# core models for 0 < r < r_min
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantCore:
    """Field equal to ``value`` on ``B(r_min)``."""

    value: float = 0.0
    singular = False
    unbounded = False

    def profile(self, r):
        return np.full(np.shape(r), self.value, dtype=float)

    def mass(self, N: int, upper: float) -> float:
        return self.value * upper**N / N

    def weighted_integral(self, N: int, upper: float, h: Callable) -> float:
        c = abs(self.value)
        if c == 0.0:
            return 0.0
        return c * float(h(math.log(c))) * upper**N / N


@dataclass(frozen=True)
class PowerLogCore:
    """Profile ``min(r**-N * (shift - log r)**-b, cap)`` on the core.

    ``shift = -log(lambda)`` accounts for parabolic rescaling of the data;
    ``b > 1`` keeps the profile integrable.
    """

    b: float
    shift: float = 0.0
    cap: float | None = None
    singular = True

    @property
    def unbounded(self) -> bool:
        return self.cap is None

    def __post_init__(self):
        if self.b <= 1.0:
            raise ValueError("power-log core needs exponent b > 1 to be integrable")

    def log_profile(self, N: int, sigma):
        sigma = np.asarray(sigma, dtype=float)
        lp = N * sigma - self.b * np.log(sigma + self.shift)
        if self.cap is not None:
            lp = np.minimum(lp, math.log(self.cap))
        return lp

    def profile(self, r, N: int = None):
        if N is None:
            raise TypeError("PowerLogCore.profile needs the dimension")
        with np.errstate(over="ignore"):
            return np.exp(self.log_profile(N, -np.log(np.asarray(r, dtype=float))))

    def _cap_sigma(self, N: int, sigma_lo: float) -> float | None:
        """Sigma beyond which the cap is active, or None if never inside the core."""
        if self.cap is None:
            return None
        lm = math.log(self.cap)
        g = lambda s: N * s - self.b * math.log(s + self.shift) - lm
        if g(sigma_lo) >= 0.0:
            return sigma_lo
        hi = sigma_lo + 1.0
        while g(hi) < 0.0:
            hi = 2.0 * hi
        return _spo.brentq(g, sigma_lo, hi, xtol=1e-14, rtol=1e-15)

    def mass(self, N: int, upper: float) -> float:
        s_u = -math.log(upper)
        tail = lambda s: (s + self.shift) ** (1.0 - self.b) / (self.b - 1.0)
        s_c = self._cap_sigma(N, s_u)
        if s_c is None:
            return tail(s_u)
        return tail(s_u) - tail(s_c) + self.cap * math.exp(-N * s_c) / N

    def weighted_integral(self, N: int, upper: float, h: Callable) -> float:
        """Integral of ``f * h(log f) * r**(N-1)`` over ``B(upper)``.

        Written in ``w = log(sigma + shift)``, ``sigma = -log r``, where the
        algebraic tail in ``sigma`` becomes exponential decay.
        """
        s_u = -math.log(upper)
        s_c = self._cap_sigma(N, s_u)

        def integrand(w):
            s = math.exp(w) - self.shift
            lf = float(self.log_profile(N, s))
            # below the cap lf - N s = -b w exactly; avoids cancellation at large s
            expo = (1.0 - self.b) * w if s_c is None or s < s_c else lf - N * s + w
            return math.exp(expo) * float(h(lf))

        lo = math.log(s_u + self.shift)
        # e^w must stay finite; the integrand has decayed far below rounding by then
        top = _W_MAX if s_c is None else math.log(s_c + self.shift)
        val, _ = _spi.quad(integrand, lo, top, epsabs=0.0, epsrel=1e-12, limit=400)
        if s_c is not None:
            val += self.cap * float(h(math.log(self.cap))) * math.exp(-N * s_c) / N
        return val


@dataclass(frozen=True)
class ScaledCore:
    """``factor`` times another core model (used for signed or rescaled data)."""

    base: object
    factor: float

    @property
    def singular(self) -> bool:
        return self.base.singular

    @property
    def unbounded(self) -> bool:
        return self.base.unbounded

    def profile(self, r, N: int = None):
        prof = self.base.profile(r, N) if isinstance(self.base, PowerLogCore) else self.base.profile(r)
        return self.factor * prof

    def mass(self, N: int, upper: float) -> float:
        return self.factor * self.base.mass(N, upper)

    def weighted_integral(self, N: int, upper: float, h: Callable) -> float:
        c = abs(self.factor)
        if c == 0.0:
            return 0.0
        lc = math.log(c)
        return c * self.base.weighted_integral(N, upper, lambda lf: h(lf + lc))


def scale_core(core, factor: float):
    """Core model of ``factor * f`` given the core of ``f``."""
    if isinstance(core, ConstantCore):
        return ConstantCore(factor * core.value)
    if isinstance(core, ScaledCore):
        factor, core = factor * core.factor, core.base
    return core if factor == 1.0 else ScaledCore(core, float(factor))


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Panelled radial grid on ``[r_min, R]`` in dimension ``N``.

    ``weights`` integrate ``f(r) r**(N-1) dr`` over ``[r_min, R]``; multiply
    by ``omega`` (the area of the unit sphere) for an integral over R^N.
    """

    N: int
    r_min: float
    R: float
    n: int
    split: float
    r_split: float
    cluster_levels: int
    breakpoints: tuple
    edges: np.ndarray
    is_log: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    jacobian: np.ndarray
    omega: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_panels(self) -> int:
        return len(self.edges) - 1

    def panel_slice(self, p: int) -> slice:
        return slice(PANEL_ORDER * p, PANEL_ORDER * (p + 1))

    def panel_variable(self, p: int, r):
        """Map radii to the panel's quadrature variable (``log r`` or ``r``)."""
        return np.log(r) if self.is_log[p] else np.asarray(r, dtype=float)

    def panel_nodes_x(self, p: int) -> np.ndarray:
        return self.panel_variable(p, self.nodes[self.panel_slice(p)])

    def panel_bary(self, p: int) -> np.ndarray:
        key = ("bary", p)
        if key not in self._cache:
            self._cache[key] = barycentric_weights(self.panel_nodes_x(p))
        return self._cache[key]

    def panel_jacobian(self, p: int, r):
        r = np.asarray(r, dtype=float)
        return r**self.N if self.is_log[p] else r ** (self.N - 1)

    def locate(self, r) -> np.ndarray:
        """Panel index containing each radius (clipped to valid panels)."""
        idx = np.searchsorted(self.edges, r, side="right") - 1
        return np.clip(idx, 0, self.n_panels - 1)

    def descriptor(self) -> dict:
        return {"N": self.N, "r_min": self.r_min, "R": self.R, "n": self.n,
                "split": self.split, "r_split": self.r_split,
                "cluster_levels": self.cluster_levels, "breakpoints": list(self.breakpoints)}


def build_radial_grid(N: int, r_min: float | None = None, R: float = 20.0, n: int = 512,
                      split: float = 0.75, r_split: float | None = None,
                      cluster_levels: int = 16, breakpoints=()) -> RadialGrid:
    """Build a log-graded composite Gauss-Legendre radial grid.

    Parameters
    ----------
    N : int
        Space dimension.
    r_min : float, optional
        Inner cutoff; defaults to ``R * exp(-40)``.
    R : float
        Truncation radius; ``R^N`` is replaced by ``B(R)``.
    n : int
        Total number of nodes, a multiple of 8 and at least 16.
    split : float
        Fraction of panels on the log-graded inner segment.
    r_split : float, optional
        End of the log-graded segment; defaults to ``1/e`` (where the singular
        test data are cut off) when that lies inside ``(r_min, R)``.
    cluster_levels : int
        Number of dyadic refinements of the two panels touching ``r_split``,
        so that the heat-smoothed jump of cut-off data stays resolved at
        small times. Reduced automatically on small grids.
    breakpoints : sequence of float
        Radii where the data have a kink or jump; the nearest free panel
        edge is moved onto each so no panel straddles it.
    """
    if int(N) != N or N < 1:
        raise ValueError("dimension N must be an integer >= 1")
    N = int(N)
    if r_min is None:
        r_min = R * math.exp(-40.0)
    if not r_min > 0:
        raise ValueError("r_min must be positive")
    if not R > r_min:
        raise ValueError("R must exceed r_min")
    if n < 16:
        raise ValueError("need at least 16 nodes")
    if n % PANEL_ORDER:
        raise ValueError(f"node count must be a multiple of {PANEL_ORDER}")
    if not 0.0 <= split <= 1.0:
        raise ValueError("split must lie in [0, 1]")

    n_panels = n // PANEL_ORDER
    levels = max(0, min(int(cluster_levels), (n_panels - 2) // 4))
    n_base = n_panels - 2 * levels
    n_log = int(round(split * n_base))
    n_lin = n_base - n_log
    if n_log == 0 or n_lin == 0:
        n_log, n_lin = (0, n_panels) if n_log == 0 else (n_panels, 0)
        levels = 0
    if n_log == 0:
        r_split = r_min
    elif n_lin == 0:
        r_split = R
    elif r_split is None:
        r_split = E_INV if r_min < E_INV < R else math.sqrt(r_min * R)
    if not r_min <= r_split <= R:
        raise ValueError("r_split must lie in [r_min, R]")

    log_edges = np.exp(np.linspace(math.log(r_min), math.log(r_split), n_log + 1)) if n_log else np.array([r_min])
    lin_edges = np.linspace(r_split, R, n_lin + 1) if n_lin else np.array([R])
    if n_log:
        log_edges[0], log_edges[-1] = r_min, r_split
    if levels:
        # dyadic refinement on both sides of r_split, where the data jump
        xs, dx = math.log(r_split), math.log(r_split) - math.log(log_edges[-2])
        inner = np.exp(xs - dx * 0.5 ** np.arange(1, levels + 1))
        log_edges = np.concatenate([log_edges[:-1], inner, [r_split]])
        dr = lin_edges[1] - lin_edges[0]
        outer = r_split + dr * 0.5 ** np.arange(levels, 0, -1)
        lin_edges = np.concatenate([[r_split], outer, lin_edges[1:]])
    edges = np.concatenate([log_edges, lin_edges[1:]])
    edges = _snap_edges(edges, breakpoints)
    is_log = np.array([True] * (len(log_edges) - 1) + [False] * (len(lin_edges) - 1))

    nodes = np.empty(n)
    weights = np.empty(n)
    jac = np.empty(n)
    for p in range(n_panels):
        sl = slice(PANEL_ORDER * p, PANEL_ORDER * (p + 1))
        if is_log[p]:
            x, w = gauss_legendre(PANEL_ORDER, math.log(edges[p]), math.log(edges[p + 1]))
            r = np.exp(x)
            j = r**N
        else:
            r, w = gauss_legendre(PANEL_ORDER, edges[p], edges[p + 1])
            j = r ** (N - 1)
        nodes[sl], weights[sl], jac[sl] = r, w * j, j
    for arr in (edges, is_log, nodes, weights, jac):
        arr.setflags(write=False)
    return RadialGrid(N=N, r_min=float(r_min), R=float(R), n=int(n), split=float(split),
                      r_split=float(r_split), cluster_levels=int(cluster_levels),
                      breakpoints=tuple(float(b) for b in breakpoints), edges=edges, is_log=is_log, nodes=nodes,
                      weights=weights, jacobian=jac, omega=sphere_area(N))


def _snap_edges(edges: np.ndarray, breakpoints) -> np.ndarray:
    """Move the closest interior edge (in log distance) onto each breakpoint."""
    edges = edges.copy()
    fixed = np.zeros(edges.size, dtype=bool)
    fixed[[0, -1]] = True
    for b in sorted(float(x) for x in breakpoints):
        if not edges[0] < b < edges[-1]:
            continue
        hit = np.isclose(edges, b, rtol=1e-13, atol=0.0)
        if hit.any():
            fixed |= hit
            continue
        j = int(np.searchsorted(edges, b))
        cand = [i for i in (j - 1, j) if not fixed[i]]
        if not cand:
            raise ValueError(f"breakpoint {b} falls in a panel whose edges are both taken")
        i = min(cand, key=lambda i: abs(math.log(edges[i] / b)))
        edges[i] = b
        fixed[i] = True
    return edges


def grid_from_descriptor(desc: dict) -> RadialGrid:
    return build_radial_grid(desc["N"], desc["r_min"], desc["R"], desc["n"], desc["split"],
                             desc.get("r_split"), desc.get("cluster_levels", 16),
                             tuple(desc.get("breakpoints", ())))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


class RadialField:
    """A radial function sampled on the nodes of a :class:`RadialGrid`.

    ``core`` models the field on ``B(r_min)``; the field vanishes beyond ``R``.
    """

    __slots__ = ("grid", "values", "core")

    def __init__(self, grid: RadialGrid, values, core=None):
        values = np.array(values, dtype=float)
        if values.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.core = ConstantCore(float(values[0])) if core is None else core

    def __repr__(self):
        return f"RadialField(N={self.grid.N}, n={self.grid.n}, max={np.abs(self.values).max():.3g})"

    def __neg__(self):
        return self.scaled(-1.0)

    def scaled(self, c: float) -> "RadialField":
        return RadialField(self.grid, c * self.values, scale_core(self.core, float(c)))

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "RadialField":
        """Apply ``func`` nodewise (and to the core when it is constant)."""
        if isinstance(self.core, ConstantCore):
            core = ConstantCore(float(func(np.array([self.core.value]))[0]))
        else:
            warnings.warn("nodewise map drops a singular core model; the core is "
                          "replaced by the first nodal value", RuntimeWarning, stacklevel=2)
            core = None
        return RadialField(self.grid, func(self.values), core)

    def core_profile(self, r):
        if isinstance(self.core, (PowerLogCore, ScaledCore)):
            return self.core.profile(r, self.grid.N)
        return self.core.profile(r)

    def interpolate(self, r) -> np.ndarray:
        """Evaluate the panel interpolant at arbitrary radii."""
        g = self.grid
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        inside = (r >= g.r_min) & (r <= g.R)
        below = r < g.r_min
        if below.any():
            out[below] = self.core_profile(r[below])
        if inside.any():
            ri = r[inside]
            panel = g.locate(ri)
            res = np.empty_like(ri)
            dens = self.values * g.jacobian
            for p in np.unique(panel):
                m = panel == p
                sl = g.panel_slice(p)
                basis = lagrange_basis(g.panel_nodes_x(p), g.panel_bary(p), g.panel_variable(p, ri[m]))
                res[m] = basis @ dens[sl] / g.panel_jacobian(p, ri[m])
            out[inside] = res
        return out


@dataclass(frozen=True)
class QuadratureResult:
    """Radial integral split into the sampled part and the core-model part."""

    value: float
    grid_part: float
    core_part: float


def _partial_panel(grid: RadialGrid, p: int, density: np.ndarray, upper: float, order: int = 16) -> float:
    """Integral of the panel interpolant of ``density`` from the panel start to ``upper``."""
    a = grid.panel_variable(p, grid.edges[p])
    b = grid.panel_variable(p, upper)
    if b <= a:
        return 0.0
    x, w = gauss_legendre(order, float(a), float(b))
    basis = lagrange_basis(grid.panel_nodes_x(p), grid.panel_bary(p), x)
    return float(w @ (basis @ density[grid.panel_slice(p)]))


def radial_quadrature(f: RadialField, upper: float | None = None, transform=None,
                      core_integral: float | None = None) -> QuadratureResult:
    """Integral of ``f`` (or of ``transform(f)``) over ``B(upper)`` in R^N.

    The core ``B(r_min)`` contributes ``core_integral`` when given (it must be
    ``int_0^{r_min} transform(f) r^{N-1} dr``); otherwise a constant core is
    transformed directly and a singular core contributes its exact mass, which
    is only meaningful without a transform.
    """
    g = f.grid
    vals = f.values if transform is None else transform(f.values)
    if np.isnan(vals).any():
        raise ValueError("NaN in field values")
    upper = g.R if upper is None else float(upper)
    if upper <= 0:
        raise ValueError("upper radius must be positive")
    core = f.core
    if core_integral is None:
        if isinstance(core, ConstantCore):
            if transform is not None:
                core = ConstantCore(float(transform(np.array([core.value]))[0]))
        elif transform is not None:
            raise ValueError("a singular core needs an explicit core_integral under a transform")
    if upper <= g.r_min:
        if core_integral is not None and upper < g.r_min:
            raise ValueError("core_integral is defined on B(r_min) only")
        c = core.mass(g.N, upper) if core_integral is None else core_integral
        return QuadratureResult(g.omega * c, 0.0, g.omega * c)
    upper = min(upper, g.R)
    p = int(g.locate(upper))
    n_full = g.panel_slice(p).start
    grid_part = float(np.dot(g.weights[:n_full], vals[:n_full]))
    if upper < g.edges[p + 1]:
        grid_part += _partial_panel(g, p, vals * g.jacobian, upper)
    else:
        grid_part += float(np.dot(g.weights[g.panel_slice(p)], vals[g.panel_slice(p)]))
    c = core.mass(g.N, g.r_min) if core_integral is None else core_integral
    return QuadratureResult(g.omega * (grid_part + c), g.omega * grid_part, g.omega * c)


def integrate_radial(f: RadialField, upper: float | None = None) -> float:
    """``omega_{N-1} * int_0^upper f(r) r^{N-1} dr``, core model included."""
    return radial_quadrature(f, upper).value


def integrate_function(grid: RadialGrid, func: Callable, upper: float | None = None) -> float:
    """Convenience: sample ``func`` on the grid (constant core) and integrate."""
    return integrate_radial(RadialField(grid, func(grid.nodes)), upper)


# ---------------------------------------------------------------------------
# time meshes
# ---------------------------------------------------------------------------

T_MAX = math.exp(-2.0)


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Time nodes ``0 < t_1 < ... < t_m = T`` uniform in ``-log t``."""

    t1: float
    T: float
    m: int
    nodes: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return -np.log(self.nodes)

    @property
    def step(self) -> float:
        """Spacing of the nodes in ``-log t``."""
        return (math.log(self.T) - math.log(self.t1)) / (self.m - 1)

    def descriptor(self) -> dict:
        return {"t1": self.t1, "T": self.T, "m": self.m}

    def __len__(self):
        return self.m


def build_time_mesh(t1: float, T: float, m: int) -> TimeMesh:
    """Nodes with ``-log t_k`` linearly spaced from ``-log t1`` down to ``-log T``."""
    if not t1 > 0:
        raise ValueError("t1 must be positive")
    if not T < T_MAX:
        raise ValueError("T must be below exp(-2) so that -log t >= 2 on the mesh")
    if not t1 < T:
        raise ValueError("t1 must be smaller than T")
    if m < 2:
        raise ValueError("mesh needs at least two nodes")
    if t1 < np.finfo(float).tiny:
        raise ValueError("t1 is below the smallest normal double")
    sig = np.linspace(-math.log(t1), -math.log(T), m)
    nodes = np.exp(-sig)
    nodes[0], nodes[-1] = t1, T
    nodes.setflags(write=False)
    return TimeMesh(float(t1), float(T), int(m), nodes)


def mesh_from_descriptor(desc: dict) -> TimeMesh:
    return build_time_mesh(desc["t1"], desc["T"], desc["m"])


def refine_mesh(mesh: TimeMesh) -> TimeMesh:
    """Halve the spacing in ``-log t``; the old nodes are kept."""
    return build_time_mesh(mesh.t1, mesh.T, 2 * mesh.m - 1)


def dumps_descriptor(obj) -> str:
    """Structured-text (JSON) form of a grid or mesh descriptor.

    JSON floats are written with ``repr`` so the round trip is exact.
    """
    kind = "grid" if isinstance(obj, RadialGrid) else "mesh"
    return json.dumps({"kind": kind, **obj.descriptor()}, sort_keys=True)


def loads_descriptor(text: str):
    desc = json.loads(text)
    kind = desc.pop("kind")
    return grid_from_descriptor(desc) if kind == "grid" else mesh_from_descriptor(desc)


# ---------------------------------------------------------------------------
# log-weight time integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogWeightIntegral:
    """Both routes for ``int_{t_floor}^t s^-1 (-log s)^-a ds``."""

    quadrature: float
    closed_form: float
    tail_bound: float

    @property
    def rel_error(self) -> float:
        return abs(self.quadrature - self.closed_form) / abs(self.closed_form)


def log_weight_closed_form(t: float, a: float, t_floor: float = 0.0) -> float:
    s_hi = -math.log(t)
    if t_floor == 0.0:
        if a <= 1.0:
            raise ValueError("integral diverges at s = 0 for a <= 1")
        return s_hi ** (1.0 - a) / (a - 1.0)
    s_lo = -math.log(t_floor)
    if a == 1.0:
        return math.log(s_lo / s_hi)
    return (s_hi ** (1.0 - a) - s_lo ** (1.0 - a)) / (a - 1.0)


def log_weight_integral(t: float, a: float, t_floor: float = 0.0,
                        panels_per_unit: int = 2) -> LogWeightIntegral:
    """Quadrature and closed form of ``int_{t_floor}^t ds / (s (-log s)^a)``.

    The quadrature works in ``w = log(-log s)``, where ``ds/s = -sigma dw``
    and the integrand becomes ``sigma^(1-a)`` evaluated at ``sigma = e^w``:
    composite 16-point Gauss-Legendre panels on a finite ``w`` range. For
    ``t_floor = 0`` the ``w`` range is cut where the remaining tail is below
    ``1e-17`` of the total, and that remainder is reported as ``tail_bound``.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    if t_floor < 0 or t_floor >= t:
        raise ValueError("t_floor must lie in [0, t)")
    if t_floor == 0.0 and a <= 1.0:
        raise ValueError("integral diverges at s = 0 for a <= 1")
    w_lo = math.log(-math.log(t))
    tail = 0.0
    if t_floor == 0.0:
        w_hi = min(w_lo + 40.0 / (a - 1.0), _W_MAX)
        tail = math.exp((1.0 - a) * w_hi) / (a - 1.0)
    else:
        w_hi = math.log(-math.log(t_floor))
    n_pan = max(1, int(math.ceil((w_hi - w_lo) * panels_per_unit)))
    edges = np.linspace(w_lo, w_hi, n_pan + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        w, wt = gauss_legendre(16, lo, hi)
        sigma = np.exp(w)
        s = np.exp(-sigma)
        with np.errstate(all="ignore"):
            integrand = 1.0 / (s * sigma**a)      # original integrand f(s)
            jac = s * sigma                        # |ds/dw|
            # below ~1e-300 the product underflows; use its exact simplification
            vals = np.where(s > 1e-300, integrand * jac, sigma ** (1.0 - a))
        total += float(wt @ vals)
    return LogWeightIntegral(total, log_weight_closed_form(t, a, t_floor), tail)
