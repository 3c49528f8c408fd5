"""Duhamel operator, supersolution, monotone and Picard iterations, and the
uniqueness contraction experiment for

    u = S(t) phi + int_0^t S(t - s) f(u(s)) ds,   f(u) = |u|^{p-1} u,  p = 1 + 2/N.

Time stepping
-------------
The mesh is uniform in ``sigma = -log t`` with step ``Delta``. Writing
``U_k`` for the value at ``t_k`` and ``F_k = f(U_k)``, each mesh interval
contributes

    int_{t_{k-1}}^{t_k} S(t_k - s) F(s) ds  ~  S(h_k) [wL_k F_{k-1}] + wR_k F_k,

with positive weights exact for ``F(s) = a + b/s`` (the shape of the
near-zero envelope). Together with the semigroup property this gives the
recursion

    U_k = S(h_k) (U_{k-1} + wL_k F_{k-1}) + wR_k F_k,

so one sweep costs one matrix-vector product per mesh node, and only the
``m - 1`` step propagators ``S(h_k)`` plus ``S(t_1)`` are ever assembled.
The piece ``(0, t_1)`` is not resolved; it is replaced by a model (bounded
source, or the envelope ``s^-1 (-log s)^-a``) and its size is reported.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grids import ConstantCore, RadialField, RadialGrid, TimeMesh, log_weight_closed_form
from .gtool import GParams, apply_g, g_inverse, xq_norm
from .heatsemigroup import apply_semigroup, semigroup_matrix

TAIL_MODELS = ("auto", "bounded", "envelope")


def nonlinearity(u, N: int):
    """``|u|^{p-1} u`` with ``p = 1 + 2/N``; exact products for ``N = 1, 2``."""
    u = np.asarray(u, dtype=float)
    if N == 1:
        return u * u * u
    if N == 2:
        return u * np.abs(u)
    return np.sign(u) * np.abs(u) ** (1.0 + 2.0 / N)


def interval_weights(mesh: TimeMesh) -> tuple[np.ndarray, np.ndarray]:
    """Left and right weights per mesh interval (``m - 1`` each)."""
    d = mesh.step
    tl = mesh.nodes[:-1]
    if d < 1e-4:
        den = 1.0 - d / 2.0 + d * d / 6.0
        right = d * (0.5 + d / 6.0 + d * d / 24.0) / den
        left = d * (0.5 - d / 6.0 + d * d / 24.0) / den
    else:
        right = (math.expm1(d) - d) / -math.expm1(-d)
        left = (d + math.expm1(-d)) / -math.expm1(-d)
    # both closed forms, so neither weight is a difference of nearly equal numbers
    return tl * left, tl * right


@dataclass
class Trajectory:
    """Values of a radial field at every node of a time mesh."""

    grid: RadialGrid
    mesh: TimeMesh
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.mesh.nodes), self.grid.n):
            raise ValueError("trajectory shape must be (mesh nodes, grid nodes)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory values must be finite")

    def field(self, k: int) -> RadialField:
        v = self.values[k]
        return RadialField(self.grid, v, ConstantCore(float(v[0])))

    def sup_norms(self) -> np.ndarray:
        return np.max(np.abs(self.values), axis=1)

    def l1_norms(self) -> np.ndarray:
        g = self.grid
        base = g.omega * np.abs(self.values) @ g.weights
        core = g.omega * np.abs(self.values[:, 0]) * g.r_min**g.N / g.N
        return base + core

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"{r:.17g}" for r in self.grid.nodes])
            for t, row in zip(self.mesh.nodes, self.values):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


class DuhamelEngine:
    """Step propagators and time weights for one ``(grid, mesh)`` pair.

    Propagators are assembled on first use and kept for the engine's
    lifetime; iteration sweeps then reduce to matrix-vector products.
    """

    def __init__(self, grid: RadialGrid, mesh: TimeMesh):
        self.grid = grid
        self.mesh = mesh
        self.wl, self.wr = interval_weights(mesh)
        self._steps: list | None = None

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def steps(self) -> list:
        if self._steps is None:
            h = np.diff(self.mesh.nodes)
            self._steps = [semigroup_matrix(self.grid, float(hk), cache=False) for hk in h]
        return self._steps

    def linear(self, phi: RadialField) -> np.ndarray:
        """``S(t_k) phi`` at every mesh node, by stepping from ``t_1``."""
        if phi.grid is not self.grid:
            raise ValueError("field lives on a different grid")
        out = np.empty((len(self.mesh.nodes), self.grid.n))
        out[0] = apply_semigroup(phi, float(self.mesh.nodes[0])).values
        for k, K in enumerate(self.steps, start=1):
            out[k] = K @ out[k - 1]
        return out

    def first_interval(self, F1: np.ndarray, tail_model: str, exponent: float | None) -> np.ndarray:
        """Model for ``int_0^{t_1} S(t_1 - s) F(s) ds``, with ``S ~ I`` on that short range."""
        t1 = float(self.mesh.nodes[0])
        if tail_model == "bounded":
            return t1 * F1
        if tail_model == "envelope":
            if exponent is None or exponent <= 1.0:
                raise ValueError("the envelope tail model needs an exponent a > 1")
            sigma1 = -math.log(t1)
            return t1 * sigma1 / (exponent - 1.0) * F1
        raise ValueError(f"unknown tail model {tail_model!r}")

    def duhamel(self, F: np.ndarray, tail_model: str = "bounded", exponent: float | None = None):
        """``int_0^{t_k} S(t_k - s) F(s) ds`` for all ``k``, and the modelled first piece."""
        F = np.asarray(F, dtype=float)
        if F.shape != (len(self.mesh.nodes), self.grid.n):
            raise ValueError("source must hold one field per mesh node")
        D = np.empty_like(F)
        D[0] = self.first_interval(F[0], tail_model, exponent)
        for k, K in enumerate(self.steps, start=1):
            D[k] = K @ (D[k - 1] + self.wl[k - 1] * F[k - 1]) + self.wr[k - 1] * F[k]
        return D, D[0].copy()

    def apply_F(self, lin: np.ndarray, u: np.ndarray, tail_model: str, exponent: float | None):
        """``F[u] = S(t) phi + Duhamel(f(u))`` given the linear part."""
        D, tail = self.duhamel(nonlinearity(u, self.N), tail_model, exponent)
        return lin + D, tail


def _resolve_tail(tail_model: str, phi: RadialField | None) -> str:
    if tail_model not in TAIL_MODELS:
        raise ValueError(f"tail model must be one of {TAIL_MODELS}")
    if tail_model != "auto":
        return tail_model
    return "envelope" if (phi is not None and phi.core.unbounded) else "bounded"


def duhamel_all(source: Trajectory, tail_model: str = "bounded", exponent: float | None = None,
                engine: DuhamelEngine | None = None) -> tuple[Trajectory, float]:
    """Duhamel integrals of a source trajectory at every node, plus the tail size (sup norm)."""
    eng = engine or DuhamelEngine(source.grid, source.mesh)
    D, tail = eng.duhamel(source.values, tail_model, exponent)
    return Trajectory(source.grid, source.mesh, D, {"kind": "duhamel"}), float(np.max(np.abs(tail)))


def duhamel_integral(source: Trajectory, t_index: int, tail_model: str = "bounded",
                     exponent: float | None = None, engine: DuhamelEngine | None = None) -> RadialField:
    """``int_0^{t_k} S(t_k - s) source(s) ds`` at ``k = t_index``."""
    m = len(source.mesh.nodes)
    if not 0 <= t_index < m:
        raise IndexError(f"t_index {t_index} outside mesh of {m} nodes")
    traj, _ = duhamel_all(source, tail_model, exponent, engine)
    return traj.field(t_index)


# ---------------------------------------------------------------------------
# weighted sup norm
# ---------------------------------------------------------------------------


def weight(mesh: TimeMesh, N: int, q: float) -> np.ndarray:
    """``t^{N/2} (-log t)^q`` at the mesh nodes."""
    t = mesh.nodes
    return t ** (N / 2.0) * (-np.log(t)) ** q


@dataclass
class WeightedTrack:
    t: np.ndarray
    m: np.ndarray
    q: float

    @property
    def max(self) -> float:
        return float(self.m.max())

    @property
    def argmax_t(self) -> float:
        return float(self.t[int(np.argmax(self.m))])

    @property
    def trend(self) -> str:
        """Direction of ``m`` as ``t`` decreases, over the smallest-``t`` half."""
        half = self.m[: max(2, len(self.m) // 2)]
        d = np.diff(half)
        if np.all(d >= 0):
            return "decreasing as t -> 0"
        if np.all(d <= 0):
            return "increasing as t -> 0"
        return "mixed"

    def summary(self) -> dict:
        return {"q": self.q, "max": self.max, "argmax_t": self.argmax_t, "trend": self.trend}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "m"])
            for row in zip(self.t, self.m):
                w.writerow([f"{v:.17g}" for v in row])


def weighted_supnorm_track(u: Trajectory, q: float) -> WeightedTrack:
    """``m(t_k) = t_k^{N/2} (-log t_k)^q ||u(t_k)||_inf``."""
    return WeightedTrack(u.mesh.nodes.copy(), weight(u.mesh, u.grid.N, q) * u.sup_norms(), float(q))


def _weighted_distance(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> float:
    return float(np.max(w * np.max(np.abs(a - b), axis=1)))


def _weighted_size(a: np.ndarray, w: np.ndarray) -> float:
    return float(np.max(w * np.max(np.abs(a), axis=1)))


# ---------------------------------------------------------------------------
# supersolution
# ---------------------------------------------------------------------------


@dataclass
class SupersolutionResult:
    trajectory: Trajectory
    g_norm_series: np.ndarray        # t^{N/2} ||S(t) g(phi)||_inf
    lower_margin: float              # min (ubar - 2 S(t) phi) / scale

    def C0_threshold(self, C0: float) -> float:
        """Largest mesh time up to which ``||S(t) g(phi)||_inf <= C0 t^{-N/2}`` holds throughout."""
        t0 = 0.0
        for t, v in zip(self.trajectory.mesh.nodes, self.g_norm_series):
            if v > C0:
                break
            t0 = float(t)
        return t0


def build_supersolution(phi: RadialField, params: GParams, mesh: TimeMesh,
                        engine: DuhamelEngine | None = None) -> SupersolutionResult:
    """``ubar(t) = 2 g^{-1}(S(t) g(phi))`` at the mesh nodes."""
    if np.any(phi.values < 0):
        raise ValueError("the supersolution needs nonnegative data")
    N = phi.grid.N
    need = max(math.e, math.exp(params.q / (2.0 / N)))
    if params.rho < need * (1 - 1e-12):
        raise ValueError(f"rho must be at least max(e, e^(q/(p-1))) = {need:.6g}")
    if not math.isfinite(xq_norm(phi, params.q, params.rho)):
        raise ValueError("phi must have a finite X_{q,rho} functional")
    eng = engine or DuhamelEngine(phi.grid, mesh)
    Sg = eng.linear(apply_g(phi, params))
    lin = eng.linear(phi)
    ubar = 2.0 * g_inverse(np.maximum(Sg, 0.0), params)
    scale = np.maximum(np.max(np.abs(ubar), axis=1, keepdims=True), 1e-300)
    lower = float(np.min((ubar - 2.0 * lin) / scale))
    gseries = mesh.nodes ** (N / 2.0) * np.max(np.abs(Sg), axis=1)
    traj = Trajectory(phi.grid, mesh, ubar, {"kind": "supersolution", "q": params.q, "rho": params.rho})
    return SupersolutionResult(traj, gseries, lower)


@dataclass
class SupersolutionCheck:
    residuals: np.ndarray     # max over nodes of (F[ubar] - ubar) / scale, per time
    confirmed: bool
    T_star: float
    tolerance: float
    tail_bound: float

    def summary(self) -> dict:
        return {"confirmed": self.confirmed, "T_star": self.T_star, "tolerance": self.tolerance,
                "worst_residual": float(self.residuals.max()), "tail_bound": self.tail_bound}


def verify_supersolution(ubar: Trajectory, phi: RadialField, tol: float = 1e-6,
                         tail_model: str = "auto", engine: DuhamelEngine | None = None) -> SupersolutionCheck:
    """Compare ``F[ubar]`` with ``ubar`` at every mesh node.

    ``T_star`` is the largest mesh time such that the scaled residual is at
    most ``tol`` there and at every earlier node (0 if it fails at ``t_1``).
    """
    eng = engine or DuhamelEngine(ubar.grid, ubar.mesh)
    mode = _resolve_tail(tail_model, phi)
    q = ubar.meta.get("q", 0.0)
    expo = (1.0 + 2.0 / eng.N) * q if mode == "envelope" else None
    lin = eng.linear(phi)
    Fu, tail = eng.apply_F(lin, ubar.values, mode, expo)
    scale = np.maximum(np.max(np.abs(ubar.values), axis=1), 1e-300)
    res = np.max(Fu - ubar.values, axis=1) / scale
    res = np.where(np.max(np.abs(ubar.values), axis=1) == 0.0, np.max(Fu, axis=1), res)
    T_star = 0.0
    for t, r in zip(ubar.mesh.nodes, res):
        if r > tol:
            break
        T_star = float(t)
    confirmed = bool(np.all(res <= tol))
    return SupersolutionCheck(res, confirmed, T_star, tol, float(np.max(np.abs(tail))))


# ---------------------------------------------------------------------------
# iterations
# ---------------------------------------------------------------------------


@dataclass
class IterationReport:
    scheme: str
    distances: list
    converged: bool
    iterations: int
    residual: float
    monotonicity_margin: float | None
    domination_margin: float | None
    envelope_margin: float | None
    tail_bound: float
    trajectory: Trajectory
    messages: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"scheme": self.scheme, "distances": self.distances, "converged": self.converged,
                "iterations": self.iterations, "residual": self.residual,
                "monotonicity_margin": self.monotonicity_margin,
                "domination_margin": self.domination_margin,
                "envelope_margin": self.envelope_margin, "tail_bound": self.tail_bound,
                "messages": self.messages}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _scaled_margin(diff: np.ndarray, ref: np.ndarray) -> float:
    scale = np.maximum(np.max(np.abs(ref), axis=1, keepdims=True), 1e-300)
    return float(np.min(diff / scale))


def _iterate(scheme, phi, mesh, n_max, tol, q, tail_model, engine, ubar, envelope, slack):
    eng = engine or DuhamelEngine(phi.grid, mesh)
    N = eng.N
    mode = _resolve_tail(tail_model, phi)
    expo = (1.0 + 2.0 / N) * q if mode == "envelope" else None
    w = weight(mesh, N, q)
    lin = eng.linear(phi)
    prev = np.zeros_like(lin) if scheme == "picard" else None
    u = lin.copy()
    distances, msgs = [], []
    mono = dom = env = None
    tail = 0.0
    converged = False
    n = 1
    if scheme == "picard":
        distances.append(_weighted_distance(u, prev, w) / max(_weighted_size(u, w), 1e-300))
    while True:
        if ubar is not None:
            m = _scaled_margin(ubar - u, u)
            dom = m if dom is None else min(dom, m)
        if envelope is not None:
            m = _scaled_margin(envelope - np.abs(u), envelope)
            env = m if env is None else min(env, m)
        size = _weighted_size(u, w)
        if size == 0.0:
            converged = True
            distances.append(0.0)
            break
        if distances and distances[-1] < tol:
            converged = True
            break
        if n >= n_max:
            msgs.append(f"no convergence after {n_max} iterations")
            break
        new, tail_arr = eng.apply_F(lin, u, mode, expo)
        tail = float(np.max(np.abs(tail_arr)))
        if scheme == "monotone":
            m = _scaled_margin(new - u, new)
            mono = m if mono is None else min(mono, m)
        distances.append(_weighted_distance(new, u, w) / max(_weighted_size(new, w), 1e-300))
        u = new
        n += 1
    Fu, _ = eng.apply_F(lin, u, mode, expo)
    residual = _weighted_distance(Fu, u, w) / max(_weighted_size(u, w), 1e-300)
    if mono is not None and mono < -slack:
        msgs.append(f"monotonicity violated beyond slack: margin {mono:.3e}")
    if dom is not None and dom < -slack:
        msgs.append(f"iterate exceeds the supersolution beyond slack: margin {dom:.3e}")
    if env is not None and env < -slack:
        msgs.append(f"envelope violated beyond slack: margin {env:.3e}")
        converged = False
    traj = Trajectory(phi.grid, mesh, u, {"kind": scheme, "iterations": n})
    return IterationReport(scheme, distances, converged, n, residual, mono, dom, env, tail, traj, msgs)


def monotone_iterate(phi: RadialField, mesh: TimeMesh, ubar: Trajectory | None = None, n_max: int = 50,
                     tol: float = 1e-8, q: float | None = None, tail_model: str = "auto",
                     engine: DuhamelEngine | None = None, slack: float = 1e-6) -> IterationReport:
    """Monotone scheme ``u_1 = S(t) phi``, ``u_n = F[u_{n-1}]`` for ``phi >= 0``.

    Distances ``d_n`` are weighted sup distances of consecutive iterates,
    relative to the weighted sup norm of the newer one.
    """
    if np.any(phi.values < 0):
        raise ValueError("the monotone scheme needs nonnegative data")
    q = phi.grid.N / 2.0 if q is None else q
    return _iterate("monotone", phi, mesh, n_max, tol, q, tail_model, engine,
                    None if ubar is None else ubar.values, None, slack)


def picard_iterate(phi: RadialField, mesh: TimeMesh, envelope: Trajectory | None = None, n_max: int = 50,
                   tol: float = 1e-8, q: float | None = None, tail_model: str = "auto",
                   engine: DuhamelEngine | None = None, slack: float = 1e-6) -> IterationReport:
    """Signed scheme from ``u_0 = 0``; checks ``|u_n| <= w`` when an envelope is given."""
    q = phi.grid.N / 2.0 if q is None else q
    return _iterate("picard", phi, mesh, n_max, tol, q, tail_model, engine, None,
                    None if envelope is None else envelope.values, slack)


# ---------------------------------------------------------------------------
# contraction
# ---------------------------------------------------------------------------


@dataclass
class ContractionReport:
    T: float
    q: float
    N: int
    delta: float
    theoretical_integral: float
    weight_sup: float
    theoretical_factor: float
    measured_factor: float | None
    verdict: str
    M_u: float
    M_v: float

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in ("T", "q", "N", "delta", "theoretical_integral",
                                               "weight_sup", "theoretical_factor",
                                               "measured_factor", "verdict", "M_u", "M_v")}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def contraction_experiment(phi: RadialField, delta: float, mesh: TimeMesh, q: float,
                           n_max: int = 50, tol: float = 1e-10, slack: float = 1e-6,
                           tail_model: str = "auto") -> ContractionReport:
    """One Duhamel-difference sweep between the fixed points for ``phi`` and ``(1+delta) phi``.

    Measures ``sup_t ||D[f(u) - f(v)](t)||_1 / sup_t ||u - v||_1`` and the
    bound ``p W N (-log T)^{1-2q/N} / (2q - N)`` with
    ``W = sup_t t (-log t)^{2q/N} (||u||_inf^{2/N} + ||v||_inf^{2/N})``.
    """
    N = phi.grid.N
    if not q > N / 2.0:
        raise ValueError(f"the contraction estimate needs q > N/2 (got q={q}, N/2={N / 2}); "
                         "uniqueness for q <= N/2 in this class is not covered")
    eng = DuhamelEngine(phi.grid, mesh)
    ru = picard_iterate(phi, mesh, n_max=n_max, tol=tol, q=q, tail_model=tail_model, engine=eng)
    rv = picard_iterate(phi.scaled(1.0 + delta), mesh, n_max=n_max, tol=tol, q=q,
                        tail_model=tail_model, engine=eng)
    u, v = ru.trajectory, rv.trajectory
    T = float(mesh.T)
    a = 2.0 * q / N
    integral = log_weight_closed_form(T, a)
    t, sig = mesh.nodes, -np.log(mesh.nodes)
    W = float(np.max(t * sig**a * (u.sup_norms() ** (2.0 / N) + v.sup_norms() ** (2.0 / N))))
    p = 1.0 + 2.0 / N
    theory = p * W * integral
    M_u = weighted_supnorm_track(u, q).max
    M_v = weighted_supnorm_track(v, q).max
    diff = Trajectory(phi.grid, mesh, u.values - v.values)
    denom = float(diff.l1_norms().max())
    if denom == 0.0:
        return ContractionReport(T, q, N, delta, integral, W, theory, None, "identical trajectories", M_u, M_v)
    mode = _resolve_tail(tail_model, phi)
    expo = p * q if mode == "envelope" else None
    D, _ = eng.duhamel(nonlinearity(u.values, N) - nonlinearity(v.values, N), mode, expo)
    num = float(Trajectory(phi.grid, mesh, D).l1_norms().max())
    factor = num / denom
    verdict = "contractive" if factor <= 0.5 + slack else "not contractive"
    if not (ru.converged and rv.converged):
        verdict += " (fixed points not converged)"
    return ContractionReport(T, q, N, delta, integral, W, theory, factor, verdict, M_u, M_v)
