"""The weight ``g(u) = u [log(rho + |u|)]^q`` and its relatives.

Everything here acts on ``s >= 0``; call sites that need signed arguments
use the odd extension themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as _spo

from .grids import ConstantCore, RadialField, radial_quadrature
from .heatsemigroup import apply_semigroup

_TINY = 1e-300


@dataclass(frozen=True)
class GParams:
    """Exponent ``q`` and base ``rho`` of ``g``, in dimension ``N``."""

    q: float
    rho: float
    N: int = 1

    def __post_init__(self):
        if not self.q >= 0:
            raise ValueError("q must be nonnegative")
        if not self.rho > 1:
            raise ValueError("rho must exceed 1")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")

    @property
    def p(self) -> float:
        return 1.0 + 2.0 / self.N

    @property
    def convex(self) -> bool:
        return self.rho >= math.e

    @property
    def power_threshold(self) -> float:
        return math.exp(self.q / (self.p - 1.0))

    @property
    def power_monotone(self) -> bool:
        return self.rho > self.power_threshold

    def to_dict(self) -> dict:
        return {"q": self.q, "rho": self.rho, "N": self.N, "convex": self.convex,
                "power_monotone": self.power_monotone}


def default_params(N: int, q: float | None = None) -> GParams:
    """``rho = max(e, e^{q/(p-1)})``, with ``q = N/2`` unless given."""
    q = N / 2.0 if q is None else q
    p = 1.0 + 2.0 / N
    return GParams(q=q, rho=max(math.e, math.exp(q / (p - 1.0))), N=N)


def _check_domain(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("g and its relatives are defined for s >= 0 only")
    return s


def _log(s, params):
    return np.log(params.rho + s)


def g_eval(s, params: GParams):
    s = _check_domain(s)
    return s * _log(s, params) ** params.q


def g_prime(s, params: GParams):
    s = _check_domain(s)
    L, q = _log(s, params), params.q
    return L ** (q - 1.0) * (L + q * s / (s + params.rho))


def g_second(s, params: GParams):
    s = _check_domain(s)
    L, q, rho = _log(s, params), params.q, params.rho
    return q * L ** (q - 2.0) / (s + rho) ** 2 * (s * (L + q - 1.0) + 2.0 * rho * L)


def g1_eval(s, params: GParams):
    s = _check_domain(s)
    return s * _log(s, params) ** (-params.q)


def g_inverse(s, params: GParams, tol: float = 1e-14, max_iter: int = 100):
    """Solve ``g(y) = s`` by safeguarded Newton (bisection fallback).

    For ``rho >= e`` the root lies in ``[g1(s), s]``; otherwise the bracket
    is ``[0, hi]`` with ``hi`` grown until ``g(hi) >= s``.
    """
    s = _check_domain(s)
    shape = s.shape
    s = s.astype(float).ravel()
    if params.q == 0.0:
        return s.copy().reshape(shape)
    if params.convex:
        lo, hi = g1_eval(s, params), s.copy()
    else:
        lo, hi = np.zeros_like(s), np.maximum(s, 1.0)
        while np.any(g_eval(hi, params) < s):
            hi = np.where(g_eval(hi, params) < s, 2.0 * hi, hi)
    y = lo.copy()
    active = s > 0
    y[~active] = 0.0
    for _ in range(max_iter):
        if not active.any():
            break
        ya, sa = y[active], s[active]
        res = g_eval(ya, params) - sa
        done = np.abs(res) <= tol * np.maximum(sa, _TINY)
        lo_a, hi_a = lo[active], hi[active]
        lo_a = np.where(res < 0, ya, lo_a)
        hi_a = np.where(res > 0, ya, hi_a)
        step = ya - res / g_prime(ya, params)
        bad = ~((step > lo_a) & (step < hi_a))
        step = np.where(bad, 0.5 * (lo_a + hi_a), step)
        narrow = (hi_a - lo_a) <= 4.0 * np.finfo(float).eps * np.maximum(hi_a, _TINY)
        done |= narrow
        y[active] = np.where(done, ya, step)
        lo[active], hi[active] = lo_a, hi_a
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    else:
        if active.any():
            raise RuntimeError("g_inverse failed to converge inside a valid bracket")
    return y.reshape(shape)


def g_odd(u, params: GParams):
    """Odd extension ``g(u) = sign(u) g(|u|)`` for signed arguments."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * g_eval(np.abs(u), params)


# ---------------------------------------------------------------------------
# property checks
# ---------------------------------------------------------------------------


@dataclass
class PropertyResult:
    name: str
    applicable: bool
    passed: bool
    worst_margin: float
    offending: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "applicable": self.applicable, "passed": self.passed,
                "worst_margin": self.worst_margin, "offending": self.offending[:20]}


@dataclass
class GPropertyReport:
    params: GParams
    sample_count: int
    properties: dict
    C1: float

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.properties.values() if r.applicable)

    def summary(self) -> dict:
        return {"params": self.params.to_dict(), "sample_count": self.sample_count,
                "C1_empirical": self.C1, "all_passed": self.all_passed,
                "properties": {k: v.to_dict() for k, v in self.properties.items()}}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def sample_points(count: int = 10_000, s_max: float = 1e8, s_min: float = 1e-8) -> np.ndarray:
    """``0`` followed by ``count - 1`` log-spaced points in ``[s_min, s_max]``."""
    if count < 2 or not 0 < s_min < s_max:
        raise ValueError("need count >= 2 and 0 < s_min < s_max")
    return np.concatenate([[0.0], np.geomspace(s_min, s_max, count - 1)])


def _result(name, applicable, margins, s, slack):
    margins = np.asarray(margins, dtype=float)
    worst = float(margins.min()) if margins.size else 0.0
    bad = s[margins < -slack]
    return PropertyResult(name, applicable, bool(worst >= -slack), worst, [float(x) for x in bad])


def empirical_C1(s, params: GParams) -> tuple[float, np.ndarray]:
    """Least ``c(s)`` with ``g^{-1}(s) <= g1(c s)`` at each positive sample, and their max."""
    s = np.asarray(s, dtype=float)
    pos = s[s > 0]
    target = g_inverse(pos, params)
    c = np.empty_like(pos)
    for k, (sk, tk) in enumerate(zip(pos, target)):
        # g1(y) < target at y = target (log(rho + y) > 1 when rho >= e); grow hi
        lo = tk if params.convex else 0.0
        hi = max(sk, tk, 1.0)
        while g1_eval(hi, params) < tk:
            hi *= 2.0
        if g1_eval(lo, params) >= tk:
            c[k] = lo / sk
            continue
        y = _spo.brentq(lambda v: float(g1_eval(v, params)) - tk, lo, hi, xtol=1e-300, rtol=1e-15)
        c[k] = y / sk
    return (float(c.max()) if c.size else 0.0), c


def check_g_properties(params: GParams, sample_spec: dict | None = None, slack: float = 1e-10) -> GPropertyReport:
    """Check the five pointwise properties of ``g`` on a sample of ``s``.

    Margins are relative and negative margins are violations. Properties whose
    hypotheses on ``rho`` fail are still evaluated but marked not applicable.
    """
    spec = dict(count=10_000, s_max=1e8, s_min=1e-8)
    spec.update(sample_spec or {})
    s = sample_points(int(spec["count"]), float(spec["s_max"]), float(spec["s_min"]))
    sp = s[s > 0]
    q, rho = params.q, params.rho
    L = _log(sp, params)
    props = {}

    # (i) sign of the bracket in g'
    b1 = L + q * sp / (sp + rho)
    props["i"] = _result("g' > 0", params.rho > 1, b1 / (np.abs(L) + q * sp / (sp + rho)), sp, slack)
    # (ii) sign of the bracket in g''
    b2 = sp * (L + q - 1.0) + 2.0 * rho * L
    n2 = sp * (np.abs(L) + abs(q - 1.0)) + 2.0 * rho * np.abs(L)
    props["ii"] = _result("g'' > 0", params.convex and q > 0, b2 / n2, sp, slack)

    inv = g_inverse(sp, params)
    # (iii) g1(s) <= g^{-1}(s)
    props["iii"] = _result("g1 <= g^-1", params.convex, (inv - g1_eval(sp, params)) / inv, sp, slack)
    # (iv) g^{-1}(s) <= g1(C1 s)
    C1, _ = empirical_C1(sp, params)
    m4 = (g1_eval(C1 * sp, params) - inv) / inv
    r4 = _result("g^-1 <= g1(C1 s)", True, m4, sp, slack)
    r4.passed = r4.passed and math.isfinite(C1)
    props["iv"] = r4
    # (v) g^{-1}(s)^p / s nondecreasing, written as tau^{p-1} / log(rho + tau)^q
    ratio = np.concatenate([[0.0], inv ** (params.p - 1.0) / _log(inv, params) ** q])
    d = np.diff(ratio) / np.maximum(np.maximum(ratio[1:], ratio[:-1]), _TINY)
    props["v"] = _result("g^-1(s)^p / s nondecreasing", rho >= params.power_threshold, d, s[1:], slack)
    return GPropertyReport(params, int(s.size), props, C1)


# ---------------------------------------------------------------------------
# field functionals
# ---------------------------------------------------------------------------


def _log_rho_exp(lf: float, rho: float) -> float:
    """``log(rho + e^lf)`` without overflow for large ``lf``."""
    if lf > 0:
        return lf + math.log1p(rho * math.exp(-lf))
    return math.log(rho + math.exp(lf))


def apply_g(phi: RadialField, params: GParams) -> RadialField:
    """``g(phi)`` for ``phi >= 0``, with the core mass carried exactly."""
    if np.any(phi.values < 0):
        raise ValueError("apply_g expects a nonnegative field")
    g = phi.grid
    vals = g_eval(phi.values, params)
    h = lambda lf: _log_rho_exp(lf, params.rho) ** params.q
    mass = phi.core.weighted_integral(g.N, g.r_min, h)
    return RadialField(g, vals, ConstantCore(g.N * mass / g.r_min**g.N))


def xq_norm(phi: RadialField, q: float, rho: float = math.e) -> float:
    """``int |phi| [log(rho + |phi|)]^q dx``; ``rho = e`` gives the ``X_q`` functional."""
    if q < 0 or not rho > 1:
        raise ValueError("need q >= 0 and rho > 1")
    g = phi.grid
    h = lambda lf: _log_rho_exp(lf, rho) ** q
    core = phi.core.weighted_integral(g.N, g.r_min, h)
    transform = lambda v: np.abs(v) * np.log(rho + np.abs(v)) ** q
    return radial_quadrature(phi, transform=transform, core_integral=core).value


@dataclass(frozen=True)
class JensenResult:
    margin: float
    scale: float
    t: float

    @property
    def relative(self) -> float:
        return self.margin / self.scale if self.scale > 0 else 0.0


def jensen_check(phi: RadialField, t: float, params: GParams) -> JensenResult:
    """Worst nodal margin of ``g^{-1}(S(t) g(phi)) - S(t) phi``."""
    if np.any(phi.values < 0):
        raise ValueError("jensen_check expects a nonnegative field")
    if not params.convex:
        raise ValueError("jensen_check needs rho >= e")
    lin = apply_semigroup(phi, t).values
    gphi = apply_semigroup(apply_g(phi, params), t).values
    rhs = g_inverse(np.maximum(gphi, 0.0), params)
    scale = float(np.max(np.abs(lin)))
    return JensenResult(float(np.min(rhs - lin)), scale, float(t))
