"""Initial data: the singular profiles, Gaussians, caps, parabolic rescaling,
and the ball-mass growth test for nonnegative data.

The singular family is

    phi0(r) = r^-N (-log r)^(-N/2 - 1 + eps),   psi(r) = r^-N (-log r)^(-N/2 - 1)

for ``r < 1/e`` and zero beyond. Both are in ``L^1``; ``psi`` sits exactly
on the borderline rate ``int_B(tau) psi ~ (-log tau)^(-N/2)`` and ``phi0``
exceeds it by the factor ``(-log tau)^eps``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize as _spo

from .grids import E_INV, ConstantCore, PowerLogCore, RadialField, RadialGrid, radial_quadrature
from .heatsemigroup import gaussian_profile

KINDS = ("phi0", "psi", "gaussian", "truncated", "scaled")


@dataclass(frozen=True)
class DataSpec:
    """Description of an initial datum; build with the module-level helpers."""

    kind: str
    N: int
    eps: float = 0.0
    q: float | None = None
    t0: float = 0.0
    mass: float = 1.0
    cap: float | None = None
    lam: float = 1.0
    base: "DataSpec | None" = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown data kind {self.kind!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.kind == "phi0":
            if not 0.0 < self.eps < self.N / 2.0:
                raise ValueError("phi0 needs 0 < eps < N/2 to be integrable")
            if self.q is not None and not self.eps < self.N / 2.0 - self.q:
                warnings.warn(f"eps={self.eps} is outside (0, N/2 - q) for q={self.q}; "
                              "phi0 is then not certified to lie in X_q", RuntimeWarning, stacklevel=3)
        if self.kind == "gaussian" and not (self.t0 > 0 and self.mass > 0):
            raise ValueError("gaussian needs t0 > 0 and mass > 0")
        if self.kind == "truncated" and not (self.cap is not None and self.cap > 0):
            raise ValueError("cap M must be positive")
        if self.kind == "scaled" and not self.lam > 0:
            raise ValueError("scaling factor lambda must be positive")
        if self.kind in ("truncated", "scaled") and self.base is None:
            raise ValueError(f"{self.kind} needs a base datum")

    @property
    def exponent(self) -> float:
        """Power ``b`` of ``(-log r)^-b`` for the singular kinds."""
        if self.kind == "phi0":
            return self.N / 2.0 + 1.0 - self.eps
        if self.kind == "psi":
            return self.N / 2.0 + 1.0
        if self.base is not None:
            return self.base.exponent
        raise ValueError("gaussian data have no log exponent")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "N": self.N}
        if self.kind == "phi0":
            d["eps"] = self.eps
            if self.q is not None:
                d["q"] = self.q
        elif self.kind == "gaussian":
            d.update(t0=self.t0, mass=self.mass)
        elif self.kind == "truncated":
            d.update(cap=self.cap, base=self.base.to_dict())
        elif self.kind == "scaled":
            d.update(lam=self.lam, base=self.base.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DataSpec":
        kind = d["kind"]
        if kind in ("truncated", "scaled"):
            base = cls.from_dict(d["base"])
            if kind == "truncated":
                return truncated(base, d["cap"])
            return scaled(base, d["lam"])
        if kind == "phi0":
            return phi0(d["N"], d["eps"], d.get("q"))
        if kind == "psi":
            return psi(d["N"])
        if kind == "gaussian":
            return gaussian(d["N"], d["t0"], d.get("mass", 1.0))
        raise ValueError(f"unknown data kind {kind!r}")


def phi0(N: int, eps: float, q: float | None = None) -> DataSpec:
    return DataSpec("phi0", N, eps=eps, q=q)


def psi(N: int) -> DataSpec:
    return DataSpec("psi", N)


def gaussian(N: int, t0: float, mass: float = 1.0) -> DataSpec:
    """``mass * G_t0``, the heat kernel at time ``t0`` scaled to the given mass."""
    return DataSpec("gaussian", N, t0=t0, mass=mass)


def truncated(base: DataSpec, cap: float) -> DataSpec:
    return DataSpec("truncated", base.N, cap=float(cap), base=base)


def scaled(base: DataSpec, lam: float) -> DataSpec:
    """``lam^N * base(lam r)``, the critical rescaling at ``p = 1 + 2/N``."""
    return DataSpec("scaled", base.N, lam=float(lam), base=base)


def _profile(spec: DataSpec, r: np.ndarray) -> np.ndarray:
    N = spec.N
    if spec.kind in ("phi0", "psi"):
        out = np.zeros_like(r)
        inside = r < E_INV
        ri = r[inside]
        out[inside] = np.exp(-N * np.log(ri) - spec.exponent * np.log(-np.log(ri)))
        return out
    if spec.kind == "gaussian":
        return gaussian_profile(N, spec.t0, r, spec.mass)
    if spec.kind == "truncated":
        return np.minimum(_profile(spec.base, r), spec.cap)
    return spec.lam**N * _profile(spec.base, spec.lam * r)


def _core(spec: DataSpec, r_min: float):
    """Core model of ``spec`` on ``B(r_min)``."""
    N = spec.N
    if spec.kind in ("phi0", "psi"):
        if r_min >= E_INV:
            return ConstantCore(0.0)
        return PowerLogCore(spec.exponent)
    if spec.kind == "gaussian":
        return ConstantCore(float(gaussian_profile(N, spec.t0, 0.0, spec.mass)))
    if spec.kind == "truncated":
        base = _core(spec.base, r_min)
        if isinstance(base, ConstantCore):
            return ConstantCore(min(base.value, spec.cap))
        cap = spec.cap if base.cap is None else min(base.cap, spec.cap)
        return replace(base, cap=cap)
    lam = spec.lam
    base = _core(spec.base, lam * r_min)
    if isinstance(base, ConstantCore):
        return ConstantCore(lam**N * base.value)
    cap = None if base.cap is None else lam**N * base.cap
    return PowerLogCore(base.b, base.shift - math.log(lam), cap)


def breakpoints(spec: DataSpec, r_max: float = 1e3) -> list[float]:
    """Radii where the profile of ``spec`` jumps or has a kink.

    Pass them to :func:`critheat.grids.build_radial_grid` so that no panel
    interpolates across them.
    """
    if spec.kind in ("phi0", "psi"):
        return [E_INV]
    if spec.kind == "gaussian":
        return []
    if spec.kind == "scaled":
        return [r / spec.lam for r in breakpoints(spec.base, r_max * spec.lam)]
    out = breakpoints(spec.base, r_max)
    out.extend(_cap_crossings(spec.base, spec.cap, r_max))
    return sorted(set(out))


def _cap_crossings(base: DataSpec, cap: float, r_max: float) -> list[float]:
    """Radii where ``base`` crosses the level ``cap`` (sign changes on a fine log grid)."""
    x = np.linspace(-690.0, math.log(r_max), 40_001)
    with np.errstate(over="ignore", invalid="ignore"):
        f = lambda xx: np.log(np.maximum(_profile(base, np.exp(np.atleast_1d(xx))), 1e-300)) - math.log(cap)
        v = f(x)
    idx = np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)
    roots = []
    for i in idx:
        xr = _spo.brentq(lambda z: float(f(z)[0]), x[i], x[i + 1], xtol=1e-14, rtol=1e-15)
        roots.append(math.exp(xr))
    return roots


def materialize(spec: DataSpec, grid: RadialGrid) -> RadialField:
    """Sample ``spec`` at the grid nodes and attach the matching core model."""
    if spec.N != grid.N:
        raise ValueError("data and grid dimensions differ")
    if spec.kind == "scaled" and spec.lam * grid.r_min >= E_INV:
        raise ValueError("scaling pushes the inner cutoff past the data support")
    vals = _profile(spec, grid.nodes)
    return RadialField(grid, vals, _core(spec, grid.r_min))


def ball_mass(phi: RadialField, tau: float) -> float:
    """Integral of ``phi`` over ``B(tau)``; below ``r_min`` the core model alone answers."""
    g = phi.grid
    if not 0 < tau <= g.R:
        raise ValueError("need 0 < tau <= R")
    if tau < g.r_min:
        warnings.warn("tau is below the grid; the value comes from the core model only",
                      RuntimeWarning, stacklevel=2)
    return radial_quadrature(phi, upper=tau).value


def ball_mass_closed_form(spec: DataSpec, grid: RadialGrid, tau: float) -> float:
    """Exact ``int_B(tau) phi`` for ``phi0`` and ``psi`` (``tau <= 1/e``)."""
    if spec.kind not in ("phi0", "psi"):
        raise ValueError("closed form only for phi0 and psi")
    a = spec.exponent - 1.0
    return grid.omega * (-math.log(min(tau, E_INV))) ** (-a) / a


# ---------------------------------------------------------------------------
# ball-mass growth test
# ---------------------------------------------------------------------------


def default_tau_series(growth: float = 1.5, start: float = 3.0, stop: float = 30.0) -> np.ndarray:
    """``tau`` with ``-log tau`` geometric from ``start`` to ``stop`` (``stop`` included)."""
    sig = [start]
    while sig[-1] * growth < stop * (1 - 1e-12):
        sig.append(sig[-1] * growth)
    if sig[-1] < stop:
        sig.append(stop)
    return np.exp(-np.array(sig))


@dataclass
class BarasPierreReport:
    tau: np.ndarray
    mass: np.ndarray
    ratio: np.ndarray
    slope: float
    slope_stderr: float
    fit_window: tuple
    verdict: str
    gamma0_empirical: float | None
    slope_min: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "mass", "ratio"])
            for row in zip(self.tau, self.mass, self.ratio):
                w.writerow([f"{v:.17g}" for v in row])

    def summary(self) -> dict:
        return {"slope": self.slope, "slope_stderr": self.slope_stderr, "verdict": self.verdict,
                "gamma0_empirical": self.gamma0_empirical, "slope_min": self.slope_min,
                "fit_window_minus_log_tau": list(self.fit_window)}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def baras_pierre_report(phi: RadialField, tau_series=None, slope_min: float = 0.02) -> BarasPierreReport:
    """Growth of ``int_B(tau) phi / (-log tau)^(-N/2)`` as ``tau -> 0``.

    The slope of ``log ratio`` against ``log(-log tau)`` is fitted on the
    smallest-``tau`` half of the series. The verdict is ``diverging`` when the
    slope is at least ``slope_min`` and the ratio increases at every step over
    the last decade of ``-log tau``; otherwise ``bounded`` with the largest
    observed ratio as the empirical constant.
    """
    if np.any(phi.values < 0):
        raise ValueError("the ball-mass test needs nonnegative data")
    tau = default_tau_series() if tau_series is None else np.asarray(tau_series, dtype=float)
    order = np.argsort(-tau)
    tau = tau[order]
    if np.any(np.diff(tau) >= 0) or tau[0] >= 1.0 or tau.size < 3:
        raise ValueError("tau series must hold at least 3 distinct values in (0, 1)")
    N = phi.grid.N
    sig = -np.log(tau)
    mass = np.array([ball_mass(phi, t) for t in tau])
    ratio = mass / sig ** (-N / 2.0)
    half = slice(tau.size // 2, None)
    x = np.log(sig[half])
    with np.errstate(divide="ignore"):
        y = np.log(ratio[half])
    if not np.all(np.isfinite(y)):
        slope, stderr = -math.inf, 0.0
    else:
        A = np.vstack([x, np.ones_like(x)]).T
        coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
        slope = float(coef[0])
        dof = max(1, x.size - 2)
        resid = y - A @ coef
        sxx = float(np.sum((x - x.mean()) ** 2))
        stderr = float(math.sqrt(np.sum(resid**2) / dof / sxx)) if sxx > 0 else 0.0
    decade = sig >= sig[-1] / 10.0
    increasing = bool(np.all(np.diff(ratio[decade]) > 0))
    diverging = slope >= slope_min and increasing
    return BarasPierreReport(tau, mass, ratio, slope, stderr, (float(sig[half][0]), float(sig[-1])),
                             "diverging" if diverging else "bounded",
                             None if diverging else float(ratio.max()), slope_min)
