"""Batch experiment runner.

A config is a JSON document (or a list of them) with a ``scenario`` key.
Each run writes ``<outdir>/<scenario>/<config-hash>/`` holding a
deterministic ``report.json``, CSV series, and ``record.json`` (the run
record with timestamps and the file list).

Exit status: 0 when every check passes, 1 when some check failed, 2 on a
configuration error (nothing is written then).
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import duhamel as dh
from . import gtool, heatsemigroup as hs, initdata as idt
from .grids import T_MAX, build_radial_grid, build_time_mesh, integrate_radial, refine_mesh

SCENARIOS = {
    "existence": "supersolution, monotone and Picard iterations, weighted sup-norm track",
    "nonexistence": "ball-mass growth test on phi0 against the borderline psi",
    "uniqueness": "one-sweep Duhamel contraction between nearby fixed points",
    "smoothing": "L^alpha to L^beta smoothing ratios of the heat semigroup",
    "gprops": "pointwise properties of g and the Jensen comparison",
    "scaling": "L^1 invariance and ball-mass covariance under critical rescaling",
}

DEFAULT_TOLERANCES = {
    "iteration": 1e-8,          # relative weighted distance for stopping
    "slack": 1e-6,              # monotonicity / domination / envelope slack (relative)
    "supersolution": 1e-6,      # admissible scaled residual of F[ubar] - ubar
    "refinement": 0.10,         # relative change of max m(t) under mesh refinement
    "symmetry": 1e-12,          # odd symmetry of signed fixed points (relative)
    "g_properties": 1e-10,
    "jensen": 1e-8,
    "smoothing": 1e-6,
    "l1_invariance": 1e-8,
    "mass_covariance": 1e-6,
    "contraction": 0.5,
}

GRID_KEYS = {"N", "n", "R", "r_min", "split", "r_split", "cluster_levels", "align_breakpoints"}
MESH_KEYS = {"t1", "T", "m"}
TOP_KEYS = {"scenario", "grid", "mesh", "data", "params", "tolerances", "outdir", "refine", "delta",
            "tau_series", "alpha", "beta", "C0", "lambdas", "taus", "sample_spec", "jensen_times",
            "tail_model", "n_max", "slope_min", "name"}


class ConfigError(Exception):
    """Raised with the complete list of problems found in a config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    scenario: str
    grid: dict
    mesh: dict
    data: dict | None
    params: dict | None
    tolerances: dict
    options: dict
    outdir: str | None = None

    def canonical(self) -> dict:
        return {"scenario": self.scenario, "grid": self.grid, "mesh": self.mesh, "data": self.data,
                "params": self.params, "tolerances": self.tolerances, "options": self.options}

    @property
    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    config_hash: str
    scenario: str
    started: str
    finished: str
    checks: dict
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json(self) -> str:
        return json.dumps({"config_hash": self.config_hash, "scenario": self.scenario,
                           "started": self.started, "finished": self.finished,
                           "passed": self.passed, "checks": self.checks, "files": self.files},
                          sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _num(d, key, errors, where, default=None, positive=False, integer=False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{where}.{key} must be a number")
        return None
    if integer and int(v) != v:
        errors.append(f"{where}.{key} must be an integer")
        return None
    if positive and not v > 0:
        errors.append(f"{where}.{key} must be positive")
    return int(v) if integer else float(v)


def _default_q(scenario: str, N: int) -> float:
    return {"uniqueness": N / 2.0 + 0.5, "nonexistence": N / 4.0}.get(scenario, N / 2.0)


def _validate_data(d, N, scenario, errors, where="data"):
    if not isinstance(d, dict):
        errors.append(f"{where} must be an object")
        return None
    kind = d.get("kind")
    known = {"kind", "N", "eps", "q", "t0", "mass", "cap", "lam", "base", "variance"}
    for k in sorted(set(d) - known):
        errors.append(f"{where}: unknown key {k!r}")
    out = {"kind": kind, "N": N}
    if "N" in d and d["N"] != N:
        errors.append(f"{where}.N={d['N']} differs from grid N={N}")
    if kind == "phi0":
        q = _num(d, "q", errors, where)
        eps = _num(d, "eps", errors, where)
        if eps is None:
            # (N/2 - q)/2 for the datum's own class; N/4 when no q < N/2 applies
            qq = q if q is not None else _default_q(scenario, N)
            qq = qq if 0 <= qq < N / 2.0 else 0.0
            eps = (N / 2.0 - qq) / 2.0
        if not 0 < eps < N / 2.0:
            errors.append(f"{where}.eps={eps} must satisfy 0 < eps < N/2 = {N / 2} for phi0 to be integrable")
        if q is not None and not eps < N / 2.0 - q:
            errors.append(f"{where}.eps={eps} must satisfy eps < N/2 - q = {N / 2 - q} for X_q membership")
        if q is not None and not 0 <= q < N / 2.0:
            errors.append(f"{where}.q={q} must satisfy 0 <= q < N/2 for the phi0 family")
        out.update(eps=eps)
        if q is not None:
            out["q"] = q
    elif kind == "psi":
        pass
    elif kind == "gaussian":
        t0 = _num(d, "t0", errors, where)
        if t0 is None and "variance" in d:
            var = _num(d, "variance", errors, where, positive=True)
            t0 = None if var is None else var / 2.0
        if t0 is None:
            errors.append(f"{where}: gaussian needs t0 (or variance = 2 t0)")
        elif not t0 > 0:
            errors.append(f"{where}.t0 must be positive")
        mass = _num(d, "mass", errors, where, default=1.0, positive=True)
        out.update(t0=t0, mass=mass)
    elif kind in ("truncated", "scaled"):
        key = "cap" if kind == "truncated" else "lam"
        val = _num(d, key, errors, where, positive=True)
        if val is None:
            errors.append(f"{where}: {kind} needs {key}")
        if "base" not in d:
            errors.append(f"{where}: {kind} needs a base datum")
            return None
        base = _validate_data(d["base"], N, scenario, errors, where + ".base")
        out.update({key: val, "base": base})
    else:
        errors.append(f"{where}.kind={kind!r} is not one of phi0, psi, gaussian, truncated, scaled")
        return None
    return out


def validate_config(document) -> ExperimentConfig:
    """Parse and check a config; raises :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"parse failure: {exc}"]) from None
    if not isinstance(document, dict):
        raise ConfigError(["config must be a JSON object"])
    doc = copy.deepcopy(document)
    for k in sorted(set(doc) - TOP_KEYS):
        errors.append(f"unknown key {k!r}")
    scenario = doc.get("scenario")
    if scenario not in SCENARIOS:
        errors.append(f"scenario {scenario!r} is not one of {sorted(SCENARIOS)}")

    # grid
    graw = doc.get("grid", {})
    if not isinstance(graw, dict):
        errors.append("grid must be an object")
        graw = {}
    for k in sorted(set(graw) - GRID_KEYS):
        errors.append(f"grid: unknown key {k!r}")
    dN = doc.get("data", {}).get("N") if isinstance(doc.get("data"), dict) else None
    N = _num(graw, "N", errors, "grid", default=dN if dN is not None else 1, integer=True)
    if N is not None and N < 1:
        errors.append("grid.N must be >= 1")
        N = None
    Nv = N or 1
    R = _num(graw, "R", errors, "grid", default=20.0, positive=True)
    r_min = _num(graw, "r_min", errors, "grid", default=(R or 20.0) * math.exp(-40.0))
    if r_min is not None and not r_min > 0:
        errors.append("grid.r_min must be positive")
    elif r_min is not None and R is not None and not R > r_min:
        errors.append("grid.R must exceed grid.r_min")
    n = _num(graw, "n", errors, "grid", default=1024, integer=True)
    if n is not None and (n < 16 or n % 8):
        errors.append("grid.n must be a multiple of 8 and at least 16")
    split = _num(graw, "split", errors, "grid", default=0.75)
    if split is not None and not 0 <= split <= 1:
        errors.append("grid.split must lie in [0, 1]")
    cl = _num(graw, "cluster_levels", errors, "grid", default=16, integer=True)
    grid = {"N": N, "n": n, "R": R, "r_min": r_min, "split": split, "cluster_levels": cl,
            "align_breakpoints": bool(graw.get("align_breakpoints", True))}
    if "r_split" in graw:
        grid["r_split"] = _num(graw, "r_split", errors, "grid", positive=True)

    # mesh
    mraw = doc.get("mesh", {})
    if not isinstance(mraw, dict):
        errors.append("mesh must be an object")
        mraw = {}
    for k in sorted(set(mraw) - MESH_KEYS):
        errors.append(f"mesh: unknown key {k!r}")
    t1 = _num(mraw, "t1", errors, "mesh", default=math.exp(-30.0), positive=True)
    T = _num(mraw, "T", errors, "mesh", default=math.exp(-8.0), positive=True)
    m = _num(mraw, "m", errors, "mesh", default=48, integer=True)
    if T is not None and not T < T_MAX:
        errors.append(f"mesh.T={T} must be below e^-2 so that -log t >= 2 on the mesh")
    if t1 is not None and T is not None and not t1 < T:
        errors.append("mesh.t1 must be smaller than mesh.T")
    if m is not None and m < 2:
        errors.append("mesh.m must be at least 2")
    mesh = {"t1": t1, "T": T, "m": m}

    # params
    praw = doc.get("params", {}) or {}
    if not isinstance(praw, dict):
        errors.append("params must be an object")
        praw = {}
    for k in sorted(set(praw) - {"q", "rho"}):
        errors.append(f"params: unknown key {k!r}")
    q = _num(praw, "q", errors, "params", default=_default_q(scenario, Nv))
    if q is not None and q < 0:
        errors.append("params.q must be nonnegative")
    rho_default = max(math.e, math.exp((q or 0.0) / (2.0 / Nv)))
    rho = _num(praw, "rho", errors, "params", default=rho_default)
    if rho is not None and not rho > 1:
        errors.append("params.rho must exceed 1")
    params = {"q": q, "rho": rho}
    if scenario == "uniqueness" and q is not None and not q > Nv / 2.0:
        errors.append(f"uniqueness needs q > N/2 (got q={q}, N/2={Nv / 2}); the contraction "
                      "estimate in the weighted class is established only for q > N/2")
    if scenario == "existence" and q is not None and q < Nv / 2.0:
        errors.append(f"existence needs q >= N/2 (got q={q})")
    if scenario in ("existence",) and rho is not None and q is not None and rho < rho_default * (1 - 1e-12):
        errors.append(f"existence needs rho >= max(e, e^(q/(p-1))) = {rho_default:.6g}")

    # data
    data_default = {
        "existence": {"kind": "gaussian", "t0": 1e-3, "mass": 1e-3},
        "uniqueness": {"kind": "gaussian", "t0": 1e-3, "mass": 1e-3},
        "nonexistence": {"kind": "phi0"},
        "smoothing": {"kind": "truncated", "cap": 1e4, "base": {"kind": "phi0"}},
        "gprops": {"kind": "truncated", "cap": 1e4, "base": {"kind": "phi0"}},
        "scaling": {"kind": "gaussian", "t0": 1e-3},
    }.get(scenario)
    draw = doc.get("data", data_default)
    data = _validate_data(draw, Nv, scenario, errors) if draw is not None else None

    # tolerances
    tol = dict(DEFAULT_TOLERANCES)
    traw = doc.get("tolerances", {}) or {}
    if not isinstance(traw, dict):
        errors.append("tolerances must be an object")
        traw = {}
    for k, v in traw.items():
        if k not in DEFAULT_TOLERANCES:
            errors.append(f"tolerances: unknown key {k!r}")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            errors.append(f"tolerances.{k} must be a positive number")
        else:
            tol[k] = float(v)

    # scenario options
    opts = {}
    tm = doc.get("tail_model", "auto")
    if tm not in dh.TAIL_MODELS:
        errors.append(f"tail_model must be one of {dh.TAIL_MODELS}")
    opts["tail_model"] = tm
    opts["n_max"] = _num(doc, "n_max", errors, "config", default=50, integer=True)
    if scenario == "existence":
        opts["refine"] = bool(doc.get("refine", True))
    if scenario == "uniqueness":
        opts["delta"] = _num(doc, "delta", errors, "config", default=0.01)
    if scenario == "nonexistence":
        ts = doc.get("tau_series")
        if ts is not None and (not isinstance(ts, list) or len(ts) < 3
                               or not all(isinstance(x, (int, float)) and 0 < x < math.exp(-1) for x in ts)):
            errors.append("tau_series must list at least 3 values in (0, 1/e)")
        opts["tau_series"] = ts
        opts["slope_min"] = _num(doc, "slope_min", errors, "config", default=0.02, positive=True)
        if data is not None and data.get("kind") != "phi0":
            errors.append("nonexistence expects phi0 data")
    if scenario == "smoothing":
        a = doc.get("alpha", 1)
        b = doc.get("beta", "inf")
        av = math.inf if a == "inf" else a
        bv = math.inf if b == "inf" else b
        if not all(isinstance(x, (int, float)) for x in (av, bv)) or not 1 <= av <= bv:
            errors.append("smoothing needs 1 <= alpha <= beta (beta may be \"inf\")")
        opts.update(alpha=a, beta=b, C0=_num(doc, "C0", errors, "config", default=0.01, positive=True))
    if scenario == "gprops":
        ss = doc.get("sample_spec", {"count": 10000, "s_max": 1e8})
        if not isinstance(ss, dict) or not set(ss) <= {"count", "s_max", "s_min"}:
            errors.append("sample_spec may only hold count, s_max, s_min")
        opts["sample_spec"] = ss
        jt = doc.get("jensen_times", [1e-4, 1e-3, 1e-2])
        if not isinstance(jt, list) or not all(isinstance(x, (int, float)) and x > 0 for x in jt):
            errors.append("jensen_times must list positive times")
        opts["jensen_times"] = jt
        if rho is not None and rho < math.e:
            opts["jensen_skipped"] = True
    if scenario == "scaling":
        lams = doc.get("lambdas", [0.5, 2.0, 8.0])
        taus = doc.get("taus", [1e-3, 1e-2, 3e-2])
        if not isinstance(lams, list) or not all(isinstance(x, (int, float)) and x > 0 for x in lams):
            errors.append("lambdas must list positive numbers")
        if not isinstance(taus, list) or not all(isinstance(x, (int, float)) and x > 0 for x in taus):
            errors.append("taus must list positive radii")
        opts.update(lambdas=lams, taus=taus)

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(scenario, grid, mesh, data, params, tol, opts, doc.get("outdir"))


# ---------------------------------------------------------------------------
# scenario runners
# ---------------------------------------------------------------------------


def _check(passed, value=None, threshold=None, note=None) -> dict:
    out = {"passed": bool(passed)}
    if value is not None:
        out["value"] = _clean(value)
    if threshold is not None:
        out["threshold"] = _clean(threshold)
    if note:
        out["note"] = note
    return out


def _clean(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    return x


def _build(cfg: ExperimentConfig, extra_breaks=()):
    spec = idt.DataSpec.from_dict(cfg.data) if cfg.data else None
    g = cfg.grid
    bps = list(extra_breaks)
    if g["align_breakpoints"] and spec is not None:
        bps += idt.breakpoints(spec)
    grid = build_radial_grid(g["N"], g["r_min"], g["R"], g["n"], g["split"], g.get("r_split"),
                             g["cluster_levels"], tuple(sorted(set(bps))))
    mesh = build_time_mesh(cfg.mesh["t1"], cfg.mesh["T"], cfg.mesh["m"])
    return spec, grid, mesh


def _write_series(path: Path, header, rows):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{float(v):.17g}" for v in row])


def _run_existence(cfg, out: Path):
    spec, grid, mesh = _build(cfg)
    tol, opts = cfg.tolerances, cfg.options
    P = gtool.GParams(cfg.params["q"], cfg.params["rho"], grid.N)
    phi = idt.materialize(spec, grid)
    eng = dh.DuhamelEngine(grid, mesh)
    ss = dh.build_supersolution(phi, P, mesh, eng)
    chk = dh.verify_supersolution(ss.trajectory, phi, tol["supersolution"], opts["tail_model"], eng)
    mono = dh.monotone_iterate(phi, mesh, ss.trajectory, opts["n_max"], tol["iteration"], P.q,
                               opts["tail_model"], eng, tol["slack"])
    pic_neg = dh.picard_iterate(-phi, mesh, mono.trajectory, opts["n_max"], tol["iteration"], P.q,
                                opts["tail_model"], eng, tol["slack"])
    track = dh.weighted_supnorm_track(mono.trajectory, P.q)
    sym = float(np.max(np.abs(pic_neg.trajectory.values + mono.trajectory.values))
                / max(np.max(np.abs(mono.trajectory.values)), 1e-300))
    checks = {
        "supersolution_confirmed": _check(chk.confirmed, chk.T_star, note="T_star is the largest confirmed mesh time"),
        "supersolution_lower_bound": _check(ss.lower_margin >= -tol["slack"], ss.lower_margin, -tol["slack"]),
        "monotone_converged": _check(mono.converged, mono.iterations),
        "monotone_chain": _check((mono.monotonicity_margin or 0.0) >= -tol["slack"],
                                 mono.monotonicity_margin, -tol["slack"]),
        "dominated_by_supersolution": _check((mono.domination_margin or 0.0) >= -tol["slack"],
                                             mono.domination_margin, -tol["slack"]),
        "fixed_point_residual": _check(mono.residual <= 2 * tol["iteration"], mono.residual, 2 * tol["iteration"]),
        "picard_envelope": _check(pic_neg.converged and (pic_neg.envelope_margin or 0.0) >= -tol["slack"],
                                  pic_neg.envelope_margin, -tol["slack"]),
        "odd_symmetry": _check(sym <= tol["symmetry"], sym, tol["symmetry"]),
    }
    report = {"supersolution": chk.summary(), "supersolution_lower_margin": ss.lower_margin,
              "monotone": mono.summary(), "picard_negated": pic_neg.summary(), "m_track": track.summary()}
    files = []
    if opts.get("refine", True):
        fine = refine_mesh(mesh)
        mono_f = dh.monotone_iterate(phi, fine, None, opts["n_max"], tol["iteration"], P.q, opts["tail_model"],
                                     None, tol["slack"])
        tf = dh.weighted_supnorm_track(mono_f.trajectory, P.q)
        rel = abs(tf.max - track.max) / track.max if track.max > 0 else 0.0
        checks["m_refinement_stable"] = _check(mono_f.converged and rel <= tol["refinement"], rel, tol["refinement"])
        report["m_track_refined"] = tf.summary()
        tf.to_csv(out / "m_track_refined.csv")
        files.append("m_track_refined.csv")
    _write_series(out / "supersolution_residuals.csv", ["t", "residual", "t_half_norm_Sg"],
                  zip(mesh.nodes, chk.residuals, ss.g_norm_series))
    _write_series(out / "distances.csv", ["iteration", "distance"], enumerate(mono.distances, start=2))
    track.to_csv(out / "m_track.csv")
    mono.trajectory.to_csv(out / "solution.csv")
    files += ["supersolution_residuals.csv", "distances.csv", "m_track.csv", "solution.csv"]
    return checks, report, files


def _run_nonexistence(cfg, out: Path):
    spec, grid, _ = _build(cfg)
    opts = cfg.options
    tau = None if opts["tau_series"] is None else np.array(opts["tau_series"])
    phi = idt.materialize(spec, grid)
    rep = idt.baras_pierre_report(phi, tau, opts["slope_min"])
    ref = idt.baras_pierre_report(idt.materialize(idt.psi(grid.N), grid), tau, opts["slope_min"])
    q = spec.q if spec.q is not None else cfg.params["q"]
    xq = gtool.xq_norm(phi, q)
    bound = (2 * grid.N) ** q * grid.omega / (grid.N / 2 - q - spec.eps) if grid.N / 2 - q - spec.eps > 0 else math.inf
    checks = {
        "phi0_diverging": _check(rep.verdict == "diverging", rep.slope, opts["slope_min"]),
        "psi_bounded": _check(ref.verdict == "bounded", ref.slope, opts["slope_min"]),
        "phi0_in_Xq": _check(math.isfinite(xq) and xq <= bound * (1 + 1e-3), xq, bound),
    }
    rep.to_csv(out / "ratio_phi0.csv")
    ref.to_csv(out / "ratio_psi.csv")
    report = {"phi0": rep.summary(), "psi": ref.summary(), "xq_norm": xq, "xq_bound": bound, "q": q}
    return checks, report, ["ratio_phi0.csv", "ratio_psi.csv"]


def _run_uniqueness(cfg, out: Path):
    spec, grid, mesh = _build(cfg)
    tol, opts = cfg.tolerances, cfg.options
    phi = idt.materialize(spec, grid)
    rep = dh.contraction_experiment(phi, opts["delta"], mesh, cfg.params["q"], opts["n_max"],
                                    min(tol["iteration"], 1e-10), tol["slack"], opts["tail_model"])
    passed = rep.measured_factor is None or rep.measured_factor <= tol["contraction"]
    checks = {"contraction": _check(passed, rep.measured_factor, tol["contraction"], rep.verdict)}
    return checks, {"contraction": rep.summary()}, []


def _run_smoothing(cfg, out: Path):
    spec, grid, mesh = _build(cfg)
    tol, opts = cfg.tolerances, cfg.options
    a = math.inf if opts["alpha"] == "inf" else float(opts["alpha"])
    b = math.inf if opts["beta"] == "inf" else float(opts["beta"])
    phi = idt.materialize(spec, grid)
    rep = hs.smoothing_report(phi, a, b, mesh, opts["C0"], tol["smoothing"])
    checks = {"finite_constant": _check(math.isfinite(rep.constant), rep.constant),
              "kernel_bound": _check(rep.within_bound, rep.constant, rep.kernel_bound),
              "t0_positive": _check(rep.t0 > 0, rep.t0)}
    rep.to_csv(out / "smoothing.csv")
    return checks, {"smoothing": rep.summary()}, ["smoothing.csv"]


def _run_gprops(cfg, out: Path):
    tol, opts = cfg.tolerances, cfg.options
    N = cfg.grid["N"]
    P = gtool.GParams(cfg.params["q"], cfg.params["rho"], N)
    rep = gtool.check_g_properties(P, opts["sample_spec"], tol["g_properties"])
    checks = {f"property_{k}": _check(r.passed or not r.applicable, r.worst_margin,
                                      note=None if r.applicable else "hypothesis on rho not met; informative only")
              for k, r in rep.properties.items()}
    report = {"g_properties": rep.summary()}
    if not opts.get("jensen_skipped"):
        spec, grid, _ = _build(cfg)
        phi = idt.materialize(spec, grid)
        margins = []
        for t in opts["jensen_times"]:
            j = gtool.jensen_check(phi, float(t), P)
            margins.append({"t": float(t), "margin": j.margin, "relative": j.relative})
            checks[f"jensen_t={t:g}"] = _check(j.relative >= -tol["jensen"], j.relative, -tol["jensen"])
        report["jensen"] = margins
    return checks, report, []


def _run_scaling(cfg, out: Path):
    tol, opts = cfg.tolerances, cfg.options
    base = idt.DataSpec.from_dict(cfg.data)
    extra = [r for lam in opts["lambdas"] for r in idt.breakpoints(idt.scaled(base, lam))]
    _, grid, _ = _build(cfg, extra)
    phi = idt.materialize(base, grid)
    m0 = integrate_radial(phi)
    checks, rows = {}, []
    for lam in opts["lambdas"]:
        fl = idt.materialize(idt.scaled(base, lam), grid)
        l1 = abs(integrate_radial(fl) / m0 - 1.0)
        cov = max(abs(idt.ball_mass(fl, t) / idt.ball_mass(phi, lam * t) - 1.0) for t in opts["taus"]
                  if lam * t <= grid.R)
        checks[f"l1_invariance_lambda={lam:g}"] = _check(l1 <= tol["l1_invariance"], l1, tol["l1_invariance"])
        checks[f"mass_covariance_lambda={lam:g}"] = _check(cov <= tol["mass_covariance"], cov, tol["mass_covariance"])
        rows.append((lam, l1, cov))
    _write_series(out / "scaling.csv", ["lambda", "l1_rel_error", "mass_covariance_rel_error"], rows)
    return checks, {"l1_norm": m0}, ["scaling.csv"]


RUNNERS = {"existence": _run_existence, "nonexistence": _run_nonexistence, "uniqueness": _run_uniqueness,
           "smoothing": _run_smoothing, "gprops": _run_gprops, "scaling": _run_scaling}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run_scenario(config: ExperimentConfig, outdir: str | Path | None = None) -> RunRecord:
    """Run one validated config and write its reports; check failures do not abort the run."""
    root = Path(outdir or config.outdir or "runs")
    out = root / config.scenario / config.hash
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    checks, report, files = RUNNERS[config.scenario](config, out)
    payload = {"config": config.canonical(), "config_hash": config.hash, "checks": checks, "results": report}
    (out / "report.json").write_text(json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n")
    files = sorted(["report.json", "record.json", *files])
    rec = RunRecord(config.hash, config.scenario, started, _now(), _clean(checks), files)
    (out / "record.json").write_text(rec.to_json() + "\n")
    return rec


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _scaled_tolerances(cfg: ExperimentConfig, factor: float) -> ExperimentConfig:
    if factor != 1.0:
        cfg.tolerances = {k: v * factor for k, v in cfg.tolerances.items()}
    return cfg


def _load(path: str) -> list:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: parse failure: {exc}"]) from None
    return doc if isinstance(doc, list) else [doc]


def _run_one(args):
    cfg, outdir = args
    return run_scenario(cfg, outdir)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="critheat", description=__doc__.split("\n\n")[0])
    ap.add_argument("--list-scenarios", action="store_true", help="print scenario names and exit")
    sub = ap.add_subparsers(dest="command")
    rp = sub.add_parser("run", help="run one or more config documents")
    rp.add_argument("configs", nargs="+", help="JSON config file(s); a file may hold a list of configs")
    rp.add_argument("--outdir", default="runs", help="output root (default: runs)")
    rp.add_argument("--parallel", action="store_true", help="run independent configs in parallel processes")
    rp.add_argument("--tolerance-scale", type=float, default=1.0, metavar="FACTOR",
                    help="multiply every tolerance by FACTOR")
    args = ap.parse_args(argv)

    if args.list_scenarios:
        for name, desc in SCENARIOS.items():
            print(f"{name:14s}{desc}")
        return 0
    if args.command != "run":
        ap.print_help()
        return 2
    if not args.tolerance_scale > 0:
        print("config error: --tolerance-scale must be positive", file=sys.stderr)
        return 2

    configs, errors = [], []
    for path in args.configs:
        try:
            docs = _load(path)
        except (OSError, ConfigError) as exc:
            errors.extend(getattr(exc, "errors", [f"{path}: {exc}"]))
            continue
        for i, doc in enumerate(docs):
            try:
                configs.append(_scaled_tolerances(validate_config(doc), args.tolerance_scale))
            except ConfigError as exc:
                errors.extend(f"{path}[{i}]: {e}" for e in exc.errors)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2

    jobs = [(c, args.outdir) for c in configs]
    if args.parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(j) for j in jobs]
    status = 0
    for rec in records:
        mark = "PASS" if rec.passed else "FAIL"
        print(f"{mark} {rec.scenario} {rec.config_hash}")
        for name, c in rec.checks.items():
            if not c["passed"]:
                print(f"    failed: {name} value={c.get('value')} threshold={c.get('threshold')}")
        status = max(status, 0 if rec.passed else 1)
    return status


if __name__ == "__main__":
    sys.exit(main())
