"""End-to-end acceptance checks at their stated tolerances and time budgets.

Each test records a one-line verdict that the conftest hook prints in the
terminal summary.
"""

import math
import time

import numpy as np
import pytest

from critheat import duhamel as dh, expcli, gtool, heatsemigroup as hs, initdata as idt
from critheat.grids import (
    ConstantCore,
    RadialField,
    build_radial_grid,
    build_time_mesh,
    integrate_radial,
    log_weight_integral,
    refine_mesh,
)
from critheat.special import sphere_area


class Verdict:
    """Collects named sub-checks, the elapsed time, and a detail string."""

    def __init__(self, record_property, budget):
        self._record = record_property
        self.budget = budget
        self.start = time.perf_counter()
        self.items = []

    def check(self, name, ok, value=None):
        self.items.append((name, bool(ok), value))

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check("time", elapsed < self.budget, f"{elapsed:.1f}s<{self.budget:g}s")
        parts = []
        for name, ok, value in self.items:
            tag = "" if ok else "!"
            parts.append(f"{tag}{name}={value}" if value is not None else f"{tag}{name}")
        detail = ", ".join(parts)
        self._record("detail", detail)
        print(detail)
        failed = [name for name, ok, _ in self.items if not ok]
        assert not failed, f"failed sub-checks: {failed}"


def _fmt(x):
    return f"{x:.2e}"


@pytest.mark.criterion(1, "log-weight integral at q = N/2")
def test_criterion_01_log_weight_critical(record_property):
    v = Verdict(record_property, 1.0)
    worst = 0.0
    for N in (1, 2, 4):
        q = N / 2.0
        for t in (math.exp(-20), math.exp(-10), math.exp(-4)):
            res = log_weight_integral(t, q + 1.0)
            target = 2.0 / (N * (-math.log(t)) ** q)
            worst = max(worst, abs(res.quadrature - target) / target, res.rel_error)
    v.check("max_rel_err", worst <= 1e-8, _fmt(worst))
    v.finish()


@pytest.mark.criterion(2, "log-weight integral for q > N/2")
def test_criterion_02_log_weight_supercritical(record_property):
    v = Verdict(record_property, 1.0)
    worst = 0.0
    for N, q in ((1, 1.0), (2, 2.0), (2, 3.0)):
        for sig in np.linspace(4.0, 30.0, 27):
            t = math.exp(-sig)
            res = log_weight_integral(t, 2.0 * q / N)
            target = N * sig ** (1.0 - 2.0 * q / N) / (2.0 * q - N)
            worst = max(worst, abs(res.quadrature - target) / target)
    v.check("max_rel_err", worst <= 1e-8, _fmt(worst))
    v.finish()


@pytest.mark.criterion(3, "X_q bound and ball mass of phi0")
def test_criterion_03_xq_and_ball_mass(record_property):
    v = Verdict(record_property, 5.0)
    worst_ratio, worst_mass = 0.0, 0.0
    for N, q, eps in ((2, 0.5, 0.25), (1, 0.0, 0.25), (4, 1.0, 0.5)):
        g = build_radial_grid(N, n=1024)
        phi = idt.materialize(idt.phi0(N, eps, q=q), g)
        val = gtool.xq_norm(phi, q)
        bound = (2 * N) ** q * sphere_area(N) / (N / 2 - q - eps)
        v.check(f"xq_finite_N{N}", math.isfinite(val))
        worst_ratio = max(worst_ratio, val / bound)
        for tau in np.geomspace(1e-6, math.exp(-1), 25):
            expect = sphere_area(N) * (-math.log(tau)) ** (-(N / 2 - eps)) / (N / 2 - eps)
            worst_mass = max(worst_mass, abs(idt.ball_mass(phi, tau) / expect - 1))
    v.check("max_xq_over_bound", worst_ratio <= 1 + 1e-3, f"{worst_ratio:.4f}")
    v.check("ball_mass_rel_err", worst_mass <= 1e-4, _fmt(worst_mass))
    v.finish()


@pytest.mark.criterion(4, "ball-mass ratio test")
def test_criterion_04_ratio_test(record_property):
    v = Verdict(record_property, 5.0)
    for N, eps in ((1, 0.25), (2, 0.25), (3, 0.5)):
        g = build_radial_grid(N, n=1024)
        rep = idt.baras_pierre_report(idt.materialize(idt.phi0(N, eps), g))
        v.check(f"phi0_N{N}_slope", abs(rep.slope - eps) <= 0.05 and rep.verdict == "diverging",
                f"{rep.slope:.4f}")
        ref = idt.baras_pierre_report(idt.materialize(idt.psi(N), g))
        gamma = sphere_area(N) * 2.0 / N
        v.check(f"psi_N{N}_slope", abs(ref.slope) <= 0.02 and ref.verdict == "bounded", f"{ref.slope:.1e}")
        v.check(f"psi_N{N}_gamma0", abs(ref.gamma0_empirical / gamma - 1) <= 0.01,
                f"{ref.gamma0_empirical / gamma:.5f}")
        gau = idt.baras_pierre_report(idt.materialize(idt.gaussian(N, 1e-3), g))
        v.check(f"gauss_N{N}_to_0", gau.verdict == "bounded" and gau.ratio[-1] < 1e-6 * gau.ratio.max(),
                _fmt(gau.ratio[-1]))
    v.finish()


@pytest.mark.criterion(5, "semigroup fidelity")
def test_criterion_05_semigroup(record_property):
    v = Verdict(record_property, 30.0)
    g_err, m_err, law_err = 0.0, 0.0, 0.0
    tail = 0.0
    for N in (1, 2, 3, 4):
        # narrow kernels against a smooth profile need the finer grid
        g = build_radial_grid(N, n=2048)
        t0 = 1e-3
        gauss = RadialField(g, hs.gaussian_profile(N, t0, g.nodes))
        for t in (1e-6, 1e-4, 1e-2, 5e-2):
            out = hs.apply_semigroup(gauss, t, cache=False).values
            ref = hs.gaussian_profile(N, t + t0, g.nodes)
            g_err = max(g_err, np.max(np.abs(out - ref)) / ref.max())
        if N <= 3:
            cut = RadialField(g, np.where(g.nodes < math.exp(-1), 1.0, 0.0), ConstantCore(1.0))
            m0 = integrate_radial(cut)
            for t in (1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2):
                out = hs.apply_semigroup(cut, t, cache=False)
                m_err = max(m_err, abs(integrate_radial(out) / m0 - 1))
                # heat lost past R: Gaussian tail from the support edge
                tail = max(tail, math.erfc((g.R - math.exp(-1)) / (2 * math.sqrt(t))))
            s, t = 3e-4, 7e-4
            two = hs.apply_semigroup(hs.apply_semigroup(cut, s, cache=False), t, cache=False)
            one = hs.apply_semigroup(cut, s + t, cache=False)
            diff = RadialField(g, two.values - one.values, ConstantCore(0.0))
            law_err = max(law_err, hs.lp_norm(diff, 1) / hs.lp_norm(one, 1))
    v.check("gauss_sup_rel", g_err <= 1e-8, _fmt(g_err))
    v.check("mass_rel", m_err <= 1e-6 + tail, _fmt(m_err))
    v.check("semigroup_law_L1", law_err <= 1e-6, _fmt(law_err))
    rng = np.random.default_rng(20261014)
    r, s = rng.uniform(0, 3, 1000), rng.uniform(0, 3, 1000)
    t = 10.0 ** rng.uniform(-4, 0, 1000)
    a = r * s / (2 * t)
    exact = hs.angular_factor(3, a, "closed-form-3D")
    k_err = max(float(np.max(np.abs(hs.angular_factor(3, a, m) - exact) / exact))
                for m in ("bessel", "angular-quadrature"))
    v.check("n3_kernel_rel", k_err <= 1e-10, _fmt(k_err))
    v.finish()


@pytest.mark.criterion(6, "g property suite and Jensen comparison")
def test_criterion_06_g_properties(record_property):
    v = Verdict(record_property, 10.0)
    for N in (1, 2, 3):
        rep = gtool.check_g_properties(gtool.default_params(N), {"count": 10_000, "s_max": 1e8})
        worst = min(r.worst_margin for r in rep.properties.values())
        v.check(f"props_N{N}", rep.all_passed and worst >= -1e-10, _fmt(worst))
    cases = [
        (idt.truncated(idt.phi0(2, 0.25), 1e4), gtool.GParams(1.0, math.e, 2)),
        (idt.gaussian(1, 1e-3, 0.1), gtool.default_params(1, 2.0)),
        (idt.truncated(idt.psi(3), 1.0), gtool.default_params(3)),
    ]
    worst = math.inf
    for spec, P in cases:
        g = build_radial_grid(spec.N, n=1024, breakpoints=tuple(idt.breakpoints(spec)))
        phi = idt.materialize(spec, g)
        for t in (1e-4, 1e-3, 1e-2):
            worst = min(worst, gtool.jensen_check(phi, t, P).relative)
    v.check("jensen_min_rel", worst >= -1e-8, _fmt(worst))
    v.finish()


@pytest.mark.criterion(7, "monotone and Picard engine")
def test_criterion_07_engine(record_property):
    v = Verdict(record_property, 300.0)
    grid = build_radial_grid(1, n=1024)
    mesh = build_time_mesh(math.exp(-30), math.exp(-8), 48)
    phi = idt.materialize(idt.gaussian(1, 1e-3, 1e-3), grid)
    P = gtool.default_params(1, 1.0)
    eng = dh.DuhamelEngine(grid, mesh)
    ss = dh.build_supersolution(phi, P, mesh, eng)
    chk = dh.verify_supersolution(ss.trajectory, phi, 1e-6, engine=eng)
    v.check("supersolution", chk.confirmed, _fmt(float(chk.residuals.max())))
    mono = dh.monotone_iterate(phi, mesh, ss.trajectory, n_max=50, tol=1e-8, q=1.0, engine=eng, slack=1e-6)
    v.check("monotone_chain", mono.monotonicity_margin >= -1e-6, _fmt(mono.monotonicity_margin))
    v.check("below_supersolution", mono.domination_margin >= -1e-6, _fmt(mono.domination_margin))
    v.check("iterations", mono.converged and mono.iterations <= 15, mono.iterations)
    v.check("residual", mono.residual <= 2e-8, _fmt(mono.residual))
    neg = dh.picard_iterate(-phi, mesh, mono.trajectory, n_max=50, tol=1e-8, q=1.0, engine=eng, slack=1e-6)
    v.check("envelope_flipped", neg.converged and neg.envelope_margin >= -1e-6, _fmt(neg.envelope_margin))
    v.finish()


@pytest.mark.criterion(8, "weighted sup-norm of the capped phi0 solution")
def test_criterion_08_weighted_supnorm(record_property):
    v = Verdict(record_property, 600.0)
    spec = idt.truncated(idt.phi0(2, 0.25), 1e4)
    grid = build_radial_grid(2, n=1024, breakpoints=tuple(idt.breakpoints(spec)))
    phi = idt.materialize(spec, grid)
    mesh = build_time_mesh(math.exp(-30), math.exp(-8), 48)
    maxima = []
    for m in (mesh, refine_mesh(mesh)):
        rep = dh.monotone_iterate(phi, m, None, n_max=50, tol=1e-8, q=1.0)
        track = dh.weighted_supnorm_track(rep.trajectory, 1.0)
        v.check(f"converged_m{len(m)}", rep.converged, rep.iterations)
        v.check(f"bounded_m{len(m)}", bool(np.all(np.isfinite(track.m))), f"{track.max:.5f}")
        maxima.append(track.max)
    rel = abs(maxima[1] - maxima[0]) / maxima[0]
    v.check("refinement_change", rel <= 0.10, _fmt(rel))
    v.finish()


@pytest.mark.criterion(9, "one-sweep contraction for q > N/2")
def test_criterion_09_contraction(record_property):
    v = Verdict(record_property, 300.0)
    grid = build_radial_grid(1, n=1024)
    mesh = build_time_mesh(math.exp(-30), math.exp(-8), 48)
    phi = idt.materialize(idt.gaussian(1, 1e-3, 1e-3), grid)
    rep = dh.contraction_experiment(phi, 0.01, mesh, 1.0)
    v.check("theory_factor", rep.theoretical_factor <= 0.3, _fmt(rep.theoretical_factor))
    v.check("measured_factor", rep.measured_factor is not None and rep.measured_factor <= 0.5,
            _fmt(rep.measured_factor or math.nan))
    try:
        dh.contraction_experiment(phi, 0.01, mesh, 0.5)
        refused = False
    except ValueError as exc:
        refused = "q > N/2" in str(exc)
    v.check("refuses_q_le_half_N_engine", refused)
    try:
        expcli.validate_config({"scenario": "uniqueness", "grid": {"N": 1}, "params": {"q": 0.5}})
        refused = False
    except expcli.ConfigError as exc:
        refused = any("q > N/2" in e for e in exc.errors)
    v.check("refuses_q_le_half_N_config", refused)
    v.finish()


@pytest.mark.criterion(10, "critical scaling")
def test_criterion_10_scaling(record_property):
    v = Verdict(record_property, 1.0)
    l1_err, cov_err = 0.0, 0.0
    for N in (1, 2):
        base = idt.gaussian(N, 1e-3)
        g = build_radial_grid(N, n=1024)
        phi = idt.materialize(base, g)
        m0 = integrate_radial(phi)
        for lam in (0.5, 2.0, 8.0):
            fl = idt.materialize(idt.scaled(base, lam), g)
            l1_err = max(l1_err, abs(integrate_radial(fl) / m0 - 1))
            for tau in (1e-3, 1e-2, 3e-2, 0.1):
                cov_err = max(cov_err, abs(idt.ball_mass(fl, tau) / idt.ball_mass(phi, lam * tau) - 1))
    v.check("l1_rel", l1_err <= 1e-8, _fmt(l1_err))
    v.check("mass_covariance_rel", cov_err <= 1e-6, _fmt(cov_err))
    v.finish()
