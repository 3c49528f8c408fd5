import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critheat import initdata as idt
from critheat.grids import E_INV, build_radial_grid, integrate_radial
from critheat.special import sphere_area


@pytest.fixture(scope="module")
def g2():
    return build_radial_grid(2, n=1024)


def test_phi0_values_and_jump(g2):
    phi = idt.materialize(idt.phi0(2, 0.25), g2)
    r = g2.nodes
    inside = r < E_INV
    expect = r[inside] ** -2.0 * (-np.log(r[inside])) ** (-(1 + 1 - 0.25))
    assert np.allclose(phi.values[inside], expect, rtol=1e-14)
    assert np.all(phi.values[~inside] == 0.0)


def test_phi0_psi_ratio(g2):
    a = idt.materialize(idt.phi0(2, 0.3), g2).values
    b = idt.materialize(idt.psi(2), g2).values
    inside = g2.nodes < E_INV
    assert np.allclose(a[inside] / b[inside], (-np.log(g2.nodes[inside])) ** 0.3, rtol=1e-13)


def test_dataspec_validation():
    with pytest.raises(ValueError):
        idt.phi0(2, 1.0)
    with pytest.raises(ValueError):
        idt.phi0(2, 0.0)
    with pytest.raises(ValueError):
        idt.truncated(idt.psi(2), -1.0)
    with pytest.raises(ValueError):
        idt.scaled(idt.psi(2), 0.0)
    with pytest.warns(RuntimeWarning):
        idt.phi0(2, 0.6, q=0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        idt.phi0(2, 0.2, q=0.5)


def test_dataspec_dict_round_trip():
    spec = idt.scaled(idt.truncated(idt.phi0(3, 0.4, q=0.5), 1e3), 2.0)
    back = idt.DataSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back == spec


def test_truncated_caps_values(g2):
    phi = idt.materialize(idt.truncated(idt.phi0(2, 0.25), 1e3), g2)
    assert phi.values.max() <= 1e3
    assert not phi.core.unbounded


@pytest.mark.parametrize("lam", [0.5, 2.0, 8.0])
def test_scaled_gaussian_l1_invariant(lam):
    g = build_radial_grid(1, n=1024)
    base = idt.gaussian(1, 1e-3)
    a = integrate_radial(idt.materialize(base, g))
    b = integrate_radial(idt.materialize(idt.scaled(base, lam), g))
    assert b == pytest.approx(a, rel=1e-8)


def test_breakpoints(g2):
    assert idt.breakpoints(idt.psi(2)) == [E_INV]
    assert idt.breakpoints(idt.gaussian(2, 1e-3)) == []
    bps = idt.breakpoints(idt.truncated(idt.phi0(2, 0.25), 1e2))
    assert len(bps) == 2 and bps[1] == E_INV
    r = bps[0]
    assert r**-2 * (-math.log(r)) ** -1.75 == pytest.approx(1e2, rel=1e-10)
    sc = idt.breakpoints(idt.scaled(idt.psi(2), 2.0))
    assert sc == [pytest.approx(E_INV / 2)]


# ball mass -------------------------------------------------------------------


def test_ball_mass_phi0_closed_form(g2):
    phi = idt.materialize(idt.phi0(2, 0.5), g2)
    assert idt.ball_mass(phi, E_INV) == pytest.approx(4 * math.pi, rel=1e-9)


def test_ball_mass_psi_example(g2):
    phi = idt.materialize(idt.psi(2), g2)
    assert idt.ball_mass(phi, math.exp(-4)) == pytest.approx(2 * math.pi / 4, rel=1e-9)


@pytest.mark.parametrize("N,eps", [(1, 0.25), (2, 0.25), (3, 1.0), (4, 0.5)])
def test_ball_mass_matches_closed_form_on_range(N, eps):
    g = build_radial_grid(N, n=1024)
    spec = idt.phi0(N, eps)
    phi = idt.materialize(spec, g)
    for tau in np.geomspace(1e-6, E_INV, 9):
        expect = sphere_area(N) * (-math.log(tau)) ** (-(N / 2 - eps)) / (N / 2 - eps)
        assert idt.ball_mass(phi, tau) == pytest.approx(expect, rel=1e-4)
        assert idt.ball_mass_closed_form(spec, g, tau) == pytest.approx(expect, rel=1e-12)


def test_ball_mass_gaussian_vanishes_at_origin():
    g = build_radial_grid(2, n=1024)
    phi = idt.materialize(idt.gaussian(2, 1e-2), g)
    tau = 1e-4
    expect = phi.values[0] * 2 * math.pi * tau**2 / 2
    assert idt.ball_mass(phi, tau) == pytest.approx(expect, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-13.0, -1.0), b=st.floats(-13.0, -1.0))
def test_ball_mass_monotone(g2, a, b):
    phi = idt.materialize(idt.truncated(idt.phi0(2, 0.3), 1e5), g2)
    lo, hi = sorted((math.exp(a), math.exp(b)))
    assert idt.ball_mass(phi, lo) <= idt.ball_mass(phi, hi) * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.25, 8.0), tau=st.floats(1e-3, 0.5))
def test_ball_mass_scaling_covariance(lam, tau):
    base = idt.gaussian(2, 1e-3)
    g = build_radial_grid(2, n=1024)
    lhs = idt.ball_mass(idt.materialize(idt.scaled(base, lam), g), tau)
    rhs = idt.ball_mass(idt.materialize(base, g), lam * tau)
    assert lhs == pytest.approx(rhs, rel=1e-6)


# Baras-Pierre ------------------------------------------------------------------


def test_default_tau_series():
    tau = idt.default_tau_series()
    assert np.allclose(-np.log(tau)[:-1], 3 * 1.5 ** np.arange(len(tau) - 1))
    assert -math.log(tau[-1]) == pytest.approx(30.0)
    assert np.all(np.diff(tau) < 0)


def test_baras_pierre_phi0_diverges(g2):
    rep = idt.baras_pierre_report(idt.materialize(idt.phi0(2, 0.25, q=0.5), g2))
    assert rep.verdict == "diverging"
    assert rep.slope == pytest.approx(0.25, abs=0.05)


def test_baras_pierre_psi_bounded(g2):
    rep = idt.baras_pierre_report(idt.materialize(idt.psi(2), g2))
    assert rep.verdict == "bounded"
    assert abs(rep.slope) <= 0.02
    assert rep.gamma0_empirical == pytest.approx(2 * math.pi, rel=1e-2)


def test_baras_pierre_gaussian_ratio_vanishes(g2):
    rep = idt.baras_pierre_report(idt.materialize(idt.gaussian(2, 1e-3), g2))
    assert rep.verdict == "bounded"
    assert rep.ratio[-1] < 1e-6 * rep.ratio[0]


def test_baras_pierre_verdict_stable_under_resolution(g2):
    fine = np.exp(-np.geomspace(3, 30, 13))
    for spec, verdict in [(idt.phi0(2, 0.25), "diverging"), (idt.psi(2), "bounded"),
                          (idt.gaussian(2, 1e-3), "bounded")]:
        phi = idt.materialize(spec, g2)
        assert idt.baras_pierre_report(phi).verdict == verdict
        assert idt.baras_pierre_report(phi, fine).verdict == verdict


def test_baras_pierre_rejects_signed_data(g2):
    phi = idt.materialize(idt.psi(2), g2)
    with pytest.raises(ValueError):
        idt.baras_pierre_report(-phi)


def test_baras_pierre_csv(tmp_path, g2):
    rep = idt.baras_pierre_report(idt.materialize(idt.psi(2), g2))
    path = tmp_path / "bp.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,mass,ratio"
    assert len(lines) == len(rep.tau) + 1
