import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special as sps

from critheat.grids import (
    E_INV,
    ConstantCore,
    PowerLogCore,
    RadialField,
    build_radial_grid,
    build_time_mesh,
    dumps_descriptor,
    grid_from_descriptor,
    integrate_function,
    integrate_radial,
    loads_descriptor,
    log_weight_closed_form,
    log_weight_integral,
    mesh_from_descriptor,
    radial_quadrature,
    refine_mesh,
)
from critheat.special import barycentric_weights, gauss_legendre, lagrange_basis, lanczos_gamma, sphere_area


# special functions -----------------------------------------------------------


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 2.5, 7.0, 33.3, 120.0])
def test_lanczos_gamma_matches_scipy(x):
    assert lanczos_gamma(x) == pytest.approx(sps.gamma(x), rel=1e-13)


def test_sphere_area_low_dimensions():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(4) == pytest.approx(2 * math.pi**2)


def test_gauss_legendre_exact_for_degree_15():
    x, w = gauss_legendre(8, 0.0, 2.0)
    assert np.sum(w * x**15) == pytest.approx(2.0**16 / 16, rel=1e-14)


def test_lagrange_basis_reproduces_polynomials():
    x, _ = gauss_legendre(8)
    b = barycentric_weights(x)
    xe = np.linspace(-1, 1, 31)
    L = lagrange_basis(x, b, xe)
    assert np.allclose(L @ (x**7 - 2 * x), xe**7 - 2 * xe, atol=1e-13)
    assert np.allclose(L.sum(axis=1), 1.0, atol=1e-14)


# grid ------------------------------------------------------------------------


def test_grid_shape_and_ordering():
    g = build_radial_grid(2, n=512)
    assert g.nodes.size == 512 and g.weights.size == 512
    assert np.all(np.diff(g.nodes) > 0)
    assert g.nodes[0] > g.r_min and g.nodes[-1] < g.R
    assert np.any(np.isclose(g.edges, E_INV, rtol=1e-14))


@pytest.mark.parametrize("n", [10, 12, 100])
def test_grid_rejects_bad_node_counts(n):
    with pytest.raises(ValueError):
        build_radial_grid(1, n=n)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_grid_integrates_gaussian_mass(N):
    g = build_radial_grid(N, n=1024)
    val = integrate_function(g, lambda r: np.exp(-r**2))
    assert val == pytest.approx(math.pi ** (N / 2), rel=1e-12)


def test_unit_ball_volume_n3():
    g = build_radial_grid(3, n=512)
    assert integrate_function(g, lambda r: np.ones_like(r), upper=1.0) == pytest.approx(4 * math.pi / 3, rel=1e-13)


def test_ramp_on_unit_interval_n1():
    g = build_radial_grid(1, n=512)
    # the radial integral over R^1 counts both half-lines
    assert integrate_function(g, lambda r: r, upper=1.0) == pytest.approx(2 * 0.5, rel=1e-13)


def test_singular_power_log_ball_integral():
    # r^-2 (-log r)^-2 on (0, 1/e) in N = 2: grid part plus core, oracle 2 pi
    g = build_radial_grid(2, n=1024)
    vals = np.where(g.nodes < E_INV, g.nodes**-2.0 * (-np.log(g.nodes)) ** -2.0, 0.0)
    f = RadialField(g, vals, PowerLogCore(b=2.0, shift=0.0))
    assert integrate_radial(f, E_INV) == pytest.approx(2 * math.pi, rel=1e-9)


def test_breakpoint_becomes_edge():
    g = build_radial_grid(2, n=512, breakpoints=(0.0123, 0.4))
    for b in (0.0123, 0.4):
        assert np.min(np.abs(g.edges - b)) == 0.0


def test_descriptor_round_trip():
    g = build_radial_grid(3, n=256, breakpoints=(0.05,))
    g2 = loads_descriptor(dumps_descriptor(g))
    assert np.array_equal(grid_from_descriptor(g.descriptor()).nodes, g.nodes)
    assert np.array_equal(g.nodes, g2.nodes)
    m = build_time_mesh(1e-12, 1e-4, 10)
    assert np.array_equal(mesh_from_descriptor(m.descriptor()).nodes, m.nodes)
    assert np.array_equal(loads_descriptor(dumps_descriptor(m)).nodes, m.nodes)


def test_partial_ball_integral_of_polynomial():
    g = build_radial_grid(2, n=512)
    f = RadialField(g, g.nodes**2, ConstantCore(0.0))
    tau = 0.3137
    assert integrate_radial(f, tau) == pytest.approx(2 * math.pi * tau**4 / 4, rel=1e-12)


def test_power_log_core_mass_closed_form():
    # r^-N (-log r)^-b below r_min has mass (-log r_min)^(1-b)/(b-1)
    N, b = 2, 1.75
    core = PowerLogCore(b=b, shift=0.0)
    r_min = 1e-10
    expect = (-math.log(r_min)) ** (1 - b) / (b - 1)
    assert core.mass(N, r_min) == pytest.approx(expect, rel=1e-12)


def test_core_weighted_integral_with_unit_weight_is_mass():
    core = PowerLogCore(b=1.75, shift=0.0)
    r_min = 1e-12
    assert core.weighted_integral(2, r_min, lambda lf: 1.0) == pytest.approx(core.mass(2, r_min), rel=1e-8)


def test_quadrature_transform_with_core():
    g = build_radial_grid(1, n=256)
    f = RadialField(g, np.full(g.n, 2.0), ConstantCore(2.0))
    res = radial_quadrature(f, upper=1.0, transform=lambda v: v**2)
    assert res.value == pytest.approx(2 * 4.0, rel=1e-12)


# time mesh -------------------------------------------------------------------


def test_time_mesh_uniform_in_minus_log_t():
    m = build_time_mesh(math.exp(-20), math.exp(-4), 17)
    assert np.allclose(-np.log(m.nodes), np.arange(20, 3, -1), rtol=0, atol=1e-12)
    assert np.array_equal(build_time_mesh(1e-9, 1e-3, 2).nodes, [1e-9, 1e-3])


def test_time_mesh_rejects_reversed_times():
    with pytest.raises(ValueError):
        build_time_mesh(1e-3, 1e-4, 5)


def test_refine_mesh_keeps_old_nodes():
    m = build_time_mesh(1e-12, 1e-4, 7)
    f = refine_mesh(m)
    assert len(f) == 13
    assert np.allclose(f.nodes[::2], m.nodes, rtol=1e-14)


@pytest.mark.parametrize("T", [0.2, 1.0])
def test_time_mesh_requires_small_T(T):
    with pytest.raises(ValueError):
        build_time_mesh(1e-10, T, 5)


# log-weight integrals ----------------------------------------------------------


@pytest.mark.parametrize("t", [math.exp(-20), math.exp(-10), math.exp(-4)])
def test_log_weight_against_scipy(t):
    # independent oracle: adaptive quadrature in sigma = -log s
    a = 1.5
    val, _ = integrate.quad(lambda s: s**-a, -math.log(t), np.inf, epsabs=0, epsrel=1e-13)
    assert log_weight_closed_form(t, a) == pytest.approx(val, rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(1.05, 6.0), w=st.floats(math.log(2.0), math.log(60.0)))
def test_log_weight_quadrature_matches_closed_form(a, w):
    t = math.exp(-math.exp(w))
    res = log_weight_integral(t, a)
    assert res.rel_error <= 1e-10


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.2, 4.0), lo=st.floats(2.5, 20.0), span=st.floats(0.5, 30.0))
def test_log_weight_floored_is_additive(a, lo, span):
    t, tf = math.exp(-lo), math.exp(-(lo + span))
    mid = math.exp(-(lo + span / 2))
    whole = log_weight_closed_form(t, a, tf)
    parts = log_weight_closed_form(t, a, mid) + log_weight_closed_form(mid, a, tf)
    assert whole == pytest.approx(parts, rel=1e-12)
    assert log_weight_integral(t, a, tf).rel_error <= 1e-10


def test_log_weight_divergent_case_refused():
    with pytest.raises(ValueError):
        log_weight_closed_form(1e-3, 1.0)
