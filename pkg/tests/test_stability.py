import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from gradedrt.fields import (build_counterexample_field, kink_radius, loglog_profile,
                             polynomial_field, singular_pair_field, trig_field)
from gradedrt.mesh import PARALLELOGRAM, TRIANGLE, GradingSpec, build_reference_graded_square
from gradedrt.norms import Region, l2_norm
from gradedrt.rt import edge_flux, interpolate_rt
from gradedrt.stability import (HIGH, LOW, counterexample_report, log_aniso_u1_sq,
                                mesh_stability_ratio, pullback_to_element,
                                reference_stability_ratio, representative_cells, stability_rhs,
                                triangle_c_identity, u2_l2_sq_triangle)


def test_kink_radius_examples():
    assert kink_radius(0.5) == pytest.approx(np.e * np.exp(-np.exp(2.0)), rel=1e-14)
    assert kink_radius(1e-3) == 0.0
    with pytest.raises(ValueError):
        kink_radius(0.0)


def test_loglog_profile_values():
    w, dw, rstar = loglog_profile(0.5)
    assert w(np.array([1.0]))[0] == 0.0
    assert w(np.array([rstar / 2]))[0] == 1.0
    t = np.array([0.3])
    assert w(t)[0] == pytest.approx(0.5 * np.log(1 - np.log(0.3)), rel=1e-15)
    # derivative against a central difference
    d = 1e-6
    fd = (w(t + d) - w(t - d)) / (2 * d)
    assert dw(t)[0] == pytest.approx(fd[0], rel=1e-7)


@pytest.mark.parametrize("eps", [0.5])
def test_aniso_u1_against_direct_quadrature(eps):
    _, dw, rstar = loglog_profile(eps)
    val, _ = integrate.quad(lambda t: dw(np.array([t]))[0] ** 2 * (1 - t) ** 2, rstar, 1.0,
                            limit=400, epsabs=0, epsrel=1e-11)
    assert log_aniso_u1_sq(eps) == pytest.approx(np.log(val), abs=1e-7)


@pytest.mark.parametrize("eps", [0.3, 0.2, 0.1])
def test_aniso_u1_against_log_variable_quadrature(eps):
    # t = exp(-y): eps^2 e^y (1 - e^{-y})^2 / (1 + y)^2 on (0, Y), Y = e^{1/eps} - 1,
    # integrated with the factor e^{-Y} pulled out
    Y = np.expm1(1 / eps)
    f = lambda y: eps ** 2 * np.exp(y - Y) * (-np.expm1(-y)) ** 2 / (1 + y) ** 2
    val, _ = integrate.quad(f, 0.0, Y, limit=400, epsabs=0, epsrel=1e-11)
    assert log_aniso_u1_sq(eps) == pytest.approx(Y + np.log(val), abs=1e-7)


@pytest.mark.parametrize("eps", [0.5, 0.2, 0.1])
def test_u2_l2_against_direct_quadrature(eps):
    w, _, rstar = loglog_profile(eps)
    g = lambda t: w(np.array([t]))[0] ** 2 * (1 - t)
    pts = [rstar] if rstar > 0 else None
    lo = [(0.0, rstar), (rstar, 1.0)] if rstar > 0 else [(0.0, 1.0)]
    val = sum(integrate.quad(g, a, b, limit=400, epsabs=1e-14, epsrel=1e-11)[0] for a, b in lo)
    assert u2_l2_sq_triangle(w, rstar) == pytest.approx(val, rel=1e-7)


def test_u2_l2_matches_region_quadrature():
    u = build_counterexample_field(0.5)
    direct = l2_norm(u.u2, Region.triangle(), singular_lines=u.singular_lines) ** 2
    assert u2_l2_sq_triangle(lambda t: u.u2(0 * t, t), u.params["rstar"]) == \
        pytest.approx(direct, rel=1e-6)


def test_counterexample_report_trends():
    rows = [counterexample_report(e, levels=120) for e in (0.5, 0.2, 0.1)]
    plain = [r.ratio_plain for r in rows]
    assert plain[0] < plain[1] < plain[2]
    assert all(r.div_l2 == 0.0 for r in rows)
    assert all(r.u2_semi_error < 0.01 for r in rows)


def test_augmented_ratio_stays_bounded_above():
    # the augmented denominator only grows as eps decreases, so the ratio
    # never exceeds its eps = 0.5 value; the factor-2 lower side is the part
    # that fails
    la = [counterexample_report(e, levels=120).log10_ratio_augmented for e in (0.5, 0.2, 0.1, 0.05)]
    assert all(v <= la[0] + 1e-12 for v in la)


def test_stream_flux_of_counterexample_matches_quadrature():
    u = build_counterexample_field(0.5)
    P, Q = np.array([1.0, 0.0]), np.array([1.0, 1.0])
    assert edge_flux(u, (P, Q), method="stream") == pytest.approx(
        edge_flux(u, (P, Q), method="quadrature"), abs=1e-9)


# ------------------------------------------------------------ ratios

def test_rhs_branches():
    u = trig_field()
    hi = stability_rhs(u, PARALLELOGRAM, 0.75, 1, HIGH)
    lo = stability_rhs(u, PARALLELOGRAM, 0.75, 1, LOW)
    assert hi.aniso == 0.0 and hi.div == 0.0
    assert lo.aniso > 0 and lo.div > 0
    assert lo.total > hi.total
    tri = stability_rhs(u, TRIANGLE, 0.75, 1, HIGH)
    assert tri.div > 0
    with pytest.raises(ValueError):
        stability_rhs(u, PARALLELOGRAM, 0.75, 1, "middle")


@pytest.mark.parametrize("kind", [PARALLELOGRAM, TRIANGLE])
def test_reference_ratio_of_rt0_field_is_its_l2_fraction(kind):
    # Pi_RT reproduces the field; numerator equals ||u_l||_0
    u = polynomial_field({(0, 0): 1.0, (1, 0): 0.5}, {(0, 0): -2.0, (0, 1): 0.5})
    r = reference_stability_ratio(u, kind, 0.75, 1, HIGH)
    area = 1.0 if kind == PARALLELOGRAM else 0.5
    assert r.numerator == pytest.approx(l2_norm(u.u1, Region(kind)), rel=1e-12)
    assert 0 < r.ratio <= 1.0 + 1e-12


def test_pullback_carries_singular_lines():
    mesh = build_reference_graded_square(GradingSpec(4, 2.0))
    u = singular_pair_field(0.3, -1)
    k = int(np.argmin(np.sum(mesh.b ** 2, axis=1)))
    uh = pullback_to_element(u, mesh, k)
    assert set(uh.singular_lines) == {(1, 0.0), (2, 0.0)}
    far = int(np.argmax(np.sum(mesh.b ** 2, axis=1)))
    assert pullback_to_element(u, mesh, far).singular_lines == ()


def test_pullback_fluxes_match_element_interpolant():
    mesh = build_reference_graded_square(GradingSpec(3, 2.0))
    u = trig_field()
    rt = interpolate_rt(u, mesh)
    for k in representative_cells(mesh):
        uh = pullback_to_element(u, mesh, k)
        ref = interpolate_rt(uh, build_reference_graded_square(GradingSpec(1, 1.0)))
        assert np.allclose(ref.local_fluxes()[0], rt.local_fluxes()[k], atol=1e-12)


def test_mesh_stability_ratio_components():
    mesh = build_reference_graded_square(GradingSpec(4, 2.0))
    worst = mesh_stability_ratio(trig_field(), mesh, 0.75, HIGH)
    assert set(worst) == {1, 2}
    assert all(0 < worst[l].ratio < 5 for l in (1, 2))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1))
def test_triangle_c_identity_property(a, b, q):
    u = polynomial_field({(0, 0): a, (2, 1): q}, {(0, 0): b, (1, 2): -q, (0, 1): 1.0})
    c_flux, c_div = triangle_c_identity(u)
    assert c_flux == pytest.approx(c_div, rel=1e-11, abs=1e-12)
