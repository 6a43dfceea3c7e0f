from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gradedrt.fields import (VectorField, build_counterexample_field, piola_pullback,
                             polynomial_field, rectangle_rt0_field, rt0_field,
                             singular_field, singular_pair_field, trig_divfree_field,
                             trig_field)
from gradedrt.mesh import (PARALLELOGRAM, TRIANGLE, FaceGeometry, GradingSpec,
                           build_graded_face_mesh, build_reference_graded_square,
                           build_reference_graded_triangle)
from gradedrt.norms import l2_error
from gradedrt.rt import (RTFunction, commuting_defect, edge_flux, edge_fluxes, eval_rt,
                         interpolate_rt, local_basis, project_piecewise_constant,
                         reference_coefficients, rt_from_field_on_mesh)
from gradedrt.stability import EXPECTED_FLUXES, counterexample_report, triangle_c_identity

UNIT_FACE = FaceGeometry(((0, 0, 0), (1, 0, 0), (0, 1, 0)))
SKEW_FACE = FaceGeometry(((0.2, 0.1, 0.0), (1.3, 0.4, 0.2), (0.5, 1.1, 0.9)))

coeff = st.floats(-3, 3, allow_nan=False)


def _meshes(N=3, beta=2.0):
    s = GradingSpec(N, beta)
    return [build_reference_graded_square(s), build_reference_graded_triangle(s),
            build_graded_face_mesh(UNIT_FACE, s)]


# ------------------------------------------------------------ local bases

@pytest.mark.parametrize("kind", [TRIANGLE, PARALLELOGRAM])
def test_dof_matrix_is_identity_exactly(kind):
    M = local_basis(kind).dof_matrix(exact=True)
    n = len(M)
    assert all(M[i][j] == Fraction(int(i == j)) for i in range(n) for j in range(n))


@pytest.mark.parametrize("kind", [TRIANGLE, PARALLELOGRAM])
def test_dof_matrix_float_route(kind):
    M = local_basis(kind).dof_matrix(exact=False)
    assert np.max(np.abs(M - np.eye(len(M)))) <= 1e-14


def test_triangle_basis_shares_c():
    C = local_basis(TRIANGLE).coefficients()
    assert np.array_equal(C[:, 2], C[:, 3])
    # divergence of each basis field is its total outward flux over area 1/2
    assert np.allclose(local_basis(TRIANGLE).divergence(), 2.0)
    assert np.allclose(local_basis(PARALLELOGRAM).divergence(), 1.0)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        local_basis(7)


# ------------------------------------------------------------ interpolation

@given(coeff, coeff, coeff)
def test_rt0_reproduction_all_domains(a, b, c):
    u = rt0_field(a, b, c)
    for mesh in _meshes():
        rt = interpolate_rt(u, mesh, method="quadrature")
        exact = rt_from_field_on_mesh(mesh, a, b, c)
        assert np.max(np.abs(rt.coef - exact.coef)) <= 1e-12 * (1 + abs(a) + abs(b) + abs(c))
        assert l2_error(u, rt) <= 1e-12 * (1 + abs(a) + abs(b) + abs(c))


@given(coeff, coeff, coeff, coeff)
def test_rectangle_rt0_reproduction(a, b, c, d):
    u = rectangle_rt0_field(a, b, c, d)
    rt = interpolate_rt(u, build_reference_graded_square(GradingSpec(4, 2.5)))
    assert l2_error(u, rt) <= 1e-12 * (1 + abs(a) + abs(b) + abs(c) + abs(d))


def test_swap_field_interpolant_on_reference_triangle():
    # (x2, x1) has fluxes (-1/2, 1/2, 0) and interpolant (1/2, 1/2)
    u = polynomial_field({(0, 1): 1.0}, {(1, 0): 1.0})
    mesh = build_reference_graded_triangle(GradingSpec(1, 1.0))
    rt = interpolate_rt(u, mesh)
    assert np.allclose(rt.local_fluxes()[0, :3], [-0.5, 0.5, 0.0], atol=1e-15)
    v = rt.evaluate(np.array([0]), np.array([[0.3, 0.1], [0.9, 0.7]]))[0]
    assert np.allclose(v, 0.5, atol=1e-15)


def test_counterexample_local_fluxes():
    for eps in (0.5, 0.25):
        u = build_counterexample_field(eps)
        mesh = build_reference_graded_triangle(GradingSpec(1, 1.0))
        F_stream = interpolate_rt(u, mesh, method="stream").local_fluxes()[0, :3]
        F_quad = interpolate_rt(u, mesh, method="quadrature").local_fluxes()[0, :3]
        assert np.max(np.abs(F_stream - EXPECTED_FLUXES)) <= 1e-12
        assert np.max(np.abs(F_quad - EXPECTED_FLUXES)) <= 1e-8


@pytest.mark.parametrize("eps", [0.5, 0.1, 1e-3])
def test_counterexample_interpolant_is_unit_vector(eps):
    row = counterexample_report(eps, levels=60)
    assert row.flux_residual <= 1e-12
    assert row.pi_value == pytest.approx((0.0, 1.0), abs=1e-12)
    assert row.pi_u2_l2 == pytest.approx(np.sqrt(0.5), rel=1e-12)


def test_stream_and_quadrature_fluxes_agree():
    for u in (trig_divfree_field(), singular_field(0.3), singular_pair_field(-0.2, -1)):
        for mesh in _meshes(4, 2.0)[:2]:
            a = interpolate_rt(u, mesh, method="stream").coef
            b = interpolate_rt(u, mesh, method="quadrature").coef
            assert np.max(np.abs(a - b)) <= 1e-8


def test_flux_method_errors():
    with pytest.raises(ValueError):
        edge_fluxes(trig_field(), [[0, 0]], [[1, 0]], method="stream")
    with pytest.raises(ValueError):
        edge_fluxes(trig_field(), [[0, 0]], [[1, 0]], method="magic")


def test_edge_flux_orientation():
    # constant (0, 1) through (0,0)->(1,0): normal (0,-1)
    u = rt0_field(0.0, 1.0, 0.0)
    assert edge_flux(u, (np.array([0.0, 0.0]), np.array([1.0, 0.0]))) == pytest.approx(-1.0)
    assert edge_flux(u, (np.array([1.0, 0.0]), np.array([0.0, 0.0]))) == pytest.approx(1.0)


def test_piecewise_constant_projection_examples():
    mesh = build_reference_graded_square(GradingSpec(2, 2.0))
    p = project_piecewise_constant(lambda x1, x2: x1 + 0 * x2, mesh)
    centers = mesh.b + 0.5 * np.einsum("kij,j->ki", mesh.A, np.ones(2))
    assert np.allclose(p.values, centers[:, 0], rtol=1e-14)
    assert np.all(project_piecewise_constant(3.0, mesh).values == 3.0)


@pytest.mark.parametrize("u", [trig_field(), polynomial_field({(2, 1): 1.0, (0, 0): 2.0},
                                                              {(1, 2): -1.0, (3, 0): 0.5})])
def test_commuting_diagram(u):
    for mesh in _meshes(4, 2.0):
        assert commuting_defect(u, mesh) <= 1e-10


def test_eval_rt_rejects_outside_points():
    mesh = build_reference_graded_triangle(GradingSpec(1, 1.0))
    rt = interpolate_rt(trig_field(), mesh)
    with pytest.raises(ValueError):
        eval_rt(rt, 0, [0.2, 0.7])


def test_coefficient_length_checked():
    mesh = build_reference_graded_square(GradingSpec(2, 2.0))
    with pytest.raises(ValueError):
        RTFunction(mesh, np.zeros(mesh.n_edges + 1))


# ------------------------------------------------------------ properties

def _normal_jump(rt):
    """Max jump of the normal component across interior edges at midpoints."""
    mesh = rt.mesh
    V = mesh.vertices
    worst = 0.0
    for e in np.flatnonzero(~mesh.boundary_edge_mask):
        P, Q = V[mesh.edges[e]]
        mid = 0.5 * (P + Q)
        nrm = np.array([Q[1] - P[1], P[0] - Q[0]])
        vals = []
        for k in mesh.edge_elems[e]:
            xh = np.linalg.solve(mesh.A[k], mid - mesh.b[k])
            vals.append(rt.evaluate(np.array([k]), xh[None, :])[0, 0] @ nrm)
        worst = max(worst, abs(vals[0] - vals[1]))
    return worst


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.integers(1, 4), st.floats(1.0, 2.5))
def test_normal_continuity_property(c, N, beta):
    u = polynomial_field({(0, 0): c[0], (1, 1): c[1]}, {(0, 0): c[2], (2, 0): c[3]})
    for mesh in (build_reference_graded_triangle(GradingSpec(N, beta)),
                 build_graded_face_mesh(SKEW_FACE, GradingSpec(N, beta))):
        assert _normal_jump(interpolate_rt(u, mesh)) <= 1e-12


@given(st.integers(1, 4), st.floats(1.0, 2.5))
def test_interpolation_is_idempotent(N, beta):
    mesh = build_graded_face_mesh(SKEW_FACE, GradingSpec(N, beta))
    rt = interpolate_rt(trig_field(), mesh)

    def as_field(x1, x2):
        raise AssertionError

    # re-interpolating the discrete field elementwise reproduces its fluxes
    V = mesh.vertices
    F = rt.local_fluxes()
    for k in range(mesh.n_elements):
        nloc = mesh.n_local[k]
        idx = mesh.conn[k, :nloc]
        for i in range(nloc):
            P, Q = V[idx[i]], V[idx[(i + 1) % nloc]]
            t = 0.5
            x = P + t * (Q - P)
            xh = np.linalg.solve(mesh.A[k], x - mesh.b[k])
            val = rt.evaluate(np.array([k]), xh[None, :])[0, 0]
            flux = val @ np.array([Q[1] - P[1], P[0] - Q[0]])
            assert flux == pytest.approx(F[k, i], abs=1e-12)


@given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(-1, 1), st.floats(-2, 2), st.floats(-2, 2))
def test_piola_pullback_preserves_fluxes(h1, h2, shear, b1, b2):
    A = np.array([[h1, shear], [0.0, h2]])
    b = np.array([b1, b2])
    u = polynomial_field({(1, 0): 1.0, (0, 2): 0.5}, {(1, 1): -1.0, (0, 0): 0.3})
    uh = piola_pullback(u, A, b)
    P, Q = np.array([0.1, 0.2]), np.array([0.7, 0.4])
    lhs = edge_flux(uh, (P, Q), method="quadrature")
    rhs = edge_flux(u, (A @ P + b, A @ Q + b), method="quadrature")
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@given(coeff, coeff, coeff, st.floats(-1, 1))
def test_triangle_c_equals_divergence_integral(a, b, c, q):
    u = polynomial_field({(0, 0): a, (1, 0): c, (0, 2): q}, {(0, 0): b, (0, 1): c, (2, 0): q})
    c_flux, c_div = triangle_c_identity(u)
    assert c_flux == pytest.approx(c_div, rel=1e-11, abs=1e-11)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_reference_coefficients_inverse_of_fluxes(F):
    a, b, c, d = reference_coefficients(TRIANGLE, F)
    u = rt0_field(float(a), float(b), float(c))
    mesh = build_reference_graded_triangle(GradingSpec(1, 1.0))
    assert np.allclose(interpolate_rt(u, mesh).local_fluxes()[0, :3], F, atol=1e-13)
