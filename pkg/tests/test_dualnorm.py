import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from gradedrt.dualnorm import (DualNormSpec, _p1_mass, _p1_stiffness, _red_refine,
                               discrete_dual_half_norm, dual_from_gram, grid_space, load_vector,
                               sinc_spectral_dual, slobodeckij_gram, spectral_dual,
                               spectral_dual_half_norm, triangulate_mesh)
from gradedrt.mesh import PARALLELOGRAM, TRIANGLE, GradingSpec, build_reference_graded_triangle
from gradedrt.norms import Region

Q, T = Region.square(), Region.triangle()
smooth = lambda x1, x2: np.sin(np.pi * x1) * np.cos(2 * x2)


@pytest.mark.parametrize("kind, n_nodes, n_tris", [(PARALLELOGRAM, 25, 32), (TRIANGLE, 15, 16)])
def test_grid_space_counts(kind, n_nodes, n_tris):
    sp = grid_space(kind, 2)
    assert len(sp.nodes) == n_nodes and len(sp.tris) == n_tris


def test_spec_rejects_zero_level():
    with pytest.raises(ValueError):
        DualNormSpec(0)


def test_p1_matrices_basic_identities():
    sp = grid_space(TRIANGLE, 3)
    M, K = _p1_mass(sp.nodes, sp.tris), _p1_stiffness(sp.nodes, sp.tris)
    one = np.ones(len(sp.nodes))
    assert one @ M @ one == pytest.approx(0.5, rel=1e-14)
    assert np.max(np.abs(K @ one)) <= 1e-12
    x = sp.nodes[:, 0]
    assert x @ K @ x == pytest.approx(0.5, rel=1e-13)


@pytest.mark.parametrize("region, area", [(Q, 1.0), (T, 0.5)])
@pytest.mark.parametrize("m", [2, 3])
def test_constant_load_has_dual_norm_sqrt_area(region, area, m):
    # constants lie in the test space and have zero seminorm
    assert discrete_dual_half_norm(1.0, region, DualNormSpec(m)) == pytest.approx(np.sqrt(area), rel=1e-11)
    assert spectral_dual_half_norm(1.0, region, m) == pytest.approx(np.sqrt(area), rel=1e-11)


def test_zero_load_gives_zero():
    assert discrete_dual_half_norm(0.0, Q, DualNormSpec(2)) == 0.0


def test_slobodeckij_gram_symmetric_positive():
    sp, G, _, _ = slobodeckij_gram(T, DualNormSpec(2))
    assert np.max(np.abs(G - G.T)) <= 1e-12 * np.max(np.abs(G))
    assert np.min(np.linalg.eigvalsh(G)) > 0


def test_dual_from_gram_rejects_singular():
    with pytest.raises(ValueError):
        dual_from_gram(np.ones(2), np.array([[1.0, 1.0], [1.0, 1.0]]))


@pytest.mark.parametrize("region", [Q, T])
def test_slobodeckij_and_spectral_routes_equivalent(region):
    # the two H^{1/2} norms are equivalent; their dual norms stay in a fixed band
    for m in (2, 3):
        a = discrete_dual_half_norm(smooth, region, DualNormSpec(m))
        b = spectral_dual_half_norm(smooth, region, m)
        assert 0.5 <= a / b <= 2.0


@pytest.mark.parametrize("region", [Q, T])
def test_dual_norm_self_convergence(region):
    v = [discrete_dual_half_norm(smooth, region, DualNormSpec(m)) for m in (2, 3, 4)]
    assert abs(v[2] - v[1]) <= abs(v[1] - v[0])
    assert abs(v[2] - v[1]) / v[2] <= 1e-3


def test_sinc_route_matches_eigensolver():
    nodes, tris = triangulate_mesh(build_reference_graded_triangle(GradingSpec(4, 2.0)), refine=1)
    F = load_vector(smooth, nodes, tris)
    dense = spectral_dual(nodes, tris).norm(F)
    sinc = sinc_spectral_dual(nodes, tris).norm(F)
    assert sinc == pytest.approx(dense, rel=1e-7)


def test_sinc_route_accepts_several_loads():
    sp = grid_space(PARALLELOGRAM, 3)
    F1 = load_vector(smooth, sp.nodes, sp.tris)
    F2 = load_vector(lambda x1, x2: x1 * x2, sp.nodes, sp.tris)
    sd = sinc_spectral_dual(sp.nodes, sp.tris)
    both = sd.norm(np.column_stack([F1, F2]))
    assert both == pytest.approx([sd.norm(F1), sd.norm(F2)], rel=1e-14)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_dual_norm_is_a_norm(a, b):
    sp = grid_space(TRIANGLE, 2)
    sd = spectral_dual(sp.nodes, sp.tris)
    F = load_vector(smooth, sp.nodes, sp.tris)
    G = load_vector(lambda x1, x2: x1 - x2 ** 2, sp.nodes, sp.tris)
    assert sd.norm(a * F + b * G) <= abs(a) * sd.norm(F) + abs(b) * sd.norm(G) + 1e-12
    assert sd.norm(a * F) == pytest.approx(abs(a) * sd.norm(F), rel=1e-12, abs=1e-14)


def test_dual_norm_below_l2_norm():
    # ||f||_{-1/2} <= ||f||_0 for the interpolation norm
    sp = grid_space(PARALLELOGRAM, 3)
    sd = spectral_dual(sp.nodes, sp.tris)
    F = load_vector(smooth, sp.nodes, sp.tris)
    x = np.linspace(0, 1, 401)
    X1, X2 = np.meshgrid(x, x)
    l2 = np.sqrt(trapezoid(trapezoid(smooth(X1, X2) ** 2, x), x))
    assert sd.norm(F) <= l2


def test_red_refinement_quarters_triangles():
    sp = grid_space(TRIANGLE, 1)
    nodes, tris = _red_refine(sp.nodes, sp.tris)
    assert len(tris) == 4 * len(sp.tris)
    P = nodes[tris]
    area = 0.5 * np.abs((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                        - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))
    assert area.sum() == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("kind", [PARALLELOGRAM, TRIANGLE])
@pytest.mark.parametrize("h1, h2", [(0.5, 0.125), (0.25, 0.0625)])
def test_dual_norm_diagonal_scaling_bound(kind, h1, h2):
    # ||f o B||_{ref} <= C max(h1, h2)^{1/2} / (h1 h2) ||f||_{B ref}; C = 1 covers the
    # fields below.  Constants: ||1|| = sqrt(area), so C = sqrt(h1 h2 / max(h1, h2))
    fac = max(h1, h2) ** 0.5 / (h1 * h2)
    R = Region.scaled(kind, h1, h2)
    for f in (lambda x1, x2: np.sin(3 * x1) * np.cos(5 * x2), lambda x1, x2: x2 - 0.1 + 0 * x1):
        ref = spectral_dual_half_norm(lambda x1, x2: f(h1 * x1, h2 * x2), Region(kind), 4)
        phys = spectral_dual_half_norm(f, R, 4)
        assert ref <= 1.0 * fac * phys
    one_ref = spectral_dual_half_norm(1.0, Region(kind), 4)
    one_phys = spectral_dual_half_norm(1.0, R, 4)
    assert one_ref / (fac * one_phys) == pytest.approx(np.sqrt(min(h1, h2)), rel=1e-9)
