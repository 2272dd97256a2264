import math

import numpy as np
import pytest
import scipy.sparse as sp

from tube_spectra import fem
from tube_spectra import geometry as geo
from tube_spectra import mesh as ms
from tube_spectra.errors import AssemblyError, ParameterError
from tube_spectra.spectra import mesh_domain, solve_on_mesh


def two_triangle_square():
    V = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    T = np.array([[0, 1, 2], [0, 2, 3]])
    return ms.Mesh(V, T, np.zeros(4, bool))


@pytest.fixture(scope="module")
def hersch_eig():
    mesh = mesh_domain(geo.build_hersch_pipe(), 8.0, 0.08)
    return solve_on_mesh(mesh, 1, tol=1e-10)


def test_element_matrices_on_unit_right_triangle():
    p = np.array([[0, 0], [1, 0], [0, 1]], float)
    np.testing.assert_allclose(fem.element_stiffness(p[None])[0], [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)
    np.testing.assert_allclose(fem.element_mass(p[None])[0], np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-15)


def test_degenerate_triangle_rejected():
    V = np.array([[0, 0], [1, 0], [2, 0]], float)
    m = ms.Mesh(V, np.array([[0, 1, 2]]), np.zeros(3, bool))
    with pytest.raises(AssemblyError):
        fem.assemble_stiffness(m, restrict=False)
    with pytest.raises(AssemblyError):
        fem.assemble_mass(m, restrict=False)


def test_stiffness_row_sums_vanish():
    m = ms.structured_rectangle(7, 5, 1.3, 0.7)
    K = fem.assemble_stiffness(m, restrict=False)
    np.testing.assert_allclose(np.asarray(K.sum(axis=1)).ravel(), 0, atol=1e-12)


def test_two_triangle_energy_of_x():
    m = two_triangle_square()
    K = fem.assemble_stiffness(m, restrict=False)
    x = m.vertices[:, 0]
    assert x @ K @ x == pytest.approx(1.0, abs=1e-14)
    assert fem.h1_seminorm(fem.interpolate(m, lambda x, y: x, pin=False)) == pytest.approx(1.0)


def test_total_mass_is_area_and_mass_spd():
    m = mesh_domain(geo.build_hersch_pipe(), 4.0, 0.1)
    M_full = fem.assemble_mass(m, restrict=False)
    one = np.ones(m.n_vertices)
    assert one @ M_full @ one == pytest.approx(m.domain.area, rel=1e-12)
    M = fem.assemble_mass(m).toarray()
    np.linalg.cholesky(M)
    K = fem.assemble_stiffness(m)
    assert abs(K - K.T).max() < 1e-14 * abs(K).max()


def test_line_load_partition_of_unity_and_linear_exactness():
    spec = geo.attach_perturbation_tubes(geo.build_hersch_pipe(), 1, 0.05)
    m = ms.triangulate(geo.truncate(spec, 4.0), 0.1)
    b = fem.assemble_line_load(m, 0, 1.0, restrict=False)
    assert b.sum() == pytest.approx(0.1, abs=1e-14)
    assert not fem.assemble_line_load(m, 0, 0.0).any()
    # the mouth endpoints are Dirichlet corners; the solve vector drops their shares
    free = fem.assemble_line_load(m, 0, 1.0)
    assert b[m.dirichlet].sum() > 0
    assert free.sum() == pytest.approx(b.sum() - b[m.dirichlet].sum(), abs=1e-15)
    # f(x, y) = 3x - 1 on [1.95, 2.05] x {1}: integral is 0.1 * (3 * 2 - 1)
    b = fem.assemble_line_load(m, 0, lambda p: 3 * p[:, 0] - 1, restrict=False)
    assert b.sum() == pytest.approx(0.5, abs=1e-13)
    with pytest.raises(ParameterError):
        fem.assemble_line_load(m, 7, 1.0)


def test_norms_of_zero_and_normalized_vector(hersch_eig):
    m = hersch_eig.mesh
    z = fem.FeFunction(m, np.zeros(m.n_vertices))
    assert fem.l2_norm(z) == 0 and fem.h1_seminorm(z) == 0
    u = hersch_eig.function(0)
    assert fem.l2_norm(u) == pytest.approx(1.0, abs=1e-10)
    assert fem.h1_seminorm(u) ** 2 == pytest.approx(hersch_eig.eigenvalues[0], rel=1e-10)


def test_tail_norm_of_constant_probe():
    spec = geo.build_hersch_pipe()
    m = mesh_domain(spec, 6.0, 0.1)
    one = fem.FeFunction(m, np.ones(m.n_vertices))
    # two unit-width tubes: tail area beyond depth 3.3 is 2 * (6 - 3.3)
    assert fem.tail_norm(one, spec, 3.3) == pytest.approx(math.sqrt(2 * 2.7), rel=1e-12)
    assert fem.tail_norm(one, spec, 6.5) == 0.0


def test_tail_partition_and_monotonicity(hersch_eig):
    spec = hersch_eig.domain.spec
    u = hersch_eig.function(0)
    total = fem.l2_norm(u) ** 2
    R = np.arange(1.0, 8.0, 0.37)
    tails = np.array([fem.tail_norm(u, spec, r) for r in R])
    assert np.all(np.diff(tails) <= 1e-15)
    for r in (1.5, 3.1):
        inner = total - fem.slab_mass(u, spec, r, np.inf)
        assert fem.tail_norm(u, spec, r) ** 2 + inner == pytest.approx(total, abs=1e-12)
    # telescoping over an annulus
    a2 = fem.tail_norm(u, spec, 2.0) ** 2 - fem.tail_norm(u, spec, 3.0) ** 2
    assert a2 == pytest.approx(fem.slab_mass(u, spec, 2.0, 3.0), abs=1e-12)


def test_sup_tail(hersch_eig):
    spec = hersch_eig.domain.spec
    u = hersch_eig.function(0)
    z = fem.FeFunction(u.mesh, np.zeros(u.mesh.n_vertices))
    assert fem.sup_norm_tail(z, spec, 2.0) == 0
    assert fem.sup_norm_tail(u, spec, 0.0) == pytest.approx(np.abs(u.values).max())
    S = [fem.sup_norm_tail(u, spec, r) for r in (2, 3, 4, 5, 6)]
    assert all(b < a for a, b in zip(S, S[1:]))


def test_normal_derivative_of_linear_function():
    m = ms.structured_rectangle(10, 4, 2.0, 1.0)
    u = fem.interpolate(m, lambda x, y: 1 - y, pin=False)
    seg = ((0.0, 1.0), (2.0, 1.0))
    pts = np.column_stack([np.linspace(0, 2, 9), np.ones(9)])
    np.testing.assert_allclose(fem.normal_derivative_trace(u, seg, pts), -1.0, atol=1e-12)
    z = fem.FeFunction(m, np.zeros(m.n_vertices))
    np.testing.assert_array_equal(fem.normal_derivative_trace(z, seg, pts), 0.0)
    with pytest.raises(ParameterError):
        fem.normal_derivative_trace(u, seg, [[1.0, 0.5]])


def test_ground_state_trace_is_negative_on_top_wall(hersch_eig):
    u = hersch_eig.function(0)
    seg = ((0.0, 1.0), (8.0, 1.0))
    v = fem.normal_derivative_trace(u, seg, [[2.5, 1.0]])
    assert v[0] < 0
    g = fem.flux_trace(u, hersch_eig.eigenvalues[0], seg, [[2.5, 1.0]])
    assert g[0] < 0 and g[0] == pytest.approx(v[0], rel=0.2)


def test_linear_reproduction_under_refinement():
    m = mesh_domain(geo.build_hersch_pipe(), 3.0, 0.2)
    f = lambda x, y: 0.3 * x - 1.7 * y + 0.2
    vals = []
    for mesh in (m, ms.refine_uniform(m)):
        u = fem.interpolate(mesh, f, pin=False)
        vals.append(fem.quadratic_forms(u))
    # a linear function lies in both P1 spaces, so both quadratic forms coincide
    np.testing.assert_allclose(vals[0], vals[1], rtol=1e-12)
    assert vals[0][0] == pytest.approx((0.3**2 + 1.7**2) * m.domain.area, rel=1e-12)


def test_galerkin_residual_probe():
    from tube_spectra.linalg import cg_solve

    m = ms.structured_rectangle(20, 20)
    s = fem.assemble(m)
    b = s.M @ np.ones(len(s.free))
    x = cg_solve(s.K, b, tol=1e-12)
    assert np.linalg.norm(s.K @ x - b) <= 1e-12 * np.linalg.norm(b) * 10


def test_matrices_are_sparse_csr():
    s = fem.assemble(ms.structured_rectangle(4, 4))
    assert sp.isspmatrix_csr(s.K) or isinstance(s.K, sp.csr_array)
