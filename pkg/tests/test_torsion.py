import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tube_spectra import mesh as ms
from tube_spectra.errors import ConvergenceError, ParameterError
from tube_spectra.torsion import (
    TORSION_COLUMNS,
    TorsionProblem,
    blowup_mesh,
    blowup_submesh,
    extrapolate_power,
    fd_blowup_T,
    gamma_constant,
    hersch_tube_mesh,
    reference_gamma_scaling,
    single_tube_submesh,
    solve_thin_torsion,
    superadditivity_check,
    torsion_bound,
)


@pytest.fixture(scope="module")
def one_tube():
    return hersch_tube_mesh([2.5], 0.05, h=0.1, R=4.0)


@pytest.fixture(scope="module")
def two_tubes():
    return hersch_tube_mesh([2.0, 2.5], 0.05, h=0.1, R=4.0)


def test_zero_load(one_tube):
    r = solve_thin_torsion(TorsionProblem(one_tube, 0.0))
    assert r.T == 0.0 and not r.U.values.any()


def test_sign_symmetry_and_identity(one_tube):
    p = TorsionProblem(one_tube, 1.0)
    a = solve_thin_torsion(p)
    b = solve_thin_torsion(p.scaled(-1.0))
    assert a.T > 0
    assert b.T == pytest.approx(a.T, rel=1e-12)
    assert a.identity_error <= 1e-8


@settings(max_examples=8, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(-3.0, 3.0))
def test_quadratic_homogeneity(c, slope):
    mesh = hersch_tube_mesh([2.5], 0.05, h=0.2, R=3.0, per_mouth=4)
    f = lambda p: 1.0 + slope * (p[:, 0] - 2.5)
    p = TorsionProblem(mesh, f)
    T = solve_thin_torsion(p, tol=1e-13).T
    Tc = solve_thin_torsion(p.scaled(c), tol=1e-13).T
    assert Tc == pytest.approx(c**2 * T, rel=1e-10)


def test_bound_with_discrete_gamma(one_tube):
    p = TorsionProblem(one_tube, 1.0)
    r = solve_thin_torsion(p)
    g = gamma_constant(one_tube)
    assert g <= 1.05 * 0.05
    assert r.T <= torsion_bound(r, p, g) * (1 + 1e-12)
    assert p.sigma_length() == pytest.approx(0.1, abs=1e-12)


def test_no_sigma_facets_rejected():
    m = ms.structured_rectangle(4, 4)
    with pytest.raises(ParameterError):
        TorsionProblem(m, 1.0)


def test_reference_tube_gamma_scales_with_eps():
    g, spread = reference_gamma_scaling([0.1, 0.05], h=0.1)
    assert spread <= 0.05
    assert (g > 0).all()


def test_superadditivity_two_tubes(two_tubes):
    rep = superadditivity_check(two_tubes)
    assert len(rep.T_single) == 2
    assert rep.holds and rep.margin >= 0


def test_single_tube_is_equality(one_tube):
    rep = superadditivity_check(one_tube)
    assert rep.margin == 0.0 and rep.holds


def test_interaction_decays_with_separation():
    near = superadditivity_check(hersch_tube_mesh([2.0, 2.5], 0.05, h=0.1, R=6.0))
    far = superadditivity_check(hersch_tube_mesh([2.0, 4.0], 0.05, h=0.1, R=6.0))
    assert 0 <= far.relative_margin < near.relative_margin


def test_adding_facets_cannot_decrease_T(two_tubes):
    ids = two_tubes.sigma_ids()
    T1 = solve_thin_torsion(TorsionProblem(two_tubes, 1.0, ids[:1])).T
    T2 = solve_thin_torsion(TorsionProblem(two_tubes, 1.0, ids)).T
    assert T2 >= T1


def test_single_tube_submesh_keeps_one_strip(two_tubes):
    strips = sorted(set(np.unique(two_tubes.region).tolist()) - {-1})
    assert len(strips) == 2
    sub = single_tube_submesh(two_tubes, strips[0])
    assert set(np.unique(sub.region).tolist()) == {-1, strips[0]}


def test_power_extrapolation():
    R = np.array([8.0, 16.0, 32.0])
    lim, p = extrapolate_power(R, 0.6 - 3.0 * R**-2.0)
    assert lim == pytest.approx(0.6, abs=1e-12)
    assert p == pytest.approx(2.0)
    with pytest.raises(ConvergenceError):
        extrapolate_power(R, [0.5, 0.6, 0.8])
    with pytest.raises(ParameterError):
        extrapolate_power([1.0, 2.0, 5.0], [0.1, 0.2, 0.25])


def test_blowup_submeshes_increase_T():
    mesh = blowup_mesh(8.0, 2.0, h_sigma=1 / 8, cuts=(2.0, 4.0))
    T = []
    for R in (2.0, 4.0):
        T.append(solve_thin_torsion(TorsionProblem(blowup_submesh(mesh, R), 1.0)).T)
    T.append(solve_thin_torsion(TorsionProblem(mesh, 1.0)).T)
    assert T[0] < T[1] < T[2]
    assert T[0] > 0


def test_fd_oracle_increases_with_box():
    a = fd_blowup_T(2.0, 2.0, 1 / 16)
    b = fd_blowup_T(4.0, 2.0, 1 / 16)
    assert 0 < a < b


def test_column_names():
    assert TORSION_COLUMNS == ("eps", "R_inf", "L", "T", "T_over_eps2", "gamma", "bound_ok")
