import json
import math

import numpy as np
import pytest

from tube_spectra.errors import ParameterError
from tube_spectra.perturb import (
    PERTURB_COLUMNS,
    DropRow,
    DropStudy,
    MeshPolicy,
    PerturbationReport,
    choose_n0,
    dense_eps_schedule,
    drop_row,
    hersch_ground_states,
    n0_threshold,
    normal_derivative_profile,
    thin_rigidity_T,
    thin_rigidity_bound,
    perturbed_mesh,
    verdict_from,
)

COARSE = MeshPolicy(h=0.1, R=6.0, per_mouth=8)


@pytest.fixture(scope="module")
def levels():
    return hersch_ground_states((0.2, 0.1, 0.05), R=6.0)


@pytest.fixture(scope="module")
def profile(levels):
    return normal_derivative_profile(levels)


def test_n0_formula():
    assert choose_n0(8.0, 0.5, 1.0, 4.0) == 6
    assert n0_threshold(8.0, 0.5, 1.0, 8.0) == pytest.approx(n0_threshold(8.0, 0.5, 1.0, 4.0) / 2)
    assert choose_n0(9.26, 0.5, 0.63, 0.0123) >= 1
    for bad in [(8.0, 0.5, 0.0, 4.0), (8.0, 0.5, 1.0, -1.0), (8.0, 0.0, 1.0, 1.0)]:
        with pytest.raises(ParameterError):
            choose_n0(*bad)


def test_dense_schedule_stays_below_overlap():
    eps = dense_eps_schedule(100)
    assert eps == sorted(eps, reverse=True)
    assert max(eps) < 1 / 200
    with pytest.raises(ParameterError):
        dense_eps_schedule(3, (0.6,))


def test_profile_negative_and_decaying(profile):
    assert (profile.f < 0).all()
    assert abs(profile.at(4.0)) < abs(profile.at(2.0))
    assert (profile.one_sided < 0).all()
    assert profile.m_min() == pytest.approx(profile.f[-1] ** 2)
    json.dumps(profile.to_json())


def test_profile_is_linear_in_u(levels, profile):
    doubled = normal_derivative_profile(levels, scale=2.0)
    np.testing.assert_allclose(doubled.f, 2 * profile.f, rtol=1e-12)
    with pytest.raises(ParameterError):
        normal_derivative_profile(levels, x=[0.5])


def test_rho_H_in_known_window(levels):
    rho = 0.25 * levels[-1].eigenvalues[0]
    assert 0.6197 < rho < math.pi**2 / 4


def test_rigidity_bound_and_superadditivity(profile):
    from tube_spectra.torsion import TorsionProblem, single_tube_submesh, solve_thin_torsion

    eps = 0.05
    mesh = perturbed_mesh(1, eps, COARSE)
    T = thin_rigidity_T(mesh, profile).T
    assert 0 < T <= thin_rigidity_bound(1, eps, profile)
    strips = sorted(set(np.unique(mesh.region).tolist()) - {-1})
    singles = []
    for s in strips:
        sub = single_tube_submesh(mesh, s)
        singles.append(solve_thin_torsion(TorsionProblem(sub, profile)).T)
    assert T >= sum(singles) * (1 - 1e-10)


def test_rigidity_scales_like_eps_squared(profile):
    T = [thin_rigidity_T(perturbed_mesh(1, e, COARSE), profile).T for e in (0.04, 0.02)]
    assert 0.2 <= T[1] / T[0] <= 0.3


def test_drop_grows_with_tube_count(profile):
    one = drop_row(0, 0.05, profile, COARSE, grid_h=0.02)
    four = drop_row(3, 0.05, profile, COARSE, grid_h=0.02)
    assert one.drop > 0 and four.drop > one.drop
    assert four.n_vertices > one.n_vertices
    assert one.inradius2 == pytest.approx(0.25 + 0.05**2 / 2, abs=0.02)


def row(eps, drop, T, rho_slope, lam=9.26, n=3):
    pert = lam - drop
    # choose inradius so that (r2 * pert - 0.25 * lam) / eps^2 equals rho_slope
    r2 = (rho_slope * eps**2 + 0.25 * lam) / pert
    return DropRow(n, eps, lam, pert, T, r2, 0.25, 1.0, 100)


def test_verdict_logic():
    down = DropStudy(3, [row(e, 0.5 * e**2, 0.4 * e**2, -1.0 - e) for e in (0.04, 0.02, 0.01)], alpha=0.5)
    up = DropStudy(3, [row(e, 0.5 * e**2, 0.4 * e**2, 2.0 + e) for e in (0.04, 0.02, 0.01)], alpha=0.5)
    mixed = DropStudy(3, [row(e, 0.5 * e**2, 0.4 * e**2, s) for e, s in ((0.04, 1.0), (0.02, -1.0), (0.01, -2.0))], alpha=0.5)
    short = DropStudy(3, [row(e, 0.5 * e**2, 0.4 * e**2, -1.0) for e in (0.04, 0.02)], alpha=0.5)
    assert verdict_from(down)[0] is True
    assert verdict_from(down)[1] == pytest.approx(-1.0)
    assert verdict_from(up)[0] is False
    assert verdict_from(mixed)[0] == "inconclusive"
    assert verdict_from(short)[0] == "inconclusive"


def test_study_fits_and_bounds():
    rows = [row(e, 0.5 * e**2 + e**3, 0.45 * e**2, -1.0) for e in (0.04, 0.02, 0.01)]
    s = DropStudy(3, rows, alpha=0.5)
    assert s.strictly_decreasing
    assert s.fitted_drop_over_eps2 == pytest.approx(0.5, abs=2e-3)
    assert s.predicted_drop_over_eps2 == pytest.approx(0.5)
    assert all(s.bounds_ok)
    assert s.consistency() == {"drop_ge_T": True, "T_ge_prediction": True}


def test_report_outputs(profile):
    rows = [row(e, 0.5 * e**2, 0.4 * e**2, -1.0) for e in (0.04, 0.02, 0.01)]
    s = DropStudy(3, rows, alpha=0.5)
    verdict, fitted, diag = verdict_from(s)
    rep = PerturbationReport(9.26, 0.5, 0.5, profile.m_min(), 7, profile, s, verdict, fitted, diag)
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(PERTURB_COLUMNS)
    assert len(lines) == 4 and lines[1].endswith("decrease")
    data = json.loads(rep.to_json())
    assert data["verdict"] is True and data["n0"] == 7
