import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tube_spectra import fem
from tube_spectra import geometry as geo
from tube_spectra import mesh as ms
from tube_spectra.decay import (
    DecayProfile,
    check_linf_l2,
    compute_tail_profile,
    linf_l2_ratio,
    linf_l2_stability,
    paper_decay_constants,
    tail_profile,
    verify_decay_bounds,
)
from tube_spectra.errors import InapplicableError, ParameterError
from tube_spectra.spectra import mesh_domain, solve_on_mesh


@pytest.fixture(scope="module")
def hersch_ground():
    mesh = mesh_domain(geo.build_hersch_pipe(), 10.0, 0.08)
    return solve_on_mesh(mesh, 1, tol=1e-10)


def test_constants_half_threshold():
    E = math.pi**2
    c = paper_decay_constants(E, E / 2, 2.0)
    assert c.C_Omega_j == pytest.approx(4 / math.pi**2 * (16 + math.pi**2), rel=1e-14)
    q = c.C_Omega_j / (c.C_Omega_j + 1)
    assert c.beta_j == pytest.approx(math.sqrt(q))
    assert c.C1_j == pytest.approx(q ** (-2.0))
    json.loads(c.to_json())


def test_constants_trivial_case():
    c = paper_decay_constants(1.0, 0.0, 0.0)
    assert c.C_Omega_j == 18.0
    assert c.beta_j == pytest.approx(math.sqrt(18 / 19))
    assert c.C1_j == pytest.approx(19 / 18)


def test_beta_tends_to_one_at_threshold():
    betas = [paper_decay_constants(1.0, 1.0 - d, 2.0).beta_j for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert np.all(np.diff(betas) > 0) and betas[-1] > 1 - 1e-3


def test_constants_inapplicable_at_or_above_threshold():
    with pytest.raises(InapplicableError):
        paper_decay_constants(1.0, 1.0, 2.0)
    with pytest.raises(InapplicableError):
        paper_decay_constants(1.0, 1.5, 2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 50.0), st.floats(0.0, 0.98), st.floats(0.0, 0.98), st.floats(0.0, 4.0))
def test_constant_increasing_in_lambda(E, a, b, r0):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6:
        return
    c_lo = paper_decay_constants(E, lo * E, r0)
    c_hi = paper_decay_constants(E, hi * E, r0)
    assert c_hi.C_Omega_j > c_lo.C_Omega_j
    assert 0 < c_lo.beta_j < c_hi.beta_j < 1


def test_ground_state_tail_is_dominated(hersch_ground):
    spec = hersch_ground.domain.spec
    lam = hersch_ground.eigenvalues[0]
    prof = compute_tail_profile(hersch_ground, spec)
    assert prof.monotone()
    c = paper_decay_constants(geo.threshold_energy(spec), lam, hersch_ground.mesh.domain.r0)
    chk = verify_decay_bounds(prof, c)
    assert chk.passed
    assert not chk.included[prof.R < c.r0 + 1 - 1e-12].any()
    assert prof.rate >= c.rate
    assert prof.rate >= math.sqrt(math.pi**2 - lam) - 0.05
    lines = chk.to_csv().splitlines()
    assert lines[0] == "R,A,S,paper_bound,pass"


def test_halved_beta_fails_far_out():
    # a tail decaying exactly at the bound's rate passes; halving beta must then fail
    c = paper_decay_constants(math.pi**2, 0.9 * math.pi**2, 1.0)
    R = np.arange(1.0, 12.01, 0.5)
    A = 0.9 * c.bound(R)
    prof = DecayProfile(R, A, A, c.rate, (2.0, 10.0), 1.0)
    assert verify_decay_bounds(prof, c).passed
    chk = verify_decay_bounds(prof, dataclasses.replace(c, beta_j=c.beta_j / 2))
    assert not chk.passed
    assert not chk.l2_pass[-1]


def test_non_eigenfunction_probe_reported_not_raised(hersch_ground):
    mesh = hersch_ground.mesh
    spec = mesh.domain.spec
    probe = fem.interpolate(mesh, lambda x, y: (x > 5).astype(float))
    prof = tail_profile(probe, spec, np.arange(2.0, 10.01, 0.5), 10.0, 2.0)
    c = paper_decay_constants(math.pi**2, 8.0, 2.0)
    chk = verify_decay_bounds(prof, c)
    assert chk.passed is False


def test_grid_outside_mesh_rejected(hersch_ground):
    spec = hersch_ground.domain.spec
    with pytest.raises(ParameterError):
        compute_tail_profile(hersch_ground, spec, R_grid=[2.0, 11.0])


def test_tail_telescoping(hersch_ground):
    spec = hersch_ground.domain.spec
    u = hersch_ground.function(0)
    prof = compute_tail_profile(hersch_ground, spec, R_grid=np.arange(2.0, 9.01, 1.0))
    for i in range(len(prof.R) - 1):
        annulus = fem.slab_mass(u, spec, prof.R[i], prof.R[i + 1])
        assert prof.A[i] ** 2 - prof.A[i + 1] ** 2 == pytest.approx(annulus, abs=1e-10)


def test_linf_ratio_unit_square_closed_form():
    m = ms.structured_rectangle(64, 64)
    u = fem.interpolate(m, lambda x, y: 2 * np.sin(np.pi * x) * np.sin(np.pi * y))
    lam = 2 * math.pi**2
    r = linf_l2_ratio(u, lam)
    assert r == pytest.approx(2 / math.sqrt(lam), rel=1e-3)
    assert linf_l2_ratio(7 * u, lam) == pytest.approx(r, rel=1e-14)


def test_linf_ratio_stable_under_refinement():
    base = mesh_domain(geo.build_hersch_pipe(), 6.0, 0.1)
    results = [solve_on_mesh(base, 1, 1e-10), solve_on_mesh(ms.refine_uniform(base), 1, 1e-10)]
    ratios, var = linf_l2_stability(results)
    assert var <= 0.10
    assert ratios[0] == pytest.approx(check_linf_l2(results[0]))
