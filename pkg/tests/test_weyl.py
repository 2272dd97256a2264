import math

import numpy as np
import pytest

from tube_spectra import fem
from tube_spectra import geometry as geo
from tube_spectra.errors import InapplicableError, ParameterError, TruncationError
from tube_spectra.spectra import mesh_domain
from tube_spectra.weyl import (
    WEYL_COLUMNS,
    WeylSpec,
    build_weyl_function,
    essential_threshold_report,
    ps_diagnostics,
    weyl_mesh,
    weyl_values,
)

H = geo.build_hersch_pipe()


def test_support_length_at_threshold():
    ws = WeylSpec.on(H, math.pi**2, 1)
    assert ws.lambda_n - math.pi**2 == pytest.approx(1.0)
    assert ws.R_n == pytest.approx(2 * math.pi)
    assert ws.required_R == pytest.approx(2 + 2 * math.pi + 1)


def test_spec_validation():
    with pytest.raises(InapplicableError):
        WeylSpec.on(H, 0.5 * math.pi**2, 1)
    with pytest.raises(ParameterError):
        WeylSpec(math.pi**2, 0)


def test_truncation_too_short():
    ws = WeylSpec.on(H, math.pi**2, 4)
    mesh = mesh_domain(H, 8.0, 0.2)
    with pytest.raises(TruncationError):
        build_weyl_function(mesh, ws)


@pytest.fixture(scope="module")
def tube_mesh():
    specs = [WeylSpec.on(H, math.pi**2, n) for n in (1, 2)]
    return weyl_mesh(H, specs, 1 / 16), specs


def test_support_inside_tube_slab(tube_mesh):
    mesh, specs = tube_mesh
    for ws in specs:
        U = build_weyl_function(mesh, ws)
        t, s = H.tubes[0].frame(mesh.vertices)
        outside = (t <= ws.r0) | (t >= ws.r0 + ws.R_n) | (s <= 0) | (s >= 1)
        assert not U.values[outside].any()
        # disjoint from anything supported in the half-disk
        core = fem.interpolate(mesh, lambda x, y: np.where(x < 0, 1 - x**2 - y**2, 0.0))
        M = fem.assemble_mass(mesh, restrict=False)
        assert U.values @ (M @ core.values) == 0.0


def test_closed_form_normalization_on_a_fine_grid():
    ws = WeylSpec.on(H, 1.2 * math.pi**2, 2)
    # midpoint rule on the tube slab
    n = 800
    t = ws.r0 + (np.arange(n) + 0.5) * ws.R_n / n
    s = (np.arange(200) + 0.5) / 200
    T, S = np.meshgrid(t, s)
    pts = np.column_stack([T.ravel(), S.ravel()])
    vals = weyl_values(H, ws, pts)
    assert (vals**2).sum() * (ws.R_n / n) * (1 / 200) == pytest.approx(1.0, rel=1e-4)


def test_diagnostics_coarse(tube_mesh):
    mesh, specs = tube_mesh
    system = fem.assemble(mesh)
    energies = []
    for ws in specs:
        d = ps_diagnostics(build_weyl_function(mesh, ws), ws.lam, system, ws.n)
        assert d.mass_error < 0.02
        assert d.energy_error < 0.1
        energies.append(d.energy)
    assert energies[1] < energies[0]


def test_threshold_report_rows():
    rep = essential_threshold_report(H, [0.5 * math.pi**2, math.pi**2, 2 * math.pi**2], n_values=(1, 2), h=1 / 16)
    assert rep.threshold == pytest.approx(math.pi**2)
    bad = [r for r in rep.rows if r.lam < math.pi**2]
    assert len(bad) == 2 and not any(r.applicable for r in bad)
    good = [r for r in rep.rows if r.applicable]
    assert len(good) == 4
    assert all(r.diag.mass_error < 0.02 for r in good)
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(WEYL_COLUMNS)
    assert len(lines) == 7
    for lam in (math.pi**2, 2 * math.pi**2):
        e = [r.diag.energy for r in good if r.lam == lam]
        assert e[1] < e[0]
