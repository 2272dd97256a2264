import json
import math

import numpy as np
import pytest
import shapely

from tube_spectra import geometry as geo
from tube_spectra.errors import GeometryError, OverlapError, ParameterError, TruncationError


@pytest.fixture(scope="module")
def hersch():
    return geo.build_hersch_pipe(64)


def test_hersch_has_two_unit_tubes_and_threshold_pi2(hersch):
    assert len(hersch.tubes) == 2
    assert all(t.width == 1.0 and t.infinite for t in hersch.tubes)
    assert geo.threshold_energy(hersch) == pytest.approx(math.pi**2)


def test_hersch_core_area_polygonization(hersch):
    a32 = geo.build_hersch_pipe(32).core_polygon().area
    a128 = geo.build_hersch_pipe(128).core_polygon().area
    assert abs(a32 - a128) < 0.01 * math.pi / 2
    assert a128 == pytest.approx(math.pi / 2, rel=1e-3)


def test_hersch_inradius_is_one_half(hersch):
    r = geo.inradius(hersch, grid_h=0.02, R=4.0)
    assert abs(r.radius - 0.5) <= 0.02


def test_cross_threshold_and_rotation_symmetry():
    cross = geo.build_infinite_cross()
    assert geo.threshold_energy(cross) == pytest.approx(math.pi**2 / 4)
    dom = geo.truncate(cross, 5.0)
    V = dom.pslg.vertices
    rot = V @ np.array([[0.0, 1.0], [-1.0, 0.0]])
    key = lambda P: sorted(map(tuple, np.round(P, 9)))
    assert key(V) == key(rot)


def test_cross_truncation_has_four_caps():
    dom = geo.truncate(geo.build_infinite_cross(), 5.0)
    # four arms of width 2 and length 5 beyond the central 2x2 square
    assert dom.area == pytest.approx(4 * 2 * 5 + 4)
    V = dom.pslg.vertices
    caps = [(i, j) for i, j, _ in dom.pslg.edges if np.max(np.abs(V[[i, j]]), axis=None) == pytest.approx(6.0)
            and np.ptp(np.abs(V[[i, j]]).max(axis=1)) < 1e-12]
    assert len(caps) >= 4


def test_broken_strip_triangle_data():
    th = math.pi / 6
    L, A = geo.broken_strip_triangle(th)
    assert L == pytest.approx(2 / (math.sin(th) * math.cos(th)) + 2 / math.cos(th))
    assert A == pytest.approx(1 / (math.sin(th) * math.cos(th)))
    assert geo.polya_triangle_bound(L, A) == pytest.approx(math.pi**2)


@pytest.mark.parametrize("theta", [0.0, math.pi / 2, -0.1, 2.0])
def test_broken_strip_rejects_bad_angle(theta):
    with pytest.raises(ParameterError):
        geo.build_broken_strip(theta)


def test_broken_strip_mouths_orthogonal_at_quarter_pi():
    spec = geo.build_broken_strip(math.pi / 4)
    for t in spec.tubes:
        a, b = np.asarray(t.mouth, float)
        assert abs(np.dot(b - a, t.axis)) < 1e-12


def test_polya_bound_values():
    assert geo.polya_triangle_bound(3, math.sqrt(3) / 4) == pytest.approx((math.pi / 3) ** 2 * 48)
    assert geo.polya_triangle_bound(2.5, 2.5) == pytest.approx((math.pi / 3) ** 2)
    with pytest.raises(ParameterError):
        geo.polya_triangle_bound(0, 1)
    with pytest.raises(ParameterError):
        geo.polya_triangle_bound(1, -1)


def test_threshold_single_narrow_tube_and_no_tubes():
    spec = geo.DomainSpec("t", geo.build_unit_square().core, (geo.TubeSpec(((1, 0), (1, 0.5)), (1, 0), 0.5),))
    assert geo.threshold_energy(spec) == pytest.approx(4 * math.pi**2)
    with pytest.raises(GeometryError):
        geo.threshold_energy(geo.build_unit_square())


def test_perturbation_tubes_centers_and_markers(hersch):
    spec = geo.attach_perturbation_tubes(hersch, 3, 0.05)
    fin = [t for t in spec.tubes if not t.infinite]
    assert len(fin) == 4
    np.testing.assert_allclose(sorted(t.center[0] for t in fin), [2, 2 + 1 / 3, 2 + 2 / 3, 3], atol=1e-12)
    assert all(t.width == pytest.approx(0.1) and t.length == 1.0 for t in fin)


def test_perturbation_overlap_rejected(hersch):
    # the admissible range is eps < 1/(2n); n=1, eps=0.3 leaves a 0.4 gap and is accepted
    assert len(geo.attach_perturbation_tubes(hersch, 1, 0.3).tubes) == 4
    for n, eps in [(1, 0.5), (3, 1 / 6), (4, 0.2)]:
        with pytest.raises(OverlapError):
            geo.attach_perturbation_tubes(hersch, n, eps)


def test_perturbation_centers():
    assert geo.perturbation_centers(0) == [2.0]
    assert geo.perturbation_centers(2) == [2.0, 2.5, 3.0]


def test_perturbed_inradius(hersch):
    spec = geo.attach_perturbation_tubes(hersch, 1, 0.1)
    r = geo.inradius(spec, grid_h=0.01, R=4.0)
    assert abs(r.radius - (1 + 0.01) / 2) <= 0.01


def test_truncate_area_matches_shoelace(hersch):
    dom = geo.truncate(hersch, 6.0)
    core = hersch.core_polygon().area
    assert dom.area == pytest.approx(core + 2 * 6 * 1, rel=1e-12)


def test_truncate_too_short(hersch):
    with pytest.raises(TruncationError):
        geo.truncate(hersch, 0.5)


def test_truncation_nesting(hersch):
    small = geo.truncate(hersch, 3.0)
    big = geo.truncate(hersch, 7.0)
    assert np.all(big.region.buffer(1e-9).contains(shapely.MultiPoint(small.pslg.vertices)))


def test_compute_r0_envelope(hersch):
    assert 1.0 <= geo.compute_r0(hersch) <= 2.0
    assert 1.0 <= geo.compute_r0(geo.build_infinite_cross()) <= 2.0
    th = math.pi / 6
    spec = geo.build_broken_strip(th)
    r0 = geo.compute_r0(spec)
    # tails start past the triangle core, whose far vertex sits at the apex height
    tri = spec.core_polygon()
    reach = max(np.hypot(x, y) for x, y in tri.exterior.coords)
    assert r0 > 0 and r0 + max(np.linalg.norm(t.origin) for t in spec.tubes) >= 0.5 * reach


def test_domain_json_roundtrip(hersch):
    text = geo.domain_to_json(hersch)
    data = json.loads(text)
    assert set(data) >= {"name", "core", "tubes"}
    assert set(data["core"]) == {"vertices", "edges"}
    assert data["tubes"][0]["length"] == "inf"
    back = geo.domain_from_json(text)
    assert geo.domain_to_json(back) == text


def test_marker_helpers():
    assert geo.marker_kind(geo.sigma(3)) == "SIGMA"
    assert geo.marker_id(geo.sigma(3)) == 3
    assert geo.marker_id(geo.SLIT) is None


def test_attach_tubes_rejects_mouth_past_corner(hersch):
    with pytest.raises(GeometryError):
        geo.attach_tubes(hersch, [0.01], 0.05)


def test_inradius_unit_disk_polygon():
    n = 256
    t = 2 * np.pi * np.arange(n) / n
    spec = geo.build_polygon_domain("disk", np.column_stack([np.cos(t), np.sin(t)]))
    r = geo.inradius(spec, grid_h=0.02)
    assert 1 - math.cos(math.pi / n) - 1e-9 <= 1 - r.radius <= 0.02 + 1e-3
