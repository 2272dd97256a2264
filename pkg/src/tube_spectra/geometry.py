"""Planar "core + tubes" domains, truncation, and inradius.

A domain is a bounded polygonal core (possibly with slits) plus straight
tubes.  Each tube is a half-strip (or a finite strip) attached along a
mouth segment and running in a fixed direction.  Truncating at depth ``R``
cuts every infinite tube by a segment orthogonal to its axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import shapely
from scipy.spatial import Voronoi, cKDTree
from shapely.geometry import LineString, Polygon

from .errors import ConfigError, GeometryError, OverlapError, ParameterError, TruncationError

OUTER_DIRICHLET = "OUTER_DIRICHLET"
SLIT = "SLIT"
INFINITE = math.inf

# coordinates are snapped to this grid so that pieces built independently
# (core polygon, tube rectangles, mouths) share vertices exactly
SNAP = 1e-12
_ON_SEGMENT_TOL = 1e-10


def tube_mouth(i: int) -> str:
    return f"TUBE_MOUTH:{i}"


def sigma(i: int) -> str:
    return f"SIGMA:{i}"


def cut(i: int) -> str:
    return f"CUT:{i}"


def marker_kind(marker: str) -> str:
    return marker.split(":", 1)[0]


def marker_id(marker: str) -> int | None:
    if ":" in marker:
        return int(marker.split(":", 1)[1])
    return None


def _snap(a):
    return np.round(np.asarray(a, dtype=float) / SNAP) * SNAP


# --------------------------------------------------------------------------
# basic types


@dataclass(frozen=True)
class Pslg:
    """Planar straight-line graph.

    Parameters
    ----------
    vertices : ndarray, shape (N, 2)
    edges : tuple of (int, int, str)
        Vertex index pairs with a marker string.
    """

    vertices: np.ndarray
    edges: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", tuple((int(a), int(b), str(m)) for a, b, m in self.edges))

    def validate(self) -> None:
        """Raise GeometryError if an edge is invalid or two edges cross."""
        v = self.vertices
        if not np.all(np.isfinite(v)):
            raise GeometryError("non-finite vertex coordinates")
        n = len(v)
        for a, b, _ in self.edges:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise GeometryError(f"edge ({a}, {b}) references invalid vertices")
        if len(self.edges) < 2:
            return
        pairs = _crossing_pairs(v, np.array([(a, b) for a, b, _ in self.edges]))
        if len(pairs):
            i, j = pairs[0]
            raise GeometryError(f"edges {self.edges[i][:2]} and {self.edges[j][:2]} cross")

    def segments(self, kinds: Sequence[str] | None = None) -> np.ndarray:
        """Edge coordinates, shape (E, 2, 2), optionally filtered by marker kind."""
        sel = [(a, b) for a, b, m in self.edges if kinds is None or marker_kind(m) in kinds]
        if not sel:
            return np.zeros((0, 2, 2))
        idx = np.array(sel)
        return self.vertices[idx]

    def to_json(self) -> dict:
        return {
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "edges": [[a, b, m] for a, b, m in self.edges],
        }


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _crossing_pairs(v: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Pairs of edges that intersect anywhere except at a shared endpoint."""
    lines = shapely.linestrings(v[e])
    tree = shapely.STRtree(lines)
    left, right = tree.query(lines, predicate="intersects")
    keep = left < right
    left, right = left[keep], right[keep]
    if len(left) == 0:
        return np.zeros((0, 2), dtype=int)
    ea, eb = e[left], e[right]
    shared = (ea[:, :1] == eb).any(axis=1) | (ea[:, 1:] == eb).any(axis=1)
    bad = []
    for k in np.nonzero(~shared)[0]:
        bad.append((left[k], right[k]))
    # edges sharing an endpoint may still overlap collinearly
    for k in np.nonzero(shared)[0]:
        g = shapely.intersection(lines[left[k]], lines[right[k]])
        if g.geom_type != "Point" and not g.is_empty:
            bad.append((left[k], right[k]))
    return np.array(bad, dtype=int).reshape(-1, 2)


@dataclass(frozen=True)
class TubeSpec:
    """Straight tube attached along ``mouth`` and running along ``direction``.

    The lateral coordinate runs from ``mouth[0]`` (0) to ``mouth[1]`` (width);
    the depth coordinate is the distance from the mouth line along ``direction``.
    """

    mouth: tuple
    direction: tuple
    width: float
    length: float = INFINITE

    def __post_init__(self):
        m = _snap(np.asarray(self.mouth, dtype=float).reshape(2, 2))
        d = np.asarray(self.direction, dtype=float).reshape(2)
        object.__setattr__(self, "mouth", (tuple(m[0]), tuple(m[1])))
        object.__setattr__(self, "direction", (float(d[0]), float(d[1])))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "length", float(self.length))
        if not self.width > 0:
            raise GeometryError("tube width must be positive")
        if not self.length > 0:
            raise GeometryError("tube length must be positive")
        if abs(np.hypot(*d) - 1.0) > 1e-9:
            raise GeometryError("tube direction must be a unit vector")
        chord = m[1] - m[0]
        if abs(np.hypot(*chord) - self.width) > 1e-9 * max(1.0, self.width):
            raise GeometryError("tube width must equal mouth length")
        if abs(chord @ d) > 1e-9 * max(1.0, self.width):
            raise GeometryError("tube direction must be orthogonal to its mouth")

    @property
    def infinite(self) -> bool:
        return math.isinf(self.length)

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.mouth[0])

    @property
    def axis(self) -> np.ndarray:
        return np.asarray(self.direction)

    @property
    def lateral_axis(self) -> np.ndarray:
        m = np.asarray(self.mouth)
        return (m[1] - m[0]) / self.width

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.mouth).mean(axis=0)

    def frame(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Return (depth, lateral) coordinates of ``points``."""
        p = np.asarray(points, dtype=float) - self.origin
        return p @ self.axis, p @ self.lateral_axis

    def corners(self, depth: float) -> np.ndarray:
        """Rectangle of the tube up to ``depth``, counter-clockwise."""
        o, ax, lat = self.origin, self.axis, self.lateral_axis
        w = self.width
        pts = np.array([o, o + w * lat, o + w * lat + depth * ax, o + depth * ax])
        if _orient(pts[0], pts[1], pts[2]) < 0:
            pts = pts[::-1]
        return _snap(pts)

    def polygon(self, depth: float) -> Polygon:
        return Polygon(self.corners(depth))

    def to_json(self) -> dict:
        return {
            "mouth": [list(map(float, self.mouth[0])), list(map(float, self.mouth[1]))],
            "dir": [self.direction[0], self.direction[1]],
            "width": self.width,
            "length": "inf" if self.infinite else self.length,
        }


@dataclass(frozen=True)
class DomainSpec:
    """Core PSLG plus tubes.

    Parameters
    ----------
    name : str
    core : Pslg
        Closed loops of OUTER_DIRICHLET / TUBE_MOUTH edges bound the core;
        SLIT and SIGMA edges may lie anywhere in the closure of the domain.
    tubes : tuple of TubeSpec
    circle_segments : int
        Polygonization level of curved core boundaries (0 if none).
    """

    name: str
    core: Pslg
    tubes: tuple = ()
    circle_segments: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tubes", tuple(self.tubes))

    @property
    def infinite_tubes(self) -> list[int]:
        return [i for i, t in enumerate(self.tubes) if t.infinite]

    def core_polygon(self) -> Polygon:
        segs = self.core.segments(kinds=(OUTER_DIRICHLET, "TUBE_MOUTH"))
        if len(segs) == 0:
            return Polygon()
        polys = list(shapely.get_parts(shapely.polygonize(shapely.linestrings(segs))))
        if not polys:
            raise GeometryError(f"core of {self.name!r} does not form a closed loop")
        return shapely.union_all(polys, grid_size=SNAP)

    def validate(self) -> None:
        """Check the core graph and that tube carriers separate far out."""
        self.core.validate()
        compute_r0(self)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "core": self.core.to_json(),
            "tubes": [t.to_json() for t in self.tubes],
        }


def domain_to_json(spec: DomainSpec, path=None) -> str:
    text = json.dumps(spec.to_json(), indent=1, sort_keys=False)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def domain_from_json(data) -> DomainSpec:
    """Parse the JSON domain description; ConfigError names the bad key."""
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError("domain", f"invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError("domain", "expected an object")
    for key in ("name", "core", "tubes"):
        if key not in data:
            raise ConfigError(f"domain.{key}", "missing")
    core = data["core"]
    if not isinstance(core, dict) or "vertices" not in core or "edges" not in core:
        raise ConfigError("domain.core", "needs 'vertices' and 'edges'")
    try:
        verts = np.asarray(core["vertices"], dtype=float).reshape(-1, 2)
    except (TypeError, ValueError) as exc:
        raise ConfigError("domain.core.vertices", "expected [[x, y], ...]") from exc
    edges = []
    for k, e in enumerate(core["edges"]):
        if not (isinstance(e, (list, tuple)) and len(e) == 3):
            raise ConfigError(f"domain.core.edges[{k}]", "expected [i, j, marker]")
        edges.append((int(e[0]), int(e[1]), str(e[2])))
    tubes = []
    for k, t in enumerate(data["tubes"]):
        for key in ("mouth", "dir", "width"):
            if key not in t:
                raise ConfigError(f"domain.tubes[{k}].{key}", "missing")
        length = t.get("length", "inf")
        length = INFINITE if length in ("inf", None) else float(length)
        try:
            tubes.append(TubeSpec(t["mouth"], t["dir"], float(t["width"]), length))
        except GeometryError as exc:
            raise ConfigError(f"domain.tubes[{k}]", str(exc)) from exc
    return DomainSpec(str(data["name"]), Pslg(_snap(verts), edges), tuple(tubes))


# --------------------------------------------------------------------------
# builders


def _arc(center, radius, t0, t1, nseg):
    t = np.linspace(t0, t1, nseg + 1)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def _loop_edges(start, count, marker, closed=True):
    edges = [(start + k, start + k + 1, marker) for k in range(count - 1)]
    if closed:
        edges.append((start + count - 1, start, marker))
    return edges


def build_polygon_domain(name: str, vertices, slits=()) -> DomainSpec:
    """Bounded polygonal domain without tubes.

    Parameters
    ----------
    vertices : array_like, shape (N, 2)
        Boundary loop (either orientation).
    slits : sequence of (int, int)
        Optional SLIT edges between vertices of the loop or extra points.
    """
    v = _snap(vertices)
    edges = _loop_edges(0, len(v), OUTER_DIRICHLET)
    edges += [(a, b, SLIT) for a, b in slits]
    return DomainSpec(name, Pslg(v, edges), ())


def build_unit_square() -> DomainSpec:
    return build_polygon_domain("square", [(0, 0), (1, 0), (1, 1), (0, 1)])


def build_diamond() -> DomainSpec:
    """Square with vertices (0, +-2), (+-2, 0); first eigenvalue pi^2/4."""
    return build_polygon_domain("diamond", [(2, 0), (0, 2), (-2, 0), (0, -2)])


def build_slit_disk(circle_segments: int = 128) -> DomainSpec:
    """Unit disk minus the segment [0, 1] x {0}; first eigenvalue pi^2."""
    if circle_segments < 8:
        raise ParameterError("circle_segments must be >= 8")
    ring = _arc((0.0, 0.0), 1.0, 0.0, 2 * np.pi, circle_segments)[:-1]
    v = np.vstack([ring, [[0.0, 0.0]]])
    edges = _loop_edges(0, circle_segments, OUTER_DIRICHLET)
    edges.append((circle_segments, 0, SLIT))
    return DomainSpec("slit_disk", Pslg(_snap(v), edges), (), circle_segments)


def build_hersch_pipe(circle_segments: int = 64) -> DomainSpec:
    """Half-disk {x < 0} plus two unit half-strips separated by the slit y = 0, x >= 0.

    ``circle_segments`` counts segments of the full circle; the half-disk
    arc uses half of them.
    """
    if circle_segments < 32:
        raise ParameterError("circle_segments must be >= 32")
    half = circle_segments // 2
    arc = _arc((0.0, 0.0), 1.0, np.pi / 2, 3 * np.pi / 2, half)  # (0,1) -> (0,-1)
    v = np.vstack([arc, [[0.0, 0.0], [1.0, 0.0]]])
    origin, slit_end = half + 1, half + 2
    edges = [(k, k + 1, OUTER_DIRICHLET) for k in range(half)]
    edges += [(half, origin, tube_mouth(1)), (origin, 0, tube_mouth(0)), (origin, slit_end, SLIT)]
    tubes = (
        TubeSpec(((0.0, 0.0), (0.0, 1.0)), (1.0, 0.0), 1.0),
        TubeSpec(((0.0, -1.0), (0.0, 0.0)), (1.0, 0.0), 1.0),
    )
    return DomainSpec("hersch", Pslg(_snap(v), edges), tubes, circle_segments)


def build_infinite_cross() -> DomainSpec:
    """Union of the strips R x (-1, 1) and (-1, 1) x R.

    The core is the square with vertices (0, +-2), (+-2, 0); the four tubes
    start on the sides of the central square (-1, 1)^2.
    """
    core = np.array([(2, 0), (0, 2), (-2, 0), (0, -2)], dtype=float)
    edges = _loop_edges(0, 4, OUTER_DIRICHLET)
    tubes = []
    for k in range(4):
        c, s = math.cos(k * math.pi / 2), math.sin(k * math.pi / 2)
        d = np.array([c, s])
        lat = np.array([-s, c])
        mouth = (d - lat, d + lat)
        tubes.append(TubeSpec(_snap(mouth), (round(c), round(s)), 2.0))
    return DomainSpec("cross", Pslg(core, edges), tuple(tubes))


def build_broken_strip(theta: float) -> DomainSpec:
    """V-shaped strip of width 1 opening towards +x with half-angle ``theta``."""
    if not 0 < theta < math.pi / 2:
        raise ParameterError("theta must lie in (0, pi/2)")
    s, c = math.sin(theta), math.cos(theta)
    apex = (-1.0 / s, 0.0)
    top, bottom = (0.0, 1.0 / c), (0.0, -1.0 / c)
    upper_corner, lower_corner = (-s, c), (-s, -c)
    v = _snap([apex, lower_corner, bottom, (0.0, 0.0), top, upper_corner])
    edges = [
        (0, 1, OUTER_DIRICHLET),
        (1, 2, OUTER_DIRICHLET),
        (2, 3, OUTER_DIRICHLET),
        (3, 4, OUTER_DIRICHLET),
        (4, 5, OUTER_DIRICHLET),
        (5, 0, OUTER_DIRICHLET),
        (1, 3, tube_mouth(1)),
        (3, 5, tube_mouth(0)),
    ]
    tubes = (
        TubeSpec(((0.0, 0.0), upper_corner), (c, s), 1.0),
        TubeSpec((lower_corner, (0.0, 0.0)), (c, -s), 1.0),
    )
    return DomainSpec("broken_strip", Pslg(v, edges), tubes, meta={"theta": theta})


def broken_strip_triangle(theta: float) -> tuple[float, float]:
    """Perimeter and area of the triangular core of the broken strip."""
    s, c = math.sin(theta), math.cos(theta)
    return 2.0 / (s * c) + 2.0 / c, 1.0 / (s * c)


def attach_tubes(base: DomainSpec, centers, eps: float, length: float = 1.0) -> DomainSpec:
    """Attach vertical tubes of width ``2 eps`` to the top wall y = 1 of H.

    Tube ``i`` is centred at ``x = centers[i]`` and its mouth is marked SIGMA(i).
    """
    if base.name != "hersch":
        raise GeometryError("perturbation tubes attach to the Hersch pipe only")
    if eps <= 0 or length <= 0:
        raise ParameterError("need eps > 0 and length > 0")
    centers = [float(c) for c in centers]
    if not centers:
        raise ParameterError("at least one tube centre is required")
    if min(centers) - eps <= 0:
        raise GeometryError("tubes must sit on the top wall x > 0")
    cs = sorted(centers)
    if any(b - a <= 2 * eps for a, b in zip(cs, cs[1:])):
        raise OverlapError(f"tubes of half-width {eps} at {cs} overlap")
    v = [tuple(p) for p in base.core.vertices]
    edges = list(base.core.edges)
    tubes = list(base.tubes)
    for i, xc in enumerate(centers):
        a, b = (xc - eps, 1.0), (xc + eps, 1.0)
        edges.append((len(v), len(v) + 1, sigma(i)))
        v += [a, b]
        tubes.append(TubeSpec((b, a), (0.0, 1.0), 2 * eps, length))
    meta = dict(base.meta, eps=eps, centers=centers)
    return DomainSpec("hersch", Pslg(_snap(v), edges), tuple(tubes), base.circle_segments, meta)


def perturbation_centers(n: int) -> list[float]:
    """Tube centres 2 + i/n, i = 0..n (a single centre at 2 when n = 0)."""
    return [2.0] if n == 0 else [2.0 + i / n for i in range(n + 1)]


def attach_perturbation_tubes(base: DomainSpec, n: int, eps: float, length: float = 1.0) -> DomainSpec:
    """Attach ``n + 1`` vertical tubes of width ``2 eps`` on the top wall y = 1 of H.

    Tube ``i`` is centred at x = 2 + i/n (a single tube at x = 2 when n = 0)
    and its mouth is marked SIGMA(i).
    """
    if n < 0 or eps <= 0:
        raise ParameterError("need n >= 0 and eps > 0")
    if n > 0 and eps >= 1.0 / (2 * n):
        raise OverlapError(f"eps={eps} >= 1/(2n)={1.0 / (2 * n)}: tubes overlap")
    spec = attach_tubes(base, perturbation_centers(n), eps, length)
    spec.meta["n"] = n
    return spec


# --------------------------------------------------------------------------
# truncation


@dataclass(frozen=True)
class TruncatedDomain:
    """Bounded domain obtained by cutting every infinite tube at depth ``R``.

    ``pslg`` carries the outer boundary (OUTER_DIRICHLET), slits (SLIT),
    interface segments (SIGMA) and optional interior cut lines (CUT) used to
    build nested meshes.
    """

    pslg: Pslg
    R: float
    r0: float
    spec: DomainSpec
    region: Polygon
    cuts: tuple = ()
    holes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def area(self) -> float:
        return float(self.region.area)

    def boundary_segments(self) -> np.ndarray:
        return self.pslg.segments(kinds=(OUTER_DIRICHLET, SLIT))

    def contains(self, points, R: float | None = None) -> np.ndarray:
        """Points of the closed region truncated at depth ``R`` (default: own R)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        inside = shapely.intersects_xy(self.region, pts[:, 0], pts[:, 1])
        if R is None or R >= self.R:
            return inside
        return inside & ~beyond(self.spec, pts, R)


def beyond(spec: DomainSpec, points, R: float) -> np.ndarray:
    """Points lying in some infinite tube at depth > R (inside its lateral strip)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.zeros(len(pts), dtype=bool)
    for t in spec.tubes:
        if not t.infinite:
            continue
        d, s = t.frame(pts)
        out |= (d > R) & (s >= -1e-12) & (s <= t.width + 1e-12)
    return out


def compute_r0(spec: DomainSpec, grid_step: float = 1.0, r_max: float = 64.0) -> float:
    """Smallest grid radius past which the tubes separate into disjoint tails.

    Tail ``i`` (tube ``i`` beyond depth r) must have zero-area intersection
    with the core, with every other tube, and lie outside the other tails.
    """
    inf_tubes = spec.infinite_tubes
    if not inf_tubes:
        return 0.0
    far = 1e3
    core = spec.core_polygon()
    start = max(grid_step, max(spec.tubes[i].width for i in inf_tubes) / 2)
    r = math.ceil(start / grid_step) * grid_step
    while r <= r_max:
        ok = True
        for i in inf_tubes:
            t = spec.tubes[i]
            tail = Polygon(t.corners(far)).difference(Polygon(t.corners(r)))
            if not core.is_empty and tail.intersection(core).area > 1e-12:
                ok = False
                break
            for j, other in enumerate(spec.tubes):
                if j == i:
                    continue
                carrier = other.polygon(far if other.infinite else other.length)
                if tail.intersection(carrier).area > 1e-12:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return float(r)
        r += grid_step
    raise GeometryError("tubes never separate (assumption on pairwise intersections violated)")


def _region_pieces(spec: DomainSpec, R: float, include_finite: bool = True):
    pieces = []
    core = spec.core_polygon()
    if not core.is_empty:
        pieces.append(core)
    for t in spec.tubes:
        if t.infinite:
            pieces.append(t.polygon(R))
        elif include_finite:
            pieces.append(t.polygon(t.length))
    return pieces


def _split_segments(segs: list, points: np.ndarray) -> list:
    """Split each (a, b, marker) at every point lying on it."""
    if not segs:
        return []
    tree = shapely.STRtree(shapely.points(points))
    lines = shapely.linestrings([[a, b] for a, b, _ in segs])
    si, pi = tree.query(lines, predicate="dwithin", distance=2 * _ON_SEGMENT_TOL)
    order = np.argsort(si, kind="stable")
    si, pi = si[order], pi[order]
    bounds = np.searchsorted(si, np.arange(len(segs) + 1))
    out = []
    for k, (a, b, m) in enumerate(segs):
        a, b = np.asarray(a), np.asarray(b)
        cand = points[pi[bounds[k] : bounds[k + 1]]]
        d = b - a
        L2 = d @ d
        t = ((cand - a) @ d) / L2
        perp = np.abs((cand[:, 0] - a[0]) * d[1] - (cand[:, 1] - a[1]) * d[0]) / math.sqrt(L2)
        on = (perp < _ON_SEGMENT_TOL) & (t > 1e-12) & (t < 1 - 1e-12)
        ts = np.unique(np.concatenate([[0.0, 1.0], t[on]]))
        q = _snap(a + ts[:, None] * d)
        q[0], q[-1] = a, b
        for j in range(len(q) - 1):
            if np.any(q[j] != q[j + 1]):
                out.append((tuple(q[j]), tuple(q[j + 1]), m))
    return out


def _interior_walls(segs: list, region, pieces) -> np.ndarray:
    """For each segment: inside the union but strictly inside no single piece."""
    if not segs:
        return np.zeros(0, dtype=bool)
    mids = np.array([(np.asarray(a) + np.asarray(b)) / 2 for a, b, _ in segs])
    pts = shapely.points(mids)
    ok = shapely.contains_xy(region, mids[:, 0], mids[:, 1])
    ok &= shapely.distance(region.boundary, pts) >= _ON_SEGMENT_TOL
    tree = shapely.STRtree(pieces)
    si, pi = tree.query(pts, predicate="within")
    if len(si):
        deep = shapely.distance(shapely.boundary(np.asarray(pieces, dtype=object)[pi]), pts[si]) > _ON_SEGMENT_TOL
        ok[si[deep]] = False
    return ok


_PRIORITY = {"SIGMA": 0, SLIT: 1, OUTER_DIRICHLET: 2, "CUT": 3}


def _build_pslg(spec: DomainSpec, R: float, cut_depths=(), include_finite=True):
    pieces = _region_pieces(spec, R, include_finite)
    region = shapely.union_all(pieces, grid_size=SNAP)
    if region.geom_type != "Polygon":
        raise GeometryError(f"truncated region of {spec.name!r} is not connected")
    segs = []
    holes = []
    rings = [region.exterior] + list(region.interiors)
    for k, ring in enumerate(rings):
        c = np.asarray(ring.coords)
        for p, q in zip(c[:-1], c[1:]):
            segs.append((tuple(p), tuple(q), OUTER_DIRICHLET))
        if k > 0:
            holes.append(Polygon(ring).representative_point().coords[0])
    # explicit slits and interfaces from the core
    cv = spec.core.vertices
    for a, b, m in spec.core.edges:
        kind = marker_kind(m)
        if kind == SLIT:
            line = LineString([cv[a], cv[b]]).intersection(region)
            for part in shapely.get_parts(line):
                if part.geom_type == "LineString" and part.length > 0:
                    c = np.asarray(part.coords)
                    segs.append((tuple(_snap(c[0])), tuple(_snap(c[-1])), SLIT))
        elif kind == "SIGMA":
            segs.append((tuple(cv[a]), tuple(cv[b]), m))
    # tube walls lying inside the union but in no open piece are slits
    for t in spec.tubes:
        depth = R if t.infinite else t.length
        if not include_finite and not t.infinite:
            continue
        c = t.corners(depth)
        o, ax, lat, w = t.origin, t.axis, t.lateral_axis, t.width
        walls = [(o, o + depth * ax), (o + w * lat, o + w * lat + depth * ax)]
        for a, b in walls:
            segs.append((tuple(_snap(a)), tuple(_snap(b)), "WALL"))
    # cut lines across infinite tubes for nested submeshes
    for k, dcut in enumerate(cut_depths):
        if not 0 < dcut < R:
            raise GeometryError(f"cut depth {dcut} outside (0, {R})")
        for t in spec.tubes:
            if t.infinite:
                a = t.origin + dcut * t.axis
                segs.append((tuple(_snap(a)), tuple(_snap(a + t.width * t.lateral_axis)), cut(k)))
    pts = np.unique(np.array([p for a, b, _ in segs for p in (a, b)]), axis=0)
    segs = _split_segments(segs, pts)
    walls = [sg for sg in segs if marker_kind(sg[2]) == "WALL"]
    keep_wall = iter(_interior_walls(walls, region, pieces))
    best: dict = {}
    for a, b, m in segs:
        key = (a, b) if a <= b else (b, a)
        kind = marker_kind(m)
        if kind == "WALL":
            if not next(keep_wall):
                continue
            m, kind = SLIT, SLIT
        prev = best.get(key)
        if prev is None or _PRIORITY[kind] < _PRIORITY[marker_kind(prev)]:
            best[key] = m
    coords = sorted({p for key in best for p in key})
    index = {p: i for i, p in enumerate(coords)}
    edges = [(index[a], index[b], m) for (a, b), m in sorted(best.items())]
    pslg = Pslg(np.array(coords), edges)
    return pslg, region, np.array(holes).reshape(-1, 2)


def truncate(spec: DomainSpec, R: float, cuts: Sequence[float] = ()) -> TruncatedDomain:
    """Cut every infinite tube of ``spec`` at depth ``R``.

    Parameters
    ----------
    cuts : sequence of float
        Depths (< R) of additional interior cut lines; a mesh of the result
        restricted to depth <= cut is a conforming mesh of the shorter
        truncation.
    """
    r0 = compute_r0(spec)
    if spec.infinite_tubes and R < r0:
        raise TruncationError(f"R={R} is below r0={r0}")
    pslg, region, holes = _build_pslg(spec, R, tuple(cuts))
    return TruncatedDomain(pslg, float(R), r0, spec, region, tuple(float(c) for c in cuts), holes)


def threshold_energy(spec: DomainSpec) -> float:
    """Minimum over infinite tubes of the cross-section ground energy pi^2 / w^2."""
    widths = [spec.tubes[i].width for i in spec.infinite_tubes]
    if not widths:
        raise GeometryError("threshold undefined: domain has no infinite tube")
    if min(widths) <= 0:
        raise GeometryError("tube widths must be positive")
    return min(math.pi**2 / w**2 for w in widths)


def polya_triangle_bound(L: float, A: float) -> float:
    """Upper bound (pi/3)^2 (L/A)^2 for the first eigenvalue of a triangle."""
    if L <= 0 or A <= 0:
        raise ParameterError("perimeter and area must be positive")
    return (math.pi / 3) ** 2 * (L / A) ** 2


# --------------------------------------------------------------------------
# inradius


class Inradius(NamedTuple):
    radius: float
    center: tuple


def _nearest_boundary(tree, points) -> np.ndarray:
    pts = shapely.points(points)
    idx, dist = tree.query_nearest(pts, return_distance=True, all_matches=False)
    out = np.full(len(points), np.inf)
    np.minimum.at(out, idx[0], dist)
    return out


def _closest_on_segments(p, a, b):
    d = b - a
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    return a + t[:, None] * d


def _newton_polish(centers, radii, segs, tree, iters=12):
    """Move each center to the circle tangent to its three nearest features."""
    c = np.array(centers, dtype=float)
    ci, si = tree.query(shapely.points(c), predicate="dwithin", distance=np.asarray(radii) * 1.01 + 1e-9)
    order = np.argsort(ci, kind="stable")
    ci, si = ci[order], si[order]
    bounds = np.searchsorted(ci, np.arange(len(c) + 1))
    feats = []
    for k in range(len(c)):
        near = np.sort(si[bounds[k] : bounds[k + 1]])
        if len(near) < 3:
            feats.append(None)
            continue
        q = _closest_on_segments(np.repeat(c[k : k + 1], len(near), 0), segs[near, 0], segs[near, 1])
        dist = np.hypot(*(q - c[k]).T)
        order = np.argsort(dist, kind="stable")
        chosen, seen = [], []
        for j in order:
            if any(np.hypot(*(q[j] - s)) < 1e-9 for s in seen):
                continue
            chosen.append(near[j])
            seen.append(q[j])
            if len(chosen) == 3:
                break
        feats.append(chosen if len(chosen) == 3 else None)
    out = []
    for k in range(len(c)):
        if feats[k] is None:
            out.append(c[k])
            continue
        f = np.array(feats[k])
        x = np.array([c[k, 0], c[k, 1], radii[k]])
        for _ in range(iters):
            q = _closest_on_segments(np.repeat(x[None, :2], 3, 0), segs[f, 0], segs[f, 1])
            diff = x[:2] - q
            d = np.hypot(*diff.T)
            if np.any(d < 1e-14):
                break
            F = d - x[2]
            J = np.column_stack([diff / d[:, None], -np.ones(3)])
            try:
                step = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                break
            x = x + step
            if np.max(np.abs(step)) < 1e-15:
                break
        out.append(x[:2] if np.all(np.isfinite(x)) else c[k])
    return np.array(out)


def _golden_max(fun, lo, hi, steps):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = fun(x1), fun(x2)
    for _ in range(steps):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = fun(x2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def inradius(domain, grid_h: float = 0.01, refine_steps: int = 40, R: float | None = None) -> Inradius:
    """Radius and center of the largest disk inside the domain.

    Exact point-to-boundary distances (slits count as boundary) are evaluated
    on a grid of spacing ``grid_h``; the best grid point is refined by
    coordinate-wise golden-section search, and Voronoi vertices of boundary
    samples are polished to exact three-contact circles.  The returned radius
    is always the exact boundary distance of the returned center, so it never
    overestimates the inradius.

    Parameters
    ----------
    domain : DomainSpec or TruncatedDomain
        Infinite tubes of a DomainSpec are truncated at ``R`` (default: a
        depth comfortably past r0).
    """
    if grid_h <= 0:
        raise ParameterError("grid_h must be positive")
    if isinstance(domain, DomainSpec):
        if R is None:
            widths = [t.width for t in domain.tubes] or [0.0]
            R = compute_r0(domain) + 4.0 + 2 * max(widths)
        domain = truncate(domain, R)
    region = domain.region
    if region.is_empty or region.area <= 0:
        raise GeometryError("empty region")
    pieces = shapely.STRtree(_region_pieces(domain.spec, domain.R, True))

    def inside(p):
        # the pieces are simple polygons; the union can be a comb with
        # thousands of teeth where point-in-polygon is slow
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        hit, _ = pieces.query(shapely.points(p), predicate="within")
        out = np.zeros(len(p), dtype=bool)
        out[hit] = True
        return out

    segs = domain.boundary_segments()
    lines = shapely.linestrings(segs)
    tree = shapely.STRtree(lines)
    x0, y0, x1, y1 = region.bounds
    gx = np.arange(x0 + grid_h / 2, x1, grid_h)
    gy = np.arange(y0 + grid_h / 2, y1, grid_h)
    X, Y = np.meshgrid(gx, gy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[inside(pts)]
    if len(pts) == 0:
        pts = np.array([region.representative_point().coords[0]])
    d = _nearest_boundary(tree, pts)
    k = int(np.argmax(d))
    best_c, best_r = pts[k], d[k]

    def dist_at(p):
        if not inside(p)[0]:
            return -np.inf
        return float(_nearest_boundary(tree, np.array([p]))[0])

    c = best_c.copy()
    for _ in range(2):
        xs, fx = _golden_max(lambda t: dist_at((t, c[1])), c[0] - grid_h, c[0] + grid_h, refine_steps // 2)
        c[0] = xs
        ys, fy = _golden_max(lambda t: dist_at((c[0], t)), c[1] - grid_h, c[1] + grid_h, refine_steps // 2)
        c[1] = ys
    fc = dist_at(c)
    if fc > best_r:
        best_c, best_r = c.copy(), fc

    # Voronoi candidates from boundary samples near high grid points
    high = pts[d >= best_r - 2 * grid_h]
    samples = [domain.pslg.vertices]
    for a, b in segs:
        m = max(1, int(math.ceil(np.hypot(*(b - a)) / grid_h)))
        t = (np.arange(1, m) / m)[:, None]
        samples.append(a + t * (b - a))
    samples = np.unique(np.vstack(samples), axis=0)
    reach = best_r + 3 * grid_h
    gap, _ = cKDTree(high).query(samples, distance_upper_bound=reach)
    samples = samples[np.isfinite(gap)]
    if len(samples) >= 4:
        vor = Voronoi(samples)
        cand = vor.vertices
        cand = cand[inside(cand)]
        if len(cand):
            dc = _nearest_boundary(tree, cand)
            keep = dc >= best_r - 2 * grid_h
            cand, dc = cand[keep], dc[keep]
            cand = np.vstack([cand, best_c[None]])
            dc = np.append(dc, best_r)
            polished = _newton_polish(cand, dc, segs, tree)
            polished = polished[inside(polished)]
            if len(polished):
                dp = _nearest_boundary(tree, polished)
                j = int(np.argmax(dp))
                if dp[j] > best_r:
                    best_c, best_r = polished[j], dp[j]
    return Inradius(float(best_r), (float(best_c[0]), float(best_c[1])))
