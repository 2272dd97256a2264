"""Triangulation of truncated domains.

Bulk regions are meshed by constrained Delaunay triangulation with Ruppert
refinement (Shewchuk's Triangle) and an outer loop that enforces a maximum
edge length.  Slits are cut open afterwards by duplicating their vertices.
Finite thin tubes are meshed by structured strips stitched to the bulk mesh
along their mouth.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import triangle
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import GeometryError, ParameterError

log = logging.getLogger(__name__)

_OUTER, _SLIT, _CUT0, _SIGMA0 = 1, 2, 1_000, 100_000

Sizing = Callable[[np.ndarray], np.ndarray]


@dataclass
class Mesh:
    """P1 triangulation with Dirichlet and interface markers.

    Attributes
    ----------
    vertices : ndarray, shape (N, 2)
    triangles : ndarray, shape (T, 3)
        Counter-clockwise vertex triples.
    dirichlet : ndarray of bool, shape (N,)
    sigma_facets : ndarray, shape (F, 3)
        Interface edges ``(a, b, id)``.
    h_target : float
        Maximum edge length requested for the bulk.
    region : ndarray, shape (T,)
        -1 for bulk triangles, otherwise the index of the strip tube.
    slit_pairs : ndarray, shape (P, 2)
        Pairs of coincident vertices created by cutting slits open.
    domain : TruncatedDomain or None
        Provenance.
    parent : ndarray or None
        For a submesh, the index of every vertex in the mesh it was ultimately cut from.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    dirichlet: np.ndarray
    sigma_facets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    h_target: float = math.nan
    region: np.ndarray | None = None
    slit_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    domain: object = None
    parent: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.dirichlet = np.asarray(self.dirichlet, dtype=bool)
        self.sigma_facets = np.asarray(self.sigma_facets, dtype=np.int64).reshape(-1, 3)
        self.slit_pairs = np.asarray(self.slit_pairs, dtype=np.int64).reshape(-1, 2)
        if self.region is None:
            self.region = np.full(len(self.triangles), -1, dtype=np.int64)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet)

    @property
    def spec(self):
        return None if self.domain is None else self.domain.spec

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (sorted vertex pairs) and the number of triangles using each."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        n = max(self.n_vertices, 1)
        uniq, counts = np.unique(e[:, 0] * n + e[:, 1], return_counts=True)
        return np.column_stack([uniq // n, uniq % n]), counts

    def boundary_edges(self) -> np.ndarray:
        e, c = self.edges()
        return e[c == 1]

    def sigma_ids(self) -> list[int]:
        return sorted(set(int(i) for i in self.sigma_facets[:, 2]))

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "dirichlet": self.dirichlet.tolist(),
            "sigma_facets": self.sigma_facets.tolist(),
        }


def mesh_to_json(mesh: Mesh, path=None) -> str:
    text = json.dumps(mesh.to_json())
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def mesh_from_json(data) -> Mesh:
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    return Mesh(
        np.asarray(data["vertices"], dtype=float),
        np.asarray(data["triangles"], dtype=np.int64),
        np.asarray(data["dirichlet"], dtype=bool),
        np.asarray(data.get("sigma_facets", []), dtype=np.int64).reshape(-1, 3),
    )


# --------------------------------------------------------------------------
# sizing helpers


def graded_sizing(sources: np.ndarray, h_min: float, grading: float, h_max: float = math.inf) -> Sizing:
    """Size field ``min(h_max, h_min + grading * dist(x, sources))``.

    ``sources`` are points (densely sample segments before passing them).
    """
    tree = cKDTree(np.asarray(sources, dtype=float).reshape(-1, 2))

    def size(points):
        d, _ = tree.query(points)
        return np.minimum(h_max, h_min + grading * d)

    return size


def sample_segments(segments: np.ndarray, spacing: float) -> np.ndarray:
    """Points along each segment at most ``spacing`` apart (endpoints included)."""
    out = []
    for a, b in np.asarray(segments).reshape(-1, 2, 2):
        m = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
        t = np.linspace(0.0, 1.0, m + 1)[:, None]
        out.append(a + t * (b - a))
    return np.vstack(out) if out else np.zeros((0, 2))


def min_sizing(*fields: Sizing) -> Sizing:
    def size(points):
        return np.min([f(points) for f in fields], axis=0)

    return size


def sigma_sizing(domain, h: float, per_mouth: int = 8, grading: float = 0.3) -> Sizing | None:
    """Default grading towards SIGMA segments: mouth resolved by ``per_mouth`` edges."""
    segs = domain.pslg.segments(kinds=("SIGMA",))
    if len(segs) == 0:
        return None
    lengths = np.hypot(*(segs[:, 1] - segs[:, 0]).T)
    # each SIGMA edge of the PSLG is one mouth (or a piece of it)
    h_loc = min(h, float(lengths.min()) / per_mouth * 1.0000001)
    return graded_sizing(sample_segments(segs, h_loc), h_loc, grading, h)


# --------------------------------------------------------------------------
# core triangulation


def _presplit(vertices, segments, size: Sizing):
    """Subdivide segments so each piece is about as long as the local size.

    Break points equidistribute the integral of ``1 / size`` along the segment.
    """
    verts = [np.asarray(vertices, dtype=float)]
    new_segs, new_marks = [], []
    n = len(vertices)
    for (a, b), mk in zip(segments[0], segments[1]):
        pa, pb = vertices[a], vertices[b]
        L = float(np.hypot(*(pb - pa)))
        t = np.linspace(0.0, 1.0, 257)
        h_min = float(size(pa + t[:, None] * (pb - pa)).min())
        m = int(min(max(256, math.ceil(8 * L / h_min)), 2_000_000))
        t = np.linspace(0.0, 1.0, m + 1)
        dens = L / size(pa + t[:, None] * (pb - pa))
        F = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
        pieces = max(1, int(math.ceil(F[-1] - 1e-9)))
        ts = np.interp(np.linspace(0.0, F[-1], pieces + 1), F, t)
        idx = [a]
        for tt in ts[1:-1]:
            verts.append((pa + tt * (pb - pa))[None])
            idx.append(n)
            n += 1
        idx.append(b)
        for i, j in zip(idx[:-1], idx[1:]):
            new_segs.append((i, j))
            new_marks.append(mk)
    return np.vstack(verts), np.array(new_segs, dtype=np.int32), np.array(new_marks, dtype=np.int32)


def _signed_area2(p):
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    return d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]


def _longest_edges(V, T):
    p = V[T]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    return np.sqrt((e**2).sum(-1)).max(axis=1)


def mesh_pslg(
    vertices, segments, markers, size: Sizing, holes=None, min_angle: float = 30.0, max_rounds: int = 60, keep_segments: bool = False
):
    """Quality CDT of a PSLG with every edge no longer than ``size`` at its triangle.

    ``keep_segments`` forbids Steiner points on the (presplit) input
    segments, so boundary nodes are exactly the presplit ones.

    Returns the Triangle output dictionary.
    """
    y = "Y" if keep_segments else ""
    # frozen segments need some slack so the adjacent interior edges can meet the size
    split_size = (lambda p: 0.85 * size(p)) if keep_segments else size
    V, S, Mk = _presplit(np.asarray(vertices, float), (np.asarray(segments), np.asarray(markers)), split_size)
    data = {"vertices": V, "segments": S, "segment_markers": Mk[:, None]}
    if holes is not None and len(holes):
        data["holes"] = np.asarray(holes, float)
    h0 = float(size(V).max())
    out = triangle.triangulate(data, f"pq{min_angle:g}a{0.45 * h0 * h0:.17g}{y}Q")
    for _ in range(max_rounds):
        Vt, Tt = out["vertices"], out["triangles"]
        target = size(Vt[Tt].mean(axis=1))
        emax = _longest_edges(Vt, Tt)
        bad = emax > target * (1 + 1e-9)
        if not bad.any():
            break
        p = Vt[Tt]
        area = 0.5 * np.abs(_signed_area2(p))
        amax = np.where(bad, np.minimum(0.5 * area, 0.42 * target**2), -1.0)
        out = triangle.triangulate(dict(out, triangle_max_area=amax), f"rpq{min_angle:g}a{y}Q")
    else:
        raise GeometryError("size field could not be met")
    if "triangles" not in out or len(out["triangles"]) == 0:
        raise GeometryError("triangulation produced no triangles")
    return out


def _marker_code(m: str) -> int:
    kind, idx = geo.marker_kind(m), geo.marker_id(m)
    if kind == geo.OUTER_DIRICHLET:
        return _OUTER
    if kind == geo.SLIT:
        return _SLIT
    if kind == "CUT":
        return _CUT0 + idx
    if kind == "SIGMA":
        return _SIGMA0 + idx
    raise GeometryError(f"unsupported marker {m!r}")


def _vertex_triangle_star(T, n):
    rows = T.ravel()
    order = np.argsort(rows, kind="stable")
    tri_of = order // 3
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, rows + 1, 1)
    return np.cumsum(ptr), tri_of


def _cut_slits(V, T, slit_edges, outer_vertices):
    """Duplicate slit vertices so that the two faces of a slit are disconnected.

    The triangles around a slit vertex are grouped by walking across
    non-slit edges; each extra group receives a copy of the vertex.
    """
    if len(slit_edges) == 0:
        return V, T, np.zeros((0, 2), dtype=np.int64)
    slit_set = {(min(a, b), max(a, b)) for a, b in slit_edges}
    slit_vertices = np.unique(np.asarray(slit_edges).ravel())
    ptr, tri_of = _vertex_triangle_star(T, len(V))
    T = T.copy()
    new_vertices, pairs = [], []
    n = len(V)
    for v in slit_vertices:
        star = tri_of[ptr[v] : ptr[v + 1]]
        parent = {t: t for t in star}

        def find(t):
            while parent[t] != t:
                parent[t] = parent[parent[t]]
                t = parent[t]
            return t

        # neighbours of v inside each triangle
        others = {t: [w for w in T[t] if w != v] for t in star}
        by_edge: dict = {}
        for t in star:
            for w in others[t]:
                key = (min(v, w), max(v, w))
                if key in slit_set:
                    continue
                by_edge.setdefault(key, []).append(t)
        for ts in by_edge.values():
            for t in ts[1:]:
                ra, rb = find(ts[0]), find(t)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict = {}
        for t in star:
            groups.setdefault(find(t), []).append(t)
        if len(groups) <= 1:
            continue
        ordered = sorted(groups.values(), key=lambda g: min(g))
        for g in ordered[1:]:
            new_vertices.append(V[v])
            pairs.append((v, n))
            for t in g:
                T[t][T[t] == v] = n
            n += 1
    if new_vertices:
        V = np.vstack([V, np.array(new_vertices)])
    return V, T, np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _finish(V, T, seg, seg_mark, h, domain=None):
    """Markers, slit surgery and Mesh construction from Triangle output."""
    seg = np.asarray(seg, dtype=np.int64).reshape(-1, 2)
    seg_mark = np.asarray(seg_mark, dtype=np.int64).ravel()
    outer = seg[seg_mark == _OUTER]
    slit = seg[seg_mark == _SLIT]
    sig_sel = seg_mark >= _SIGMA0
    sig = np.column_stack([seg[sig_sel], seg_mark[sig_sel] - _SIGMA0]) if sig_sel.any() else np.zeros((0, 3), np.int64)
    dirichlet = np.zeros(len(V), dtype=bool)
    dirichlet[outer.ravel()] = True
    dirichlet[slit.ravel()] = True
    V, T, pairs = _cut_slits(V, T, slit, np.unique(outer))
    dirichlet = np.concatenate([dirichlet, np.ones(len(V) - len(dirichlet), dtype=bool)])
    mesh = Mesh(V, T, dirichlet, sig, h, slit_pairs=pairs, domain=domain)
    _mark_topological_boundary(mesh)
    return mesh


def _mark_topological_boundary(mesh: Mesh) -> None:
    b = mesh.boundary_edges()
    mesh.dirichlet[b.ravel()] = True


def _orient_sigma(mesh: Mesh, spec) -> None:
    """Order SIGMA facets along the mouth direction of their tube (cosmetic, deterministic)."""
    if spec is None or len(mesh.sigma_facets) == 0:
        return
    sf = mesh.sigma_facets
    key = np.lexsort((mesh.vertices[sf[:, 0], 1], mesh.vertices[sf[:, 0], 0], sf[:, 2]))
    mesh.sigma_facets = sf[key]


# --------------------------------------------------------------------------
# structured strips for finite tubes


def _strip_rows(first: float, length: float, growth: float, cap: float) -> np.ndarray:
    d = [0.0]
    step = first
    while d[-1] + step < length - 1e-12:
        d.append(d[-1] + step)
        step = min(step * growth, cap)
    if len(d) > 1 and length - d[-1] < 0.5 * (d[-1] - d[-2]):
        d[-1] = length
    else:
        d.append(length)
    return np.array(d)


def _attach_strips(mesh: Mesh, tubes, growth: float, cap: float) -> None:
    """Stitch structured strips onto the SIGMA facets of finite tubes.

    ``tubes`` lists ``(tube, tube_index, sigma_id)``.  Columns are the
    interface nodes, rows grow geometrically from the mean column spacing.
    """
    sf = mesh.sigma_facets
    order = np.argsort(sf[:, 2], kind="stable")
    sf = sf[order]
    ids = sf[:, 2]
    base = mesh.n_vertices
    pts_all, tris_all, dir_all, reg_all = [], [], [], []
    for tube, tube_index, sigma_id in tubes:
        lo, hi = np.searchsorted(ids, [sigma_id, sigma_id + 1])
        facets = sf[lo:hi]
        if len(facets) == 0:
            raise GeometryError(f"tube {tube_index} has no SIGMA({sigma_id}) facets in the bulk mesh")
        nodes = np.unique(facets[:, :2])
        depth, lateral = tube.frame(mesh.vertices[nodes])
        if np.max(np.abs(depth)) > 1e-9:
            raise GeometryError("SIGMA facets do not lie on the tube mouth")
        o = np.argsort(lateral)
        nodes, lateral = nodes[o], lateral[o]
        spacing = float(np.diff(lateral).mean())
        rows = _strip_rows(spacing, tube.length, growth, max(cap, spacing))
        m, k = len(nodes), len(rows)
        grid = np.empty((k, m), dtype=np.int64)
        grid[0] = nodes
        grid[1:] = base + np.arange((k - 1) * m).reshape(k - 1, m)
        base += (k - 1) * m
        pts_all.append((tube.origin + lateral[None, :, None] * tube.lateral_axis + rows[1:, None, None] * tube.axis).reshape(-1, 2))
        d = np.zeros((k - 1, m), dtype=bool)
        d[:, 0] = d[:, -1] = True
        d[-1, :] = True
        dir_all.append(d.ravel())
        t = _grid_triangles(grid)
        tris_all.append(t)
        reg_all.append(np.full(len(t), tube_index, dtype=np.int64))
    if not tubes:
        return
    V = np.vstack([mesh.vertices] + pts_all)
    tris = np.vstack(tris_all)
    p = V[tris]
    neg = _signed_area2(p) < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    mesh.vertices = V
    mesh.triangles = np.vstack([mesh.triangles, tris])
    mesh.dirichlet = np.concatenate([mesh.dirichlet] + dir_all)
    mesh.region = np.concatenate([mesh.region] + reg_all)


def _grid_triangles(grid: np.ndarray) -> np.ndarray:
    """Split the quads of a node grid along alternating diagonals (vectorized)."""
    a, b = grid[:-1, :-1], grid[:-1, 1:]
    c, d = grid[1:, 1:], grid[1:, :-1]
    r, q = np.meshgrid(np.arange(grid.shape[0] - 1), np.arange(grid.shape[1] - 1), indexing="ij")
    even = ((r + q) % 2 == 0).ravel()
    a, b, c, d = a.ravel(), b.ravel(), c.ravel(), d.ravel()
    t1 = np.where(even[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    t2 = np.where(even[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    return np.vstack([t1, t2])


def _extrude_tube(mesh: Mesh, tube, tube_index: int, d0: float, breaks, row_spacing: float) -> None:
    """Continue an infinite tube from its cap at depth ``d0`` by a structured strip.

    Columns are the bulk nodes on the cap; rows are at most ``row_spacing``
    apart and hit every depth in ``breaks`` exactly.
    """
    be = mesh.boundary_edges()
    depth, lateral = tube.frame(mesh.vertices)
    w = tube.width
    on_cap = (np.abs(depth - d0) < 1e-9) & (lateral > -1e-9) & (lateral < w + 1e-9)
    cap_edges = be[on_cap[be[:, 0]] & on_cap[be[:, 1]]]
    if len(cap_edges) == 0:
        raise GeometryError(f"tube {tube_index} has no cap edges at depth {d0}")
    nodes = np.unique(cap_edges)
    order = np.argsort(lateral[nodes])
    nodes = nodes[order]
    lat = lateral[nodes]
    if abs(lat[0]) > 1e-9 or abs(lat[-1] - w) > 1e-9:
        raise GeometryError(f"cap of tube {tube_index} at depth {d0} is not fully meshed")
    spacing = row_spacing
    rows = [d0]
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        k = max(1, int(math.ceil((hi - lo) / spacing - 1e-9)))
        rows.extend(np.linspace(lo, hi, k + 1)[1:])
    rows = np.array(rows)
    m, k = len(nodes), len(rows)
    grid = np.empty((k, m), dtype=np.int64)
    grid[0] = nodes
    base = mesh.n_vertices
    grid[1:] = base + np.arange((k - 1) * m).reshape(k - 1, m)
    pts = tube.origin + lat[None, :, None] * tube.lateral_axis + rows[1:, None, None] * tube.axis
    dir_new = np.zeros((k - 1, m), dtype=bool)
    dir_new[:, 0] = dir_new[:, -1] = True
    dir_new[-1, :] = True
    tris = _grid_triangles(grid)
    V = np.vstack([mesh.vertices, pts.reshape(-1, 2)])
    p = V[tris]
    neg = _signed_area2(p) < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    # cap nodes strictly inside the tube are interior now
    mesh.dirichlet[nodes[1:-1]] = False
    mesh.vertices = V
    mesh.triangles = np.vstack([mesh.triangles, tris])
    mesh.dirichlet = np.concatenate([mesh.dirichlet, dir_new.ravel()])
    mesh.region = np.concatenate([mesh.region, np.full(len(tris), -1, dtype=np.int64)])


def triangulate(
    domain,
    h: float,
    sizing: Sizing | None = None,
    *,
    min_angle: float = 30.0,
    strip_tubes: bool = True,
    sigma_per_mouth: int = 8,
    sigma_grading: float = 0.3,
    strip_growth: float = 1.35,
    structured_from: float | None = None,
    keep_segments: bool = False,
) -> Mesh:
    """Mesh a truncated domain.

    Parameters
    ----------
    domain : TruncatedDomain
    h : float
        Maximum edge length in the bulk.
    sizing : callable, optional
        Local maximum edge length ``sizing(points) -> sizes``; combined with
        ``h`` by taking the minimum.  When the domain has SIGMA interfaces
        the bulk is also graded towards them so each mouth carries
        ``sigma_per_mouth`` edges.
    strip_tubes : bool
        Mesh finite tubes as structured strips stitched to the bulk mesh
        (rows grow geometrically by ``strip_growth`` away from the mouth).
        Otherwise they are triangulated with the bulk.
    structured_from : float, optional
        Depth beyond which infinite tubes are meshed as uniform structured
        strips (spacing <= h) instead of by Delaunay refinement.  Much
        cheaper for long truncations.  Must be >= r0.  The bulk is then
        meshed with ``keep_segments`` so the cap carries the presplit,
        near-uniform spacing.
    keep_segments : bool
        No Steiner points on boundary and interface segments.
    """
    if h <= 0:
        raise ParameterError("h must be positive")
    if structured_from is not None and domain.spec.infinite_tubes and structured_from < domain.R:
        return _triangulate_extruded(
            domain,
            h,
            sizing,
            structured_from,
            min_angle=min_angle,
            strip_tubes=strip_tubes,
            sigma_per_mouth=sigma_per_mouth,
            sigma_grading=sigma_grading,
            strip_growth=strip_growth,
        )
    spec = domain.spec
    inf_widths = [spec.tubes[i].width for i in spec.infinite_tubes]
    if inf_widths and h > min(inf_widths) / 3 + 1e-12:
        raise ParameterError(f"h={h} exceeds min tube width / 3")
    strips = [i for i, t in enumerate(spec.tubes) if not t.infinite] if strip_tubes else []
    if strips:
        pslg, _, holes = geo._build_pslg(spec, domain.R, domain.cuts, include_finite=False)
    else:
        pslg, holes = domain.pslg, domain.holes
    fields = [lambda p: np.full(len(p), h)]
    if sizing is not None:
        fields.append(sizing)
    auto = sigma_sizing(domain, h, sigma_per_mouth, sigma_grading)
    if auto is not None:
        fields.append(auto)
    size = min_sizing(*fields)
    segs = np.array([(a, b) for a, b, _ in pslg.edges])
    marks = np.array([_marker_code(m) for _, _, m in pslg.edges])
    out = mesh_pslg(pslg.vertices, segs, marks, size, holes, min_angle, keep_segments=keep_segments)
    mesh = _finish(out["vertices"], out["triangles"], out["segments"], out["segment_markers"], h, domain)
    if strips:
        # interface nodes become interior once the tubes are attached
        sigma_nodes = np.unique(mesh.sigma_facets[:, :2])
        outer_nodes = np.unique(out["segments"][out["segment_markers"].ravel() == _OUTER])
        mesh.dirichlet[np.setdiff1d(sigma_nodes, outer_nodes)] = False
        id_of = _sigma_id_of_tube(spec, pslg)
        cap = max(h, 1e-300)
        _attach_strips(mesh, [(spec.tubes[ti], ti, id_of[ti]) for ti in strips], strip_growth, cap)
    _orient_sigma(mesh, spec)
    return mesh


def _triangulate_extruded(domain, h, sizing, d0, **kw) -> Mesh:
    spec = domain.spec
    if d0 < domain.r0:
        raise ParameterError(f"structured_from={d0} is below r0={domain.r0}")
    inner = geo.truncate(spec, d0, cuts=[c for c in domain.cuts if c < d0])
    mesh = triangulate(inner, h, sizing, keep_segments=True, **kw)
    breaks = [d0] + [c for c in domain.cuts if c > d0] + [domain.R]
    for ti in spec.infinite_tubes:
        _extrude_tube(mesh, spec.tubes[ti], ti, d0, breaks, h)
    _mark_topological_boundary(mesh)
    mesh.slit_pairs = _coincident_pairs(mesh.vertices, np.zeros((1, 2)))
    mesh.domain = domain
    return mesh


def _sigma_id_of_tube(spec, pslg) -> dict:
    """Match each finite tube to the SIGMA marker lying on its mouth."""
    v = pslg.vertices
    sig = [(a, b, geo.marker_id(m)) for a, b, m in pslg.edges if geo.marker_kind(m) == "SIGMA"]
    out = {}
    if sig:
        ends = np.array([(a, b) for a, b, _ in sig])
        ids = [i for *_, i in sig]
    for ti, t in enumerate(spec.tubes):
        if t.infinite:
            continue
        if sig:
            d, s = t.frame(v[ends.ravel()])
            ok = (np.abs(d) < 1e-9) & (s > -1e-9) & (s < t.width + 1e-9)
            hit = np.flatnonzero(ok.reshape(-1, 2).all(axis=1))
            if len(hit):
                out[ti] = ids[hit[0]]
        if ti not in out:
            raise GeometryError(f"finite tube {ti} has no SIGMA interface on its mouth")
    return out


def structured_rectangle(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0, origin=(0.0, 0.0)) -> Mesh:
    """Right-triangle grid on a rectangle with all boundary vertices Dirichlet."""
    x = origin[0] + np.linspace(0, lx, nx + 1)
    y = origin[1] + np.linspace(0, ly, ny + 1)
    X, Y = np.meshgrid(x, y)
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    T = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    dirichlet = np.zeros(len(V), dtype=bool)
    dirichlet[idx[0]] = dirichlet[idx[-1]] = dirichlet[idx[:, 0]] = dirichlet[idx[:, -1]] = True
    return Mesh(V, T, dirichlet, h_target=max(lx / nx, ly / ny) * math.sqrt(2))


# --------------------------------------------------------------------------
# refinement and restriction


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children."""
    T = mesh.triangles
    nv = mesh.n_vertices
    e = np.sort(T[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2), axis=2)
    flat = e.reshape(-1, 2)
    ukey, inv, counts = np.unique(flat[:, 0] * nv + flat[:, 1], return_inverse=True, return_counts=True)
    uniq = np.column_stack([ukey // nv, ukey % nv])
    inv = inv.ravel()
    mid = nv + inv.reshape(-1, 3)  # midpoint of edges (01, 12, 20)
    V = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])])
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    mab, mbc, mca = mid[:, 0], mid[:, 1], mid[:, 2]
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    ).reshape(-1, 3)
    dirichlet = np.concatenate([mesh.dirichlet, counts == 1])
    # refine interface facets
    sf = mesh.sigma_facets
    if len(sf):
        key = {tuple(p): i for i, p in enumerate(uniq)}
        rows = []
        for a0, b0, sid in sf:
            m = nv + key[(min(a0, b0), max(a0, b0))]
            rows += [(a0, m, sid), (m, b0, sid)]
        sf = np.array(rows, dtype=np.int64)
    out = Mesh(
        V,
        children,
        dirichlet,
        sf,
        mesh.h_target / 2,
        np.repeat(mesh.region, 4),
        _coincident_pairs(V, mesh.slit_pairs),
        mesh.domain,
    )
    return out


def _coincident_pairs(V, old_pairs) -> np.ndarray:
    if len(old_pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    key = np.round(V / 1e-10).astype(np.int64)
    order = np.lexsort((np.arange(len(V)), key[:, 1], key[:, 0]))
    k = key[order]
    same = np.all(k[1:] == k[:-1], axis=1)
    # first member of each run of coincident vertices
    start = np.concatenate([[True], ~same])
    head = order[np.maximum.accumulate(np.where(start, np.arange(len(order)), 0))]
    dup = np.flatnonzero(~start)
    pairs = np.column_stack([head[dup], order[dup]])
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))].astype(np.int64).reshape(-1, 2)


def submesh(mesh: Mesh, keep: np.ndarray) -> Mesh:
    """Restrict to the triangles selected by ``keep``; new boundary vertices become Dirichlet."""
    keep = np.asarray(keep, dtype=bool)
    T = mesh.triangles[keep]
    used = np.unique(T)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    T = remap[T]
    sf = mesh.sigma_facets
    if len(sf):
        ok = (remap[sf[:, 0]] >= 0) & (remap[sf[:, 1]] >= 0)
        sf = np.column_stack([remap[sf[ok, 0]], remap[sf[ok, 1]], sf[ok, 2]])
    pairs = mesh.slit_pairs
    if len(pairs):
        ok = (remap[pairs[:, 0]] >= 0) & (remap[pairs[:, 1]] >= 0)
        pairs = remap[pairs[ok]]
    out = Mesh(
        mesh.vertices[used], T, mesh.dirichlet[used].copy(), sf, mesh.h_target, mesh.region[keep], pairs, mesh.domain
    )
    out.parent = used if mesh.parent is None else mesh.parent[used]
    _mark_topological_boundary(out)
    # interface facets that became boundary are no longer interfaces
    if len(out.sigma_facets):
        e, c = out.edges()
        interior = {tuple(x) for x in e[c == 2]}
        ok = np.array([(min(a, b), max(a, b)) in interior for a, b, _ in out.sigma_facets], dtype=bool)
        out.sigma_facets = out.sigma_facets[ok]
    return out


def truncation_submesh(mesh: Mesh, R: float) -> Mesh:
    """Submesh of the triangles lying in the truncation at depth ``R``.

    Exact when the mesh was built with a cut line at depth R.
    """
    spec = mesh.domain.spec
    keep = ~geo.beyond(spec, mesh.centroids(), R)
    sub = submesh(mesh, keep)
    if mesh.domain is not None:
        sub.domain = replace(mesh.domain, R=float(R), cuts=tuple(c for c in mesh.domain.cuts if c < R))
    return sub


def bulk_submesh(mesh: Mesh) -> Mesh:
    """The bulk part of a mesh with strip tubes: the unperturbed domain on the same elements."""
    return submesh(mesh, mesh.region < 0)


# --------------------------------------------------------------------------
# quality


@dataclass(frozen=True)
class MeshQuality:
    min_angle: float
    max_aspect: float
    n_vertices: int
    n_triangles: int
    n_dirichlet: int
    n_free: int
    n_sigma_facets: int
    n_slit_pairs: int
    exception_zones: tuple = ()

    def counts(self) -> dict:
        return {
            "vertices": self.n_vertices,
            "triangles": self.n_triangles,
            "dirichlet": self.n_dirichlet,
            "free": self.n_free,
            "sigma_facets": self.n_sigma_facets,
            "slit_pairs": self.n_slit_pairs,
        }


def triangle_angles(mesh: Mesh) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    out = np.empty((len(p), 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("ij,ij->i", u, v) / (np.hypot(*u.T) * np.hypot(*v.T))
        out[:, k] = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
    return out


def mesh_quality(mesh: Mesh) -> MeshQuality:
    """Minimum angle and aspect ratio of the bulk; strip tubes reported as exception zones.

    Aspect ratio is circumradius / (2 inradius), equal to 1 for equilateral triangles.
    """
    ang = triangle_angles(mesh).min(axis=1)
    p = mesh.vertices[mesh.triangles]
    a = np.hypot(*(p[:, 1] - p[:, 2]).T)
    b = np.hypot(*(p[:, 2] - p[:, 0]).T)
    c = np.hypot(*(p[:, 0] - p[:, 1]).T)
    area = np.abs(mesh.areas())
    s = 0.5 * (a + b + c)
    aspect = (a * b * c / (4 * area)) / (2 * area / s)
    bulk = mesh.region < 0
    zones = []
    for rid in sorted(set(mesh.region[~bulk].tolist())):
        sel = mesh.region == rid
        zones.append((int(rid), float(ang[sel].min()), float(aspect[sel].max())))
    bulk_ang = ang[bulk] if bulk.any() else ang
    bulk_asp = aspect[bulk] if bulk.any() else aspect
    return MeshQuality(
        float(bulk_ang.min()),
        float(bulk_asp.max()),
        mesh.n_vertices,
        len(mesh.triangles),
        int(mesh.dirichlet.sum()),
        int((~mesh.dirichlet).sum()),
        len(mesh.sigma_facets),
        len(mesh.slit_pairs),
        tuple(zones),
    )
