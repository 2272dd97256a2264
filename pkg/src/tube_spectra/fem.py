"""P1 finite elements: assembly, interface loads, norms, tails and traces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import geometry as geo
from .errors import AssemblyError, ParameterError
from .mesh import Mesh


@dataclass
class FeFunction:
    """Nodal values of a continuous piecewise-linear function on ``mesh``."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ParameterError("one nodal value per mesh vertex expected")

    @classmethod
    def from_free(cls, mesh: Mesh, x: np.ndarray) -> "FeFunction":
        v = np.zeros(mesh.n_vertices)
        v[mesh.free] = x
        return cls(mesh, v)

    @property
    def free_values(self) -> np.ndarray:
        return self.values[self.mesh.free]

    def __mul__(self, c: float) -> "FeFunction":
        return FeFunction(self.mesh, self.values * c)

    __rmul__ = __mul__


@dataclass
class AssembledSystem:
    """Stiffness and mass on the free nodes plus the full (pre-elimination) matrices."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    free: np.ndarray
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    mesh: Mesh


def interpolate(mesh: Mesh, func: Callable[[np.ndarray, np.ndarray], np.ndarray], pin: bool = True) -> FeFunction:
    """Nodal interpolant of ``func(x, y)``; Dirichlet nodes set to zero when ``pin``."""
    v = np.asarray(func(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float) * np.ones(mesh.n_vertices)
    if pin:
        v = v.copy()
        v[mesh.dirichlet] = 0.0
    return FeFunction(mesh, v)


def _geometry(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(area <= 0):
        bad = int(np.flatnonzero(area <= 0)[0])
        raise AssemblyError(f"triangle {bad} is degenerate or clockwise (area {area[bad]:.3g})")
    return p, area


def element_stiffness(p: np.ndarray) -> np.ndarray:
    """P1 stiffness for triangles ``p`` of shape (T, 3, 2)."""
    p = np.asarray(p, dtype=float).reshape(-1, 3, 2)
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    return np.einsum("tik,tjk->tij", e, e) / (4 * area[:, None, None])


def element_mass(p: np.ndarray) -> np.ndarray:
    """Consistent P1 mass for triangles ``p`` of shape (T, 3, 2)."""
    p = np.asarray(p, dtype=float).reshape(-1, 3, 2)
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return area[:, None, None] / 12 * (np.ones((3, 3)) + np.eye(3))


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    T = mesh.triangles
    n = mesh.n_vertices
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _restrict(A: sp.csr_matrix, free: np.ndarray) -> sp.csr_matrix:
    B = A[free][:, free].tocsr()
    B.sort_indices()
    return B


def assemble_stiffness(mesh: Mesh, restrict: bool = True) -> sp.csr_matrix:
    """Stiffness matrix, restricted to the free nodes unless ``restrict=False``."""
    p, _ = _geometry(mesh)
    K = _scatter(mesh, element_stiffness(p))
    return _restrict(K, mesh.free) if restrict else K


def assemble_mass(mesh: Mesh, restrict: bool = True) -> sp.csr_matrix:
    p, _ = _geometry(mesh)
    M = _scatter(mesh, element_mass(p))
    return _restrict(M, mesh.free) if restrict else M


def assemble(mesh: Mesh) -> AssembledSystem:
    p, _ = _geometry(mesh)
    K = _scatter(mesh, element_stiffness(p))
    M = _scatter(mesh, element_mass(p))
    free = mesh.free
    return AssembledSystem(_restrict(K, free), _restrict(M, free), free, K, M, mesh)


def _sigma_facets(mesh: Mesh, sigma_id) -> np.ndarray:
    sf = mesh.sigma_facets
    if sigma_id is None:
        sel = sf
    else:
        ids = [sigma_id] if np.isscalar(sigma_id) else list(sigma_id)
        sel = sf[np.isin(sf[:, 2], ids)]
        missing = set(ids) - set(sel[:, 2].tolist())
        if missing:
            raise ParameterError(f"no SIGMA facets with id {sorted(missing)}")
    if len(sel) == 0:
        raise ParameterError("no SIGMA facets")
    return sel


def assemble_line_load(mesh: Mesh, sigma_id, f, restrict: bool = True) -> np.ndarray:
    """Trapezoid-rule load ``b_v = sum_e |e|/2 f(v)`` over SIGMA facets.

    Parameters
    ----------
    sigma_id : int, sequence of int, or None
        Interfaces to load (None: all).
    f : float or callable
        Value on the interface; a callable receives points (P, 2).
    restrict : bool
        Return the free-node entries (the solve right-hand side).  The full
        vector keeps the shares of Dirichlet endpoints, so it sums to the
        integral of ``f`` over the interface.
    """
    sel = _sigma_facets(mesh, sigma_id)
    a, b = sel[:, 0], sel[:, 1]
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    length = np.hypot(*(pb - pa).T)
    if callable(f):
        fa, fb = np.asarray(f(pa), dtype=float), np.asarray(f(pb), dtype=float)
    else:
        fa = fb = np.full(len(sel), float(f))
    load = np.zeros(mesh.n_vertices)
    np.add.at(load, a, 0.5 * length * fa)
    np.add.at(load, b, 0.5 * length * fb)
    return load[mesh.free] if restrict else load


def sigma_trace_mass(mesh: Mesh, sigma_id=None) -> sp.csr_matrix:
    """Consistent 1D mass matrix of the interface trace, on free nodes."""
    sel = _sigma_facets(mesh, sigma_id)
    a, b = sel[:, 0], sel[:, 1]
    length = np.hypot(*(mesh.vertices[b] - mesh.vertices[a]).T)
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([length / 3, length / 6, length / 6, length / 3])
    n = mesh.n_vertices
    B = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return _restrict(B, mesh.free)


# --------------------------------------------------------------------------
# norms


def _mass_matrix_of(u: FeFunction):
    return assemble_mass(u.mesh, restrict=False)


def l2_norm(u: FeFunction, M=None) -> float:
    M = assemble_mass(u.mesh, restrict=False) if M is None else M
    v = u.values if M.shape[0] == u.mesh.n_vertices else u.free_values
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def h1_seminorm(u: FeFunction, K=None) -> float:
    K = assemble_stiffness(u.mesh, restrict=False) if K is None else K
    v = u.values if K.shape[0] == u.mesh.n_vertices else u.free_values
    return float(np.sqrt(max(v @ (K @ v), 0.0)))


def quadratic_forms(u: FeFunction, chunk: int = 1_000_000) -> tuple[float, float]:
    """``(u^T K u, u^T M u)`` summed element by element, without assembling.

    Only triangles where ``u`` is not identically zero are visited.
    """
    mesh = u.mesh
    T = mesh.triangles[np.any(u.values[mesh.triangles] != 0, axis=1)]
    energy = mass = 0.0
    for k in range(0, len(T), chunk):
        t = T[k : k + chunk]
        p = mesh.vertices[t]
        uv = u.values[t]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
        if np.any(area <= 0):
            raise AssemblyError("degenerate or clockwise triangle")
        # gradient of the P1 interpolant: sum_i u_i * rot(e_i) / (2 area)
        gx = -(uv * e[:, :, 1]).sum(1) / (2 * area)
        gy = (uv * e[:, :, 0]).sum(1) / (2 * area)
        energy += float(np.sum(area * (gx**2 + gy**2)))
        mass += float(np.sum(area / 12 * ((uv**2).sum(1) + uv.sum(1) ** 2)))
    return energy, mass


def _element_mass_of(u: FeFunction) -> np.ndarray:
    """Per-triangle integral of u^2."""
    area = np.abs(u.mesh.areas())
    uv = u.values[u.mesh.triangles]
    return area / 12 * ((uv**2).sum(1) + uv.sum(1) ** 2)


def _clip(poly: list, normal, offset) -> list:
    """Keep the part of a convex polygon where ``normal . x >= offset``."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp, fq = normal @ p[:2] - offset, normal @ q[:2] - offset
        if fp >= 0:
            out.append(p)
        if (fp >= 0) != (fq >= 0):
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return out


def _poly_u2(poly: list) -> float:
    """Integral of u^2 over a polygon whose points carry (x, y, u) with u linear."""
    if len(poly) < 3:
        return 0.0
    total = 0.0
    p0 = poly[0]
    for k in range(1, len(poly) - 1):
        a, b, c = p0, poly[k], poly[k + 1]
        area = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        m = [(a[2] + b[2]) / 2, (b[2] + c[2]) / 2, (c[2] + a[2]) / 2]
        total += area / 3 * (m[0] ** 2 + m[1] ** 2 + m[2] ** 2)
    return total


_LAT_TOL = 1e-9


def _slab_mass(u: FeFunction, spec, lo: float, hi: float) -> float:
    """Integral of u^2 over the union of infinite-tube slabs lo < depth < hi."""
    mesh = u.mesh
    V = mesh.vertices
    T = mesh.triangles
    per = _element_mass_of(u)
    total = 0.0
    for t in spec.tubes:
        if not t.infinite:
            continue
        d, s = t.frame(V)
        dT, sT = d[T], s[T]
        in_lat = (sT >= -_LAT_TOL) & (sT <= t.width + _LAT_TOL)
        in_dep = (dT >= lo) & (dT <= hi)
        full = (in_lat & in_dep).all(axis=1)
        total += per[full].sum()
        touch = (dT.max(1) > lo) & (dT.min(1) < hi) & (sT.max(1) > 0) & (sT.min(1) < t.width) & ~full
        for k in np.flatnonzero(touch):
            poly = [np.array([*V[i], u.values[i]]) for i in T[k]]
            ax, lat = t.axis, t.lateral_axis
            o = t.origin
            for normal, off in (
                (ax, lo + ax @ o),
                (-ax, -(hi + ax @ o)) if np.isfinite(hi) else (None, None),
                (lat, lat @ o),
                (-lat, -(t.width + lat @ o)),
            ):
                if normal is None:
                    continue
                poly = _clip(poly, normal, off)
                if len(poly) < 3:
                    break
            total += _poly_u2(poly)
    return total


def tail_norm(u: FeFunction, spec, R: float) -> float:
    """L2 norm of ``u`` beyond depth ``R`` in the infinite tubes (exact clipping).

    ``R <= 0`` returns the norm over the whole domain.
    """
    if R <= 0:
        return float(np.sqrt(_element_mass_of(u).sum()))
    return float(np.sqrt(max(_slab_mass(u, spec, R, np.inf), 0.0)))


def slab_mass(u: FeFunction, spec, R1: float, R2: float) -> float:
    """Integral of u^2 over the tube slabs R1 < depth < R2."""
    return _slab_mass(u, spec, R1, R2)


def sup_norm_tail(u: FeFunction, spec, R: float) -> float:
    """Largest nodal magnitude beyond depth ``R`` (whole domain when ``R <= 0``)."""
    if R <= 0:
        return float(np.max(np.abs(u.values))) if len(u.values) else 0.0
    sel = geo.beyond(spec, u.mesh.vertices, R)
    return float(np.max(np.abs(u.values[sel]))) if sel.any() else 0.0


# --------------------------------------------------------------------------
# boundary traces


def _segment_edges(mesh: Mesh, segment, tol=1e-9):
    """Boundary edges on ``segment`` with their triangle; parameters along it."""
    a, b = np.asarray(segment, dtype=float)
    d = b - a
    L = float(np.hypot(*d))
    tdir = d / L
    nrm = np.array([tdir[1], -tdir[0]])
    V, T = mesh.vertices, mesh.triangles
    dist = (V - a) @ nrm
    par = (V - a) @ tdir
    on = (np.abs(dist) < tol * max(1.0, L)) & (par > -tol) & (par < L + tol)
    out = []
    for k in range(3):
        i, j = T[:, k], T[:, (k + 1) % 3]
        sel = on[i] & on[j]
        for t in np.flatnonzero(sel):
            out.append((t, i[t], j[t], T[t, (k + 2) % 3]))
    return out, a, tdir, nrm, par, L


def _grad(mesh: Mesh, tri: int, values: np.ndarray) -> np.ndarray:
    p = mesh.vertices[mesh.triangles[tri]]
    u = values[mesh.triangles[tri]]
    J = np.array([p[1] - p[0], p[2] - p[0]])
    return np.linalg.solve(J, np.array([u[1] - u[0], u[2] - u[0]]))


def normal_derivative_trace(u: FeFunction, segment, sample_points) -> np.ndarray:
    """Outward normal derivative of ``u`` on a boundary segment.

    At each sample the constant gradient of the adjacent triangle is used;
    a sample at a mesh vertex averages the two adjacent boundary edges.
    """
    mesh = u.mesh
    edges, a, tdir, nrm, par, L = _segment_edges(mesh, segment)
    if not edges:
        raise ParameterError("segment carries no boundary edges of the mesh")
    s = np.asarray(sample_points, dtype=float).reshape(-1, 2)
    sp_par = (s - a) @ tdir
    sp_dist = (s - a) @ nrm
    if np.any(np.abs(sp_dist) > 1e-9) or np.any(sp_par < -1e-9) or np.any(sp_par > L + 1e-9):
        raise ParameterError("sample point off the segment")
    lo = np.array([min(par[i], par[j]) for _, i, j, _ in edges])
    hi = np.array([max(par[i], par[j]) for _, i, j, _ in edges])
    vals = []
    for t in sp_par:
        hits = np.flatnonzero((lo <= t + 1e-12) & (hi >= t - 1e-12))
        if len(hits) == 0:
            raise ParameterError(f"no boundary edge at parameter {t}")
        acc = []
        for h in hits:
            tri, _, _, opp = edges[h]
            out = nrm if (mesh.vertices[opp] - a) @ nrm < 0 else -nrm
            acc.append(_grad(mesh, tri, u.values) @ out)
        vals.append(float(np.mean(acc)))
    return np.array(vals)


def flux_trace(u: FeFunction, lam: float, segment, sample_points, K_full=None, M_full=None) -> np.ndarray:
    """Normal derivative of an eigenfunction recovered from the variational residual.

    The residual ``(K u - lam M u)_i`` at a boundary node equals the integral
    of the flux against the hat function; solving with the 1D boundary mass
    matrix gives nodal flux values that are interpolated at the samples.
    This superconvergent recovery complements the one-sided element trace.
    """
    mesh = u.mesh
    K_full = assemble_stiffness(mesh, restrict=False) if K_full is None else K_full
    M_full = assemble_mass(mesh, restrict=False) if M_full is None else M_full
    r = K_full @ u.values - lam * (M_full @ u.values)
    edges, a, tdir, nrm, par, L = _segment_edges(mesh, segment)
    if not edges:
        raise ParameterError("segment carries no boundary edges of the mesh")
    nodes = np.unique([x for _, i, j, _ in edges for x in (i, j)])
    pos = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    B = np.zeros((n, n))
    for _, i, j, _ in edges:
        h = abs(par[j] - par[i])
        pi, pj = pos[i], pos[j]
        B[pi, pi] += h / 3
        B[pj, pj] += h / 3
        B[pi, pj] += h / 6
        B[pj, pi] += h / 6
    g = np.linalg.solve(B, r[nodes])
    order = np.argsort(par[nodes])
    s = np.asarray(sample_points, dtype=float).reshape(-1, 2)
    sp_par = (s - a) @ tdir
    if np.any(np.abs((s - a) @ nrm) > 1e-9) or np.any(sp_par < -1e-9) or np.any(sp_par > L + 1e-9):
        raise ParameterError("sample point off the segment")
    return np.interp(sp_par, par[nodes][order], g[order])
