"""Thin torsional rigidity of interfaces.

For an interface Sigma inside a domain and a load ``f`` on it,

    T(Sigma; f) = max_phi  2 int_Sigma f phi - int |grad phi|^2,

attained at the solution ``U`` of ``-Delta U = f dSigma`` and equal to
``int_Sigma f U = int |grad U|^2``.  Besides the solver this module computes
the trace constant

    gamma = sup_phi  int_Sigma phi^2 / int |grad phi|^2,

checks superadditivity over disjoint interfaces, and evaluates the blow-up
constant ``alpha`` of a flat mouth of unit half-width attached to a half-plane.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import shapely

from . import geometry as geo
from . import mesh as ms
from .errors import ConvergenceError, ParameterError
from .fem import FeFunction, assemble_line_load, assemble_stiffness
from .linalg import cg_solve
from .workers import pmap

TORSION_COLUMNS = ("eps", "R_inf", "L", "T", "T_over_eps2", "gamma", "bound_ok")


@dataclass
class TorsionProblem:
    """Line-source problem on a mesh with SIGMA facets.

    Parameters
    ----------
    mesh : Mesh
    f : float, callable or dict
        Load on the interfaces.  A dict maps SIGMA ids to a float or callable.
    sigma_ids : sequence of int, optional
        Interfaces carrying the load (default: every id of the mesh, or the
        keys of ``f`` when it is a dict).
    """

    mesh: ms.Mesh
    f: object = 1.0
    sigma_ids: tuple | None = None

    def __post_init__(self):
        if self.sigma_ids is None:
            self.sigma_ids = tuple(sorted(self.f)) if isinstance(self.f, dict) else tuple(self.mesh.sigma_ids())
        self.sigma_ids = tuple(int(i) for i in self.sigma_ids)
        if not self.sigma_ids or len(self.mesh.sigma_facets) == 0:
            raise ParameterError("problem has no SIGMA facets")
        if self.sigma_length() <= 0:
            raise ParameterError("SIGMA has zero total length")

    def load_of(self, i: int):
        return self.f[i] if isinstance(self.f, dict) else self.f

    def load(self) -> np.ndarray:
        """Trapezoid load vector on the free nodes."""
        b = np.zeros(len(self.mesh.free))
        for i in self.sigma_ids:
            b += assemble_line_load(self.mesh, i, self.load_of(i))
        return b

    def sigma_length(self) -> float:
        sf = self.mesh.sigma_facets
        sel = sf[np.isin(sf[:, 2], self.sigma_ids)]
        V = self.mesh.vertices
        return float(np.hypot(*(V[sel[:, 1]] - V[sel[:, 0]]).T).sum())

    def sup_f(self) -> float:
        """Largest ``|f|`` over the facet endpoints."""
        sf = self.mesh.sigma_facets
        best = 0.0
        for i in self.sigma_ids:
            f = self.load_of(i)
            pts = self.mesh.vertices[np.unique(sf[sf[:, 2] == i][:, :2])]
            vals = np.asarray(f(pts), dtype=float) if callable(f) else np.array([float(f)])
            best = max(best, float(np.abs(vals).max()))
        return best

    def scaled(self, c: float) -> "TorsionProblem":
        """The same problem with load ``c * f``."""

        def mul(g):
            return (lambda p: c * np.asarray(g(p), dtype=float)) if callable(g) else c * float(g)

        f = {i: mul(g) for i, g in self.f.items()} if isinstance(self.f, dict) else mul(self.f)
        return TorsionProblem(self.mesh, f, self.sigma_ids)


@dataclass
class TorsionResult:
    U: FeFunction
    T: float  # b^T U
    energy: float  # U^T K U
    b: np.ndarray
    iterations: int = 0

    @property
    def identity_error(self) -> float:
        """``|b^T U - U^T K U|`` relative to ``|T|`` (absolute when T = 0)."""
        d = abs(self.T - self.energy)
        return d / abs(self.T) if self.T != 0 else d


def solve_thin_torsion(problem: TorsionProblem, K=None, tol: float = 1e-12, preconditioner="amg") -> TorsionResult:
    """Solve ``K U = b`` by preconditioned CG and evaluate ``T = b^T U``.

    Examples
    --------
    >>> from tube_spectra.mesh import structured_rectangle
    >>> m = structured_rectangle(4, 4)
    >>> m.sigma_facets = np.array([[6, 7, 0], [7, 8, 0]])
    >>> r = solve_thin_torsion(TorsionProblem(m, 0.0))
    >>> r.T, float(abs(r.U.values).max())
    (0.0, 0.0)
    """
    mesh = problem.mesh
    K = assemble_stiffness(mesh) if K is None else K
    b = problem.load()
    if not np.any(b):
        x = np.zeros_like(b)
        return TorsionResult(FeFunction.from_free(mesh, x), 0.0, 0.0, b)
    from .linalg import CGInfo

    info = CGInfo()
    x = cg_solve(K, b, tol=tol, preconditioner=preconditioner, info=info)
    return TorsionResult(FeFunction.from_free(mesh, x), float(b @ x), float(x @ (K @ x)), b, info.iterations)


def _free_sigma_nodes(mesh: ms.Mesh, sigma_ids) -> np.ndarray:
    sf = mesh.sigma_facets
    if sigma_ids is not None:
        sf = sf[np.isin(sf[:, 2], list(sigma_ids))]
    if len(sf) == 0:
        raise ParameterError("no SIGMA facets")
    nodes = np.unique(sf[:, :2])
    return nodes[~mesh.dirichlet[nodes]]


def trace_mass(mesh: ms.Mesh, sigma_ids=None, lumped: bool = True) -> sp.csr_matrix:
    """Trace mass of the interfaces on all vertices.

    The lumped (trapezoid) version matches the load of ``assemble_line_load``
    so that ``T <= gamma * sup|f|^2 * |Sigma|`` holds exactly for the
    discrete problems.
    """
    sf = mesh.sigma_facets
    if sigma_ids is not None:
        sf = sf[np.isin(sf[:, 2], list(sigma_ids))]
    if len(sf) == 0:
        raise ParameterError("no SIGMA facets")
    a, b = sf[:, 0], sf[:, 1]
    L = np.hypot(*(mesh.vertices[b] - mesh.vertices[a]).T)
    n = mesh.n_vertices
    if lumped:
        d = np.zeros(n)
        np.add.at(d, a, L / 2)
        np.add.at(d, b, L / 2)
        return sp.diags(d).tocsr()
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([L / 3, L / 6, L / 6, L / 3])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def gamma_constant(mesh: ms.Mesh, sigma_ids=None, lumped: bool = True) -> float:
    """Largest eigenvalue of ``B phi = gamma K phi``.

    ``B`` lives on the interface nodes only, so the interior is eliminated
    exactly: with ``S`` the Schur complement of ``K`` onto the free
    interface nodes, ``gamma`` is the largest eigenvalue of the small dense
    pencil ``(B_ss, S)``.

    Raises
    ------
    ParameterError
        If there are no SIGMA facets or none of their nodes is free.
    """
    s = _free_sigma_nodes(mesh, sigma_ids)
    if len(s) == 0:
        raise ParameterError("interfaces have no free nodes")
    free = mesh.free
    pos = np.full(mesh.n_vertices, -1)
    pos[free] = np.arange(len(free))
    K = assemble_stiffness(mesh)
    Bfull = trace_mass(mesh, sigma_ids, lumped)
    si = pos[s]
    rest = np.setdiff1d(np.arange(len(free)), si)
    Kss = K[si][:, si].toarray()
    Kis = K[rest][:, si].toarray()
    lu = spla.splu(K[rest][:, rest].tocsc())
    S = Kss - Kis.T @ lu.solve(Kis)
    S = 0.5 * (S + S.T)
    Bss = Bfull[s][:, s].toarray()
    w = sla.eigh(Bss, S, eigvals_only=True)
    return float(w[-1])


def torsion_bound(result: TorsionResult, problem: TorsionProblem, gamma: float) -> float:
    """Right-hand side ``gamma * sup|f|^2 * |Sigma|`` of the a-priori bound."""
    return gamma * problem.sup_f() ** 2 * problem.sigma_length()


# --------------------------------------------------------------------------
# reference tube


def reference_tube_mesh(eps: float, h: float) -> ms.Mesh:
    """The tube ``eps * ((-1, 1) x [0, 1))`` with its mouth as SIGMA(0).

    Sides and far end are Dirichlet, the mouth is free.  Cells are squares
    of side at most ``h`` split into right triangles.
    """
    if eps <= 0 or h <= 0:
        raise ParameterError("eps and h must be positive")
    nx = max(2, int(math.ceil(2 * eps / h)))
    ny = max(1, int(math.ceil(eps / h)))
    m = ms.structured_rectangle(nx, ny, 2 * eps, eps, origin=(-eps, 0.0))
    mouth = np.flatnonzero(np.abs(m.vertices[:, 1]) < 1e-14 * max(1.0, eps))
    mouth = mouth[np.argsort(m.vertices[mouth, 0])]
    m.dirichlet[mouth[1:-1]] = False
    m.sigma_facets = np.column_stack([mouth[:-1], mouth[1:], np.zeros(len(mouth) - 1, dtype=np.int64)])
    return m


def reference_gamma_scaling(eps_values, h: float) -> tuple[np.ndarray, float]:
    """``gamma / eps`` of the scaled reference tube at fixed ``h`` and its relative spread."""
    g = np.array([gamma_constant(reference_tube_mesh(e, h)) / e for e in eps_values])
    return g, float((g.max() - g.min()) / g.min())


# --------------------------------------------------------------------------
# tubes on H


def hersch_tube_mesh(centers, eps: float, h: float = 0.05, R: float = 6.0, per_mouth: int = 8, **kw) -> ms.Mesh:
    """Mesh of H (truncated at ``R``) with vertical tubes of width ``2 eps`` on y = 1."""
    spec = geo.attach_tubes(geo.build_hersch_pipe(), centers, eps)
    dom = geo.truncate(spec, R)
    return ms.triangulate(dom, h, sigma_per_mouth=per_mouth, **kw)


def single_tube_submesh(mesh: ms.Mesh, tube: int) -> ms.Mesh:
    """Drop every strip tube except ``tube``; the other mouths become Dirichlet wall."""
    return ms.submesh(mesh, (mesh.region < 0) | (mesh.region == tube))


def _strip_tubes(mesh: ms.Mesh) -> list[int]:
    return sorted(int(r) for r in np.unique(mesh.region) if r >= 0)


def _sigma_of_region(mesh: ms.Mesh, tube: int) -> int:
    """SIGMA id on the mouth of the strip with region ``tube``."""
    sel = mesh.triangles[mesh.region == tube]
    nodes = set(np.unique(sel).tolist())
    for a, b, i in mesh.sigma_facets:
        if a in nodes and b in nodes:
            return int(i)
    raise ParameterError(f"strip {tube} has no SIGMA facets")


@dataclass
class SuperadditivityReport:
    T_all: float
    T_single: list
    tol_rel: float = 1e-10

    @property
    def margin(self) -> float:
        return self.T_all - float(sum(self.T_single))

    @property
    def relative_margin(self) -> float:
        return self.margin / self.T_all if self.T_all else 0.0

    @property
    def holds(self) -> bool:
        return self.margin >= -self.tol_rel * abs(self.T_all)


def superadditivity_check(mesh: ms.Mesh, f=1.0, tol: float = 1e-12, tol_rel: float = 1e-10) -> SuperadditivityReport:
    """Compare ``T`` with all strip tubes against the sum over single tubes.

    The single-tube problems live on submeshes of ``mesh``, so every
    discrete space is a subspace of the full one.  ``f`` is applied as
    ``|f|``.
    """
    absf = (lambda p: np.abs(np.asarray(f(p), dtype=float))) if callable(f) else abs(float(f))
    full = solve_thin_torsion(TorsionProblem(mesh, absf), tol=tol)
    tubes = _strip_tubes(mesh)

    def single(t):
        sub = single_tube_submesh(mesh, t)
        return solve_thin_torsion(TorsionProblem(sub, absf, (_sigma_of_region(sub, t),)), tol=tol).T

    singles = pmap(single, tubes) if len(tubes) > 1 else [full.T]
    return SuperadditivityReport(full.T, singles, tol_rel)


# --------------------------------------------------------------------------
# blow-up constant


def _arc(R: float, nseg: int) -> np.ndarray:
    th = np.linspace(0.0, math.pi, nseg + 1)
    return np.column_stack([R * np.cos(th), R * np.sin(th)])


def blowup_mesh(
    R_inf: float, L: float, h_sigma: float = 1 / 32, cuts=(), grading: float = 0.25, corner_refine: float = 16.0, arc_segments: int = 64
) -> ms.Mesh:
    """Mesh of the upper half-disk of radius ``R_inf`` joined to the tube ``(-1, 1) x (-L, 0]``.

    The mouth ``(-1, 1) x {0}`` is SIGMA(0).  ``cuts`` adds half-circle arcs
    so that smaller truncations are exact submeshes.  The size grows like
    ``grading * distance`` away from the mouth, with a further refinement of
    ``corner_refine`` at the two re-entrant corners.
    """
    cuts = sorted(float(c) for c in cuts)
    if any(c <= 1.0 or c >= R_inf for c in cuts):
        raise ParameterError("cut radii must lie in (1, R_inf)")
    if R_inf <= 1.0 or L <= 0:
        raise ParameterError("need R_inf > 1 and L > 0")
    V: list = []
    segs: list = []
    marks: list = []

    def vid(p):
        p = (float(p[0]), float(p[1]))
        for i, q in enumerate(V):
            if abs(q[0] - p[0]) < 1e-12 and abs(q[1] - p[1]) < 1e-12:
                return i
        V.append(p)
        return len(V) - 1

    def polyline(pts, mark):
        ids = [vid(p) for p in pts]
        for a, b in zip(ids[:-1], ids[1:]):
            segs.append((a, b))
            marks.append(mark)

    radii = cuts + [float(R_inf)]
    # diameter pieces between consecutive radii, mouth in the middle
    xs = [-r for r in reversed(radii)] + [-1.0, 1.0] + radii
    for a, b in zip(xs[:-1], xs[1:]):
        polyline([(a, 0.0), (b, 0.0)], ms._SIGMA0 if (a, b) == (-1.0, 1.0) else ms._OUTER)
    for k, r in enumerate(radii):
        polyline(_arc(r, arc_segments), ms._OUTER if r == R_inf else ms._CUT0 + k)
    polyline([(1.0, 0.0), (1.0, -L), (-1.0, -L), (-1.0, 0.0)], ms._OUTER)
    V = np.array(V)
    h_max = max(R_inf / 8.0, h_sigma)
    corners = np.array([[-1.0, 0.0], [1.0, 0.0]])
    size = ms.min_sizing(
        ms.graded_sizing(ms.sample_segments(np.array([[[-1.0, 0.0], [1.0, 0.0]]]), h_sigma), h_sigma, grading, h_max),
        ms.graded_sizing(corners, h_sigma / corner_refine, grading, h_max),
    )
    out = ms.mesh_pslg(V, np.array(segs), np.array(marks), size)
    mesh = ms._finish(out["vertices"], out["triangles"], out["segments"], out["segment_markers"], h_max)
    mesh.region = np.where(mesh.centroids()[:, 1] < 0, 0, -1)
    return mesh


def blowup_submesh(mesh: ms.Mesh, R: float, arc_segments: int = 64) -> ms.Mesh:
    """Exact truncation of a blow-up mesh at a cut radius ``R``."""
    arc = _arc(R, arc_segments)
    poly = shapely.Polygon(np.vstack([arc, [[R, 0.0]]]))
    c = mesh.centroids()
    keep = (c[:, 1] < 0) | shapely.contains_xy(poly, c[:, 0], c[:, 1])
    return ms.submesh(mesh, keep)


def fd_blowup_T(R: float, L: float, h: float, tol: float = 1e-11) -> float:
    """Five-point finite-difference value on the box ``(-R, R) x (0, R)`` plus the tube.

    The Dirichlet energy is the sum of squared differences over grid edges
    and the mouth load is ``h`` per interior mouth node.
    """
    n = int(round(R / h))
    if abs(n * h - R) > 1e-9 or abs(round(1 / h) * h - 1) > 1e-12 or abs(round(L / h) * h - L) > 1e-9:
        raise ParameterError("h must divide 1, R and L")
    m1 = int(round(1 / h))
    nl = int(round(L / h))
    ix = np.arange(-n, n + 1)
    iy = np.arange(-nl, n + 1)
    X, Y = np.meshgrid(ix, iy, indexing="ij")
    upper = (Y > 0) & (np.abs(X) < n) & (Y < n)
    mouth = (Y == 0) & (np.abs(X) < m1)
    lower = (Y < 0) & (Y > -nl) & (np.abs(X) < m1)
    inside = upper | mouth | lower
    idx = np.full(X.shape, -1, dtype=np.int64)
    idx[inside] = np.arange(int(inside.sum()))
    N = int(inside.sum())
    rows, cols = [], []
    for dx, dy in ((1, 0), (0, 1)):
        a = idx[: X.shape[0] - dx, : X.shape[1] - dy]
        b = idx[dx:, dy:]
        rows.append(a.ravel())
        cols.append(b.ravel())
    a = np.concatenate(rows)
    b = np.concatenate(cols)
    diag = np.zeros(N)
    # every edge with at least one unknown end contributes to the diagonal
    np.add.at(diag, a[a >= 0], 1.0)
    np.add.at(diag, b[b >= 0], 1.0)
    both = (a >= 0) & (b >= 0)
    A = sp.coo_matrix((-np.ones(both.sum()), (a[both], b[both])), shape=(N, N))
    A = (A + A.T + sp.diags(diag)).tocsr()
    rhs = np.zeros(N)
    rhs[idx[mouth]] = h
    x = cg_solve(A, rhs, tol=tol, preconditioner="amg")
    return float(rhs @ x)


def extrapolate_power(R, T) -> tuple[float, float]:
    """Limit and order of ``T(R) = T_inf - c R**-p`` from three points with ratio 2.

    Raises
    ------
    ConvergenceError
        If the successive gaps do not shrink.
    """
    R = np.asarray(R, dtype=float)
    T = np.asarray(T, dtype=float)
    if len(R) != 3 or not np.allclose(R[1:] / R[:-1], R[1] / R[0]):
        raise ParameterError("need three radii in geometric progression")
    q = R[1] / R[0]
    d1, d2 = T[1] - T[0], T[2] - T[1]
    if not (d1 > 0 and 0 < d2 < d1):
        raise ConvergenceError(f"gaps {d1:.3e}, {d2:.3e} do not shrink", best=float(T[-1]), history=list(map(float, T)))
    p = math.log(d1 / d2) / math.log(q)
    return float(T[2] + d2 / (q**p - 1.0)), p


@dataclass
class BlowUpResult:
    alpha: float
    order: float
    R_schedule: tuple
    L_schedule: tuple
    table: np.ndarray  # T[i_L, i_R]
    L_effect: float  # relative change of the extrapolated value between the two longest tubes
    fd_alpha: float = math.nan
    fd_table: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def fd_deviation(self) -> float:
        return abs(self.fd_alpha - self.alpha) / self.alpha

    @property
    def monotone_in_R(self) -> bool:
        return bool(np.all(np.diff(self.table, axis=1) > 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TORSION_COLUMNS)
        for i, L in enumerate(self.L_schedule):
            for j, R in enumerate(self.R_schedule):
                w.writerow(["", repr(float(R)), repr(float(L)), repr(float(self.table[i, j])), "", "", ""])
        return buf.getvalue()


def blow_up_constant(
    R_schedule=(8.0, 16.0, 32.0),
    L_schedule=(4.0, 8.0),
    h_sigma: float = 1 / 64,
    *,
    fd_h: float | None = 1 / 32,
    fd_R_schedule=(4.0, 8.0, 16.0),
    tol: float = 1e-12,
) -> BlowUpResult:
    """``alpha``: the value on the half-plane plus tube, extrapolated in ``R_inf``.

    One mesh per tube length carries cut arcs at every radius of the
    schedule; the truncations are exact submeshes, so ``T`` increases with
    ``R_inf`` exactly.  The limit uses ``T_inf - c R**-p`` fitted through
    the three radii.  With ``fd_h`` set, a five-point finite-difference
    value on square boxes is extrapolated the same way as an oracle.
    """
    R_schedule = tuple(float(r) for r in R_schedule)
    L_schedule = tuple(float(x) for x in L_schedule)
    if list(R_schedule) != sorted(set(R_schedule)) or list(L_schedule) != sorted(set(L_schedule)):
        raise ParameterError("schedules must be strictly increasing")

    def column(L):
        mesh = blowup_mesh(R_schedule[-1], L, h_sigma, cuts=R_schedule[:-1])
        out = []
        for R in R_schedule:
            sub = mesh if R == R_schedule[-1] else blowup_submesh(mesh, R)
            out.append(solve_thin_torsion(TorsionProblem(sub, 1.0, (0,)), tol=tol).T)
        return out

    table = np.array(pmap(column, L_schedule))
    limits = []
    order = math.nan
    for row in table:
        a, order = extrapolate_power(R_schedule, row)
        limits.append(a)
    L_effect = abs(limits[-1] - limits[-2]) / limits[-1] if len(limits) > 1 else 0.0
    res = BlowUpResult(limits[-1], order, R_schedule, L_schedule, table, L_effect)
    if fd_h is not None:
        fd = np.array(pmap(lambda R: fd_blowup_T(R, L_schedule[-1], fd_h), fd_R_schedule))
        res.fd_table = fd
        res.fd_alpha = extrapolate_power(fd_R_schedule, fd)[0]
    if not res.alpha > 0:
        raise ConvergenceError("nonpositive blow-up constant", best=res.alpha, history=table.tolist())
    return res


# --------------------------------------------------------------------------
# epsilon scaling on H


@dataclass
class EpsilonScaling:
    eps: np.ndarray
    T: np.ndarray
    gamma: np.ndarray
    bound_ok: np.ndarray
    alpha: float
    f_p: float
    target: float = field(init=False)

    def __post_init__(self):
        self.target = self.alpha * self.f_p**2

    @property
    def T_over_eps2(self) -> np.ndarray:
        return self.T / self.eps**2

    @property
    def deviations(self) -> np.ndarray:
        """``|T/eps^2 - alpha f(p)^2| / (alpha f(p)^2)`` per row."""
        return np.abs(self.T_over_eps2 - self.target) / self.target

    @property
    def halving_ratios(self) -> np.ndarray:
        return self.T[:-1] / self.T[1:]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TORSION_COLUMNS)
        for e, t, g, ok in zip(self.eps, self.T, self.gamma, self.bound_ok):
            w.writerow([repr(float(e)), "", "", repr(float(t)), repr(float(t / e**2)), repr(float(g)), int(ok)])
        return buf.getvalue()


def epsilon_scaling_study(
    alpha: float,
    p: tuple = (2.5, 1.0),
    f: float | Callable = 1.0,
    eps_schedule=(0.05, 0.025, 0.0125),
    h: float = 0.05,
    R: float = 6.0,
    per_mouth: int = 16,
    tol: float = 1e-12,
) -> EpsilonScaling:
    """``T(eps) / eps^2`` for one tube of width ``2 eps`` at ``p`` on the top wall of H."""
    eps_schedule = [float(e) for e in eps_schedule]
    if eps_schedule != sorted(eps_schedule, reverse=True) or len(set(eps_schedule)) != len(eps_schedule):
        raise ParameterError("eps schedule must be strictly decreasing")
    if abs(p[1] - 1.0) > 1e-12:
        raise ParameterError("p must lie on the top wall y = 1")
    f_p = float(np.asarray(f(np.array([p]))).ravel()[0]) if callable(f) else float(f)
    if f_p == 0:
        raise ParameterError("f(p) must be nonzero")

    def row(eps):
        mesh = hersch_tube_mesh([p[0]], eps, h, R, per_mouth)
        prob = TorsionProblem(mesh, f, (0,))
        res = solve_thin_torsion(prob, tol=tol)
        g = gamma_constant(mesh, (0,))
        return res.T, g, res.T <= torsion_bound(res, prob, g) * (1 + 1e-12)

    rows = pmap(row, eps_schedule)
    T, g, ok = (np.array(x) for x in zip(*rows))
    return EpsilonScaling(np.array(eps_schedule), T, g, ok.astype(bool), float(alpha), f_p)
