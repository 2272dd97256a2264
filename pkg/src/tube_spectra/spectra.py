"""Eigenvalue drivers: single solves, exhaustion in R, and mesh convergence in h."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import geometry as geo
from . import mesh as ms
from .errors import GeometryError, ParameterError
from .fem import assemble
from .linalg import EigenResult, lobpcg
from .workers import pmap

log = logging.getLogger(__name__)

EXHAUSTION_COLUMNS = ("R", "h", "j", "lambda", "residual", "below_threshold", "margin")


# --------------------------------------------------------------------------
# meshing policy


def slit_tips(domain: geo.TruncatedDomain) -> np.ndarray:
    """Slit endpoints that touch no other boundary segment (crack tips)."""
    edges = domain.pslg.edges
    deg_slit: dict[int, int] = {}
    other: set[int] = set()
    for a, b, m in edges:
        if geo.marker_kind(m) == geo.SLIT:
            deg_slit[a] = deg_slit.get(a, 0) + 1
            deg_slit[b] = deg_slit.get(b, 0) + 1
        elif geo.marker_kind(m) == geo.OUTER_DIRICHLET:
            other.update((a, b))
    tips = [v for v, d in deg_slit.items() if d == 1 and v not in other]
    return domain.pslg.vertices[sorted(tips)].reshape(-1, 2)


def tip_sizing(domain: geo.TruncatedDomain, h: float, h_tip: float | None = None, grading: float = 0.1):
    """Size field refined towards crack tips, or None when there are none.

    Eigenfunctions behave like sqrt(distance) at a crack tip; without
    grading the eigenvalue error is O(h) and sensitive to the local mesh
    pattern.  The default ``h_tip = h / 32`` brings it back to O(h^2) levels.
    """
    tips = slit_tips(domain)
    if len(tips) == 0:
        return None
    h_tip = h / 32 if h_tip is None else h_tip
    return ms.graded_sizing(tips, h_tip, grading, h)


def mesh_domain(spec: geo.DomainSpec, R: float | None, h: float, *, grade_tips: bool = True, cuts=(), **kw) -> ms.Mesh:
    """Truncate (when there are infinite tubes) and triangulate."""
    if spec.infinite_tubes and R is None:
        raise ParameterError(f"domain {spec.name!r} has infinite tubes: a truncation radius R is required")
    dom = geo.truncate(spec, 0.0 if R is None else R, cuts=cuts)
    sizing = tip_sizing(dom, h) if grade_tips else None
    return ms.triangulate(dom, h, sizing, **kw)


# --------------------------------------------------------------------------
# single solves


def solve_on_mesh(mesh: ms.Mesh, k: int, tol: float = 1e-8, seed: int = 0, preconditioner="lu") -> EigenResult:
    """Lowest ``k`` eigenpairs of the Dirichlet Laplacian on ``mesh``."""
    system = assemble(mesh)
    if len(system.free) == 0:
        raise GeometryError("mesh has no free nodes")
    res = lobpcg(system.K, system.M, k, tol=tol, seed=seed, preconditioner=preconditioner)
    res.mesh, res.system, res.domain = mesh, system, mesh.domain
    res.h = mesh.h_target
    res.R = math.nan if mesh.domain is None else mesh.domain.R
    return res


def solve_eigs(
    spec: geo.DomainSpec,
    R: float | None,
    h: float,
    k: int = 1,
    tol: float = 1e-8,
    *,
    seed: int = 0,
    grade_tips: bool = True,
    preconditioner="lu",
) -> EigenResult:
    """Truncate, mesh, assemble and solve for the lowest ``k`` eigenpairs.

    Examples
    --------
    >>> res = solve_eigs(geo.build_unit_square(), None, 0.1, k=1)
    >>> bool(abs(res.eigenvalues[0] / (2 * math.pi**2) - 1) < 0.05)
    True
    """
    mesh = mesh_domain(spec, R, h, grade_tips=grade_tips)
    return solve_on_mesh(mesh, k, tol, seed, preconditioner)


# --------------------------------------------------------------------------
# extrapolation


def extrapolate_exponential(R, lam) -> tuple[float, float, bool]:
    """Fit ``lam(R) = lam_inf + a exp(-b R)`` through the last three points.

    Returns
    -------
    lam_inf, b, ok
        ``ok`` is False when the last two gaps are not geometric (same sign,
        shrinking); the last value is then returned as the limit.
    """
    R = np.asarray(R, dtype=float)[-3:]
    y = np.asarray(lam, dtype=float)[-3:]
    if len(R) < 3:
        return float(y[-1]), math.nan, False
    d1, d2 = y[0] - y[1], y[1] - y[2]
    s1, s2 = R[1] - R[0], R[2] - R[1]
    if d1 == 0 or d2 == 0 or np.sign(d1) != np.sign(d2) or abs(d2) >= abs(d1) * (s2 / s1):
        return float(y[-1]), math.nan, False
    target = d2 / d1

    def ratio(b):
        return math.exp(-b * s1) * (-math.expm1(-b * s2)) / (-math.expm1(-b * s1)) - target

    hi = 1.0
    while ratio(hi) > 0 and hi < 1e6:
        hi *= 2
    lo = 1e-12
    if ratio(lo) < 0 or ratio(hi) > 0:
        return float(y[-1]), math.nan, False
    b = brentq(ratio, lo, hi, xtol=1e-14, rtol=1e-14)
    # tail beyond the last point: a e^{-b R3} = d2 e^{-b s2} / (1 - e^{-b s2})
    tail = d2 * math.exp(-b * s2) / (-math.expm1(-b * s2))
    return float(y[-1] - tail), float(b), True


def richardson(values, ratio: float = 2.0) -> tuple[float, float]:
    """Observed order and extrapolated limit from three nested levels."""
    a, b, c = (float(v) for v in values[-3:])
    d1, d2 = a - b, b - c
    if d1 == 0 or d2 == 0 or np.sign(d1) != np.sign(d2):
        return math.nan, c
    p = math.log(abs(d1 / d2)) / math.log(ratio)
    return p, c - d2 / (ratio**p - 1)


# --------------------------------------------------------------------------
# exhaustion


@dataclass
class ExhaustionStudy:
    """Eigenvalues on a sequence of truncations of one unbounded domain.

    Attributes
    ----------
    lambdas : ndarray, shape (len(R), k)
    extrapolated : ndarray, shape (k,)
    rates : ndarray, shape (k,)
        Fitted exponent ``b`` of the tail ``a exp(-b R)``.
    """

    spec: geo.DomainSpec
    R: np.ndarray
    h: float
    lambdas: np.ndarray
    residuals: np.ndarray
    extrapolated: np.ndarray
    rates: np.ndarray
    fit_ok: np.ndarray
    threshold: float
    results: list = field(default_factory=list, repr=False)
    monotone_violations: list = field(default_factory=list)

    @property
    def below_threshold(self) -> np.ndarray:
        return self.extrapolated < self.threshold

    @property
    def margins(self) -> np.ndarray:
        return self.threshold - self.extrapolated

    def gaps(self, j: int = 0) -> np.ndarray:
        return -np.diff(self.lambdas[:, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EXHAUSTION_COLUMNS)
        for i, R in enumerate(self.R):
            for j in range(self.lambdas.shape[1]):
                lam = self.lambdas[i, j]
                w.writerow(
                    [_fmt(R), _fmt(self.h), j + 1, _fmt(lam), _fmt(self.residuals[i, j]), int(lam < self.threshold), _fmt(self.threshold - lam)]
                )
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "domain": self.spec.name,
            "h": self.h,
            "R": [float(r) for r in self.R],
            "threshold": self.threshold,
            "extrapolated": [float(x) for x in self.extrapolated],
            "rates": [None if math.isnan(b) else float(b) for b in self.rates],
            "fit_ok": [bool(x) for x in self.fit_ok],
            "below_threshold": [bool(x) for x in self.below_threshold],
            "margins": [float(x) for x in self.margins],
            "monotone_violations": self.monotone_violations,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _fmt(x) -> str:
    return repr(float(x))


def nested_truncations(spec: geo.DomainSpec, R_schedule, h: float, *, grade_tips: bool = True, **kw) -> list[ms.Mesh]:
    """Mesh the largest truncation once, with cut lines at the smaller radii, and restrict."""
    R_schedule = [float(r) for r in R_schedule]
    if any(b <= a for a, b in zip(R_schedule, R_schedule[1:])):
        raise ParameterError("R schedule must be strictly increasing")
    big = mesh_domain(spec, R_schedule[-1], h, grade_tips=grade_tips, cuts=R_schedule[:-1], **kw)
    return [ms.truncation_submesh(big, R) for R in R_schedule[:-1]] + [big]


def exhaustion_study(
    spec: geo.DomainSpec,
    R_schedule,
    h: float,
    k: int = 1,
    tol: float = 1e-9,
    *,
    seed: int = 0,
    submesh_mode: bool = True,
    grade_tips: bool = True,
    slack: float = 1e-6,
) -> ExhaustionStudy:
    """Lowest ``k`` eigenvalues on Omega_R for each R, with an exponential fit in R.

    In submesh mode the finite element spaces are nested, so the table is
    monotone up to solver tolerance; violations beyond ``slack * lambda``
    are logged as warnings and recorded, never raised.
    """
    R_schedule = np.asarray(R_schedule, dtype=float)
    if submesh_mode:
        meshes = nested_truncations(spec, R_schedule, h, grade_tips=grade_tips)
    else:
        meshes = [mesh_domain(spec, R, h, grade_tips=grade_tips) for R in R_schedule]
    results = pmap(lambda m: solve_on_mesh(m, k, tol, seed), meshes)
    lam = np.array([r.eigenvalues for r in results])
    resid = np.array([r.residuals for r in results])
    viol = []
    for j in range(k):
        for i in range(1, len(R_schedule)):
            if lam[i, j] > lam[i - 1, j] + slack * abs(lam[i - 1, j]):
                viol.append({"j": j + 1, "R": float(R_schedule[i]), "increase": float(lam[i, j] - lam[i - 1, j])})
                log.warning("lambda_%d increased from R=%g to R=%g", j + 1, R_schedule[i - 1], R_schedule[i])
    ext, rates, ok = [], [], []
    for j in range(k):
        e, b, good = extrapolate_exponential(R_schedule, lam[:, j])
        ext.append(e)
        rates.append(b)
        ok.append(good)
    return ExhaustionStudy(
        spec, R_schedule, h, lam, resid, np.array(ext), np.array(rates), np.array(ok), geo.threshold_energy(spec), results, viol
    )


# --------------------------------------------------------------------------
# mesh convergence


@dataclass
class MeshConvergence:
    h: np.ndarray
    lambdas: np.ndarray
    orders: np.ndarray
    extrapolated: np.ndarray

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.lambdas, axis=0) <= 1e-12 * np.abs(self.lambdas[:-1])))


def mesh_convergence(
    spec: geo.DomainSpec | None, R: float | None, h: float, k: int = 1, levels: int = 3, *, mesh: ms.Mesh | None = None, tol: float = 1e-10
) -> MeshConvergence:
    """Solve on ``levels`` meshes nested by uniform refinement; fit order and limit.

    Pass ``mesh`` to start from a given coarse mesh instead of meshing ``spec``.
    """
    if levels < 3:
        raise ParameterError("at least three levels are needed for an order fit")
    m = mesh if mesh is not None else mesh_domain(spec, R, h)
    meshes = [m]
    for _ in range(levels - 1):
        meshes.append(ms.refine_uniform(meshes[-1]))
    lam = np.array([solve_on_mesh(x, k, tol).eigenvalues for x in meshes])
    hs = np.array([x.h_target for x in meshes])
    fits = [richardson(lam[:, j]) for j in range(k)]
    return MeshConvergence(hs, lam, np.array([f[0] for f in fits]), np.array([f[1] for f in fits]))


# --------------------------------------------------------------------------
# higher eigenvalues


@dataclass
class HigherEigStudy:
    exhaustion: ExhaustionStudy
    discrepancies: np.ndarray  # (len(R) - 1, k): L2 distance or subspace sine
    kinds: list  # per (step, j): "vector" or "subspace"
    orthonormality: np.ndarray  # per R: max |X^T M X - I|

    @property
    def ordered(self) -> bool:
        return bool(np.all(np.diff(self.exhaustion.lambdas, axis=1) >= -1e-12 * np.abs(self.exhaustion.lambdas[:, 1:])))


def _extend(res: EigenResult, n_root: int) -> np.ndarray:
    """Eigenvectors as nodal values on the root mesh (zero outside)."""
    mesh = res.mesh
    full = np.zeros((mesh.n_vertices, res.k))
    full[mesh.free] = res.eigenvectors
    out = np.zeros((n_root, res.k))
    idx = mesh.parent if mesh.parent is not None else np.arange(mesh.n_vertices)
    out[idx] = full
    return out


def _clusters(lam: np.ndarray, rtol: float) -> list[list[int]]:
    groups = [[0]]
    for j in range(1, len(lam)):
        if lam[j] - lam[j - 1] <= rtol * abs(lam[j]):
            groups[-1].append(j)
        else:
            groups.append([j])
    return groups


def higher_eig_study(
    spec: geo.DomainSpec, R_schedule, h: float, k: int = 2, tol: float = 1e-9, *, cluster_rtol: float = 1e-4, seed: int = 0
) -> HigherEigStudy:
    """Exhaustion for ``k >= 2`` eigenpairs with eigenvector alignment between radii.

    Consecutive truncations are compared on the largest mesh (smaller
    truncations extend by zero).  Isolated eigenvalues give a sign-aligned
    L2 distance; clusters (multiplicity) give the sine of the largest
    principal angle between the spanned subspaces.
    """
    if k < 2:
        raise ParameterError("higher_eig_study needs k >= 2")
    study = exhaustion_study(spec, R_schedule, h, k, tol, seed=seed)
    root = study.results[-1].mesh
    Mfull = study.results[-1].system.M_full
    ext = [_extend(r, root.n_vertices) for r in study.results]
    disc = np.zeros((len(ext) - 1, k))
    kinds = []
    for i in range(len(ext) - 1):
        U, V = ext[i], ext[i + 1]
        row = []
        for group in _clusters(study.lambdas[i + 1], cluster_rtol):
            if len(group) == 1:
                j = group[0]
                d = min(math.sqrt(max((U[:, j] - s * V[:, j]) @ (Mfull @ (U[:, j] - s * V[:, j])), 0.0)) for s in (1, -1))
                disc[i, j] = d
                row.append("vector")
            else:
                C = U[:, group].T @ (Mfull @ V[:, group])
                sv = np.clip(np.linalg.svd(C, compute_uv=False), 0.0, 1.0)
                disc[i, group] = math.sqrt(max(1.0 - sv.min() ** 2, 0.0))
                row.extend(["subspace"] * len(group))
        kinds.append(row)
    ortho = np.array(
        [np.abs(r.eigenvectors.T @ (r.system.M @ r.eigenvectors) - np.eye(k)).max() for r in study.results]
    )
    return HigherEigStudy(study, disc, kinds, ortho)
