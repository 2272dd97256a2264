"""Eigenvalue drop of H under thin tubes and the rho = r^2 lambda_1 verdict.

Tubes of width ``2 eps`` and unit length are attached to the top wall
y = 1 of H at ``x = 2 + i/n``.  To leading order the first eigenvalue drops
by the thin torsional rigidity of the mouths with load ``f = d u_1 / d x_2``,
which is ``alpha * eps^2 * sum_i f(p_i)^2``.  The inradius grows by
``eps^2 / 2``, so with enough tubes ``rho`` decreases.

Every perturbed domain is meshed once; the unperturbed H is the bulk part
of the same mesh, so the two eigenvalues share their discretization bias
and the O(eps^2) drop is not swamped by the O(h^2) error.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from . import mesh as ms
from .errors import ParameterError
from .fem import flux_trace, normal_derivative_trace
from .linalg import EigenResult
from .spectra import richardson, solve_eigs, solve_on_mesh, tip_sizing
from .torsion import TorsionProblem, TorsionResult, solve_thin_torsion
from .workers import pmap

PERTURB_COLUMNS = ("n", "eps", "lambda1_pert", "drop", "drop_over_eps2", "T", "T_over_eps2", "inradius2", "rho", "verdict")

WALL_Y = 1.0
PROFILE_RANGE = (1.0, 4.0)


# --------------------------------------------------------------------------
# the load f on the top wall


@dataclass
class FProfile:
    """Samples of ``d u_1 / d x_2`` on the wall y = 1.

    ``f`` is the residual-recovered flux on the finest level and is the
    load used by every study.  ``one_sided`` holds the element traces per
    level and ``richardson`` their extrapolation across the last three.
    """

    x: np.ndarray
    f: np.ndarray
    one_sided: np.ndarray
    richardson: np.ndarray
    h_levels: tuple
    lambdas: tuple

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.interp(p[:, 0], self.x, self.f)

    def at(self, xs) -> np.ndarray:
        return np.interp(np.asarray(xs, dtype=float), self.x, self.f)

    def m_min(self, lo: float = PROFILE_RANGE[0], hi: float = PROFILE_RANGE[1]) -> float:
        """Smallest ``f^2`` over the samples in ``[lo, hi]``."""
        sel = (self.x >= lo - 1e-12) & (self.x <= hi + 1e-12)
        return float(np.min(self.f[sel] ** 2))

    def sup(self, lo: float = PROFILE_RANGE[0], hi: float = PROFILE_RANGE[1]) -> float:
        sel = (self.x >= lo - 1e-12) & (self.x <= hi + 1e-12)
        return float(np.max(np.abs(self.f[sel])))

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "f": self.f.tolist(), "richardson": self.richardson.tolist(), "h_levels": list(self.h_levels)}


def hersch_ground_states(h_levels=(0.1, 0.05, 0.025), R: float = 8.0, tol: float = 1e-10) -> list[EigenResult]:
    """First eigenpair of H truncated at ``R`` on a sequence of meshes."""
    H = geo.build_hersch_pipe()
    return pmap(lambda h: solve_eigs(H, R, h, 1, tol), h_levels)


def normal_derivative_profile(levels, x=None, scale: float = 1.0) -> FProfile:
    """Trace of ``d u_1 / d x_2`` on y = 1 from solves on successively finer meshes.

    Parameters
    ----------
    levels : list of EigenResult
        Ground states of H, coarse to fine (mesh sizes halving).
    x : array, optional
        Abscissae in [1, 4] (default: 301 equispaced points).
    scale : float
        Multiplies the eigenfunction (the trace is linear in it).
    """
    x = np.linspace(*PROFILE_RANGE, 301) if x is None else np.asarray(x, dtype=float)
    if np.any(x < PROFILE_RANGE[0] - 1e-12) or np.any(x > PROFILE_RANGE[1] + 1e-12):
        raise ParameterError(f"samples must lie in {PROFILE_RANGE}")
    pts = np.column_stack([x, np.full(len(x), WALL_Y)])
    one_sided = []
    for e in levels:
        seg = ((0.0, WALL_Y), (e.mesh.domain.R, WALL_Y))
        one_sided.append(normal_derivative_trace(e.function(0) * scale, seg, pts))
    one_sided = np.array(one_sided)
    if len(levels) >= 3:
        rich = np.array([richardson(one_sided[-3:, k])[1] for k in range(len(x))])
    else:
        rich = one_sided[-1].copy()
    fine = levels[-1]
    seg = ((0.0, WALL_Y), (fine.mesh.domain.R, WALL_Y))
    lam = float(fine.eigenvalues[0])
    f = flux_trace(fine.function(0) * scale, lam, seg, pts, fine.system.K_full, fine.system.M_full)
    return FProfile(x, f, one_sided, rich, tuple(e.h for e in levels), tuple(float(e.eigenvalues[0]) for e in levels))


# --------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class MeshPolicy:
    """How a perturbed H is meshed.

    Each mouth carries ``per_mouth`` edges (so the tube spacing is
    ``2 eps / per_mouth``); the bulk size grows like ``sigma_grading``
    times the distance from the mouths up to ``h``, and the strip rows
    grow by ``strip_growth``.
    """

    h: float = 0.05
    R: float = 8.0
    per_mouth: int = 16
    sigma_grading: float = 0.3
    strip_growth: float = 1.35


FINE = MeshPolicy()
# thousands of tubes: coarser mouths and faster grading keep the mesh below a million nodes
DENSE = MeshPolicy(per_mouth=4, sigma_grading=0.5, strip_growth=2.0)


def perturbed_domain(n: int, eps: float) -> geo.DomainSpec:
    return geo.attach_perturbation_tubes(geo.build_hersch_pipe(), n, eps)


def perturbed_mesh(n: int, eps: float, policy: MeshPolicy = FINE) -> ms.Mesh:
    dom = geo.truncate(perturbed_domain(n, eps), policy.R)
    return ms.triangulate(
        dom,
        policy.h,
        tip_sizing(dom, policy.h),
        sigma_per_mouth=policy.per_mouth,
        sigma_grading=policy.sigma_grading,
        strip_growth=policy.strip_growth,
    )


def thin_rigidity_T(mesh: ms.Mesh, profile: FProfile, tol: float = 1e-12) -> TorsionResult:
    """Thin torsional rigidity of all mouths of a perturbed mesh with load ``f``."""
    return solve_thin_torsion(TorsionProblem(mesh, profile), tol=tol)


def thin_rigidity_bound(n: int, eps: float, profile: FProfile) -> float:
    """``2 (n + 1) eps^2 max|f|^2`` over [1, 4]."""
    return 2.0 * (n + 1) * eps**2 * profile.sup() ** 2


# --------------------------------------------------------------------------
# drop study


@dataclass
class DropRow:
    n: int
    eps: float
    lambda1_H: float  # on the bulk part of the same mesh
    lambda1_pert: float
    T: float
    inradius2: float
    inradius2_H: float
    sum_f2: float
    n_vertices: int
    residuals: tuple = ()

    @property
    def drop(self) -> float:
        return self.lambda1_H - self.lambda1_pert

    @property
    def drop_over_eps2(self) -> float:
        return self.drop / self.eps**2

    @property
    def T_over_eps2(self) -> float:
        return self.T / self.eps**2

    @property
    def rho(self) -> float:
        return self.inradius2 * self.lambda1_pert

    @property
    def rho_H(self) -> float:
        return self.inradius2_H * self.lambda1_H

    @property
    def rho_slope(self) -> float:
        """``(rho(H_n^eps) - rho(H)) / eps^2``."""
        return (self.rho - self.rho_H) / self.eps**2

    def bound_ok(self, slack: float = 0.5) -> bool:
        """``lambda1_pert <= lambda1_H - T + slack * T``."""
        return self.lambda1_pert <= self.lambda1_H - (1.0 - slack) * self.T


def drop_row(n: int, eps: float, profile: FProfile, policy: MeshPolicy = FINE, tol: float = 1e-10, r_H: float = 0.5, grid_h: float = 0.01) -> DropRow:
    """One perturbed domain: matched eigenvalues, rigidity and inradius."""
    mesh = perturbed_mesh(n, eps, policy)
    pert = solve_on_mesh(mesh, 1, tol)
    base = solve_on_mesh(ms.bulk_submesh(mesh), 1, tol)
    T = thin_rigidity_T(mesh, profile).T
    r = geo.inradius(perturbed_domain(n, eps), grid_h=grid_h, R=policy.R).radius
    centers = geo.perturbation_centers(n)
    return DropRow(
        n,
        float(eps),
        float(base.eigenvalues[0]),
        float(pert.eigenvalues[0]),
        float(T),
        r * r,
        r_H * r_H,
        float(np.sum(profile.at(centers) ** 2)),
        mesh.n_vertices,
        (float(base.residuals[0]), float(pert.residuals[0])),
    )


def _intercept(eps, y) -> float:
    """Value at eps = 0 of the least-squares line through ``(eps, y)``."""
    if len(eps) < 2:
        return float(y[0])
    return float(np.polyfit(np.asarray(eps), np.asarray(y), 1)[1])


@dataclass
class DropStudy:
    n: int
    rows: list
    alpha: float
    slack: float = 0.5

    @property
    def eps(self) -> np.ndarray:
        return np.array([r.eps for r in self.rows])

    @property
    def sum_f2(self) -> float:
        return self.rows[0].sum_f2

    @property
    def predicted_drop_over_eps2(self) -> float:
        """``alpha * sum_i f(p_i)^2``."""
        return self.alpha * self.sum_f2

    @property
    def fitted_drop_over_eps2(self) -> float:
        """Limit at eps = 0 of ``drop / eps^2`` (straight line in eps)."""
        return _intercept(self.eps, [r.drop_over_eps2 for r in self.rows])

    @property
    def fitted_T_over_eps2(self) -> float:
        return _intercept(self.eps, [r.T_over_eps2 for r in self.rows])

    @property
    def strictly_decreasing(self) -> bool:
        return all(r.drop > 0 for r in self.rows)

    @property
    def bounds_ok(self) -> list:
        return [r.bound_ok(self.slack) for r in self.rows]

    def consistency(self, tol: float = 0.1) -> dict:
        """The two inequalities at the smallest eps: drop vs T and T vs the blow-up prediction."""
        r = min(self.rows, key=lambda x: x.eps)
        return {
            "drop_ge_T": bool(r.drop >= (1 - self.slack) * r.T),
            "T_ge_prediction": bool(r.T >= (1 - tol) * r.eps**2 * self.predicted_drop_over_eps2),
        }


def eigen_drop_study(n: int, eps_schedule, profile: FProfile, alpha: float, policy: MeshPolicy = FINE, tol: float = 1e-10, slack: float = 0.5) -> DropStudy:
    """Matched-mesh eigenvalue drops for one ``n`` across a decreasing eps schedule."""
    eps_schedule = [float(e) for e in eps_schedule]
    if eps_schedule != sorted(eps_schedule, reverse=True) or len(set(eps_schedule)) != len(eps_schedule):
        raise ParameterError("eps schedule must be strictly decreasing")
    rows = pmap(lambda e: drop_row(n, e, profile, policy, tol), eps_schedule)
    return DropStudy(n, rows, float(alpha), slack)


# --------------------------------------------------------------------------
# n0 and the verdict


def choose_n0(lambda1_H: float, r_H: float, alpha: float, m_min: float) -> int:
    """Smallest integer ``n >= lambda1_H (1 + 2 r^2) / (2 alpha m r^2)``.

    Examples
    --------
    >>> choose_n0(8.0, 0.5, 1.0, 4.0)
    6
    """
    for name, v in (("lambda1_H", lambda1_H), ("r_H", r_H), ("alpha", alpha), ("m_min", m_min)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    return max(1, int(math.ceil(n0_threshold(lambda1_H, r_H, alpha, m_min) - 1e-12)))


def n0_threshold(lambda1_H: float, r_H: float, alpha: float, m_min: float) -> float:
    return lambda1_H * (1 + 2 * r_H**2) / (2 * alpha * m_min * r_H**2)


def dense_eps_schedule(n: int, fractions=(0.4, 0.2, 0.1)) -> list[float]:
    """Half-widths ``c / n`` below the overlap limit ``1 / (2n)``."""
    if n < 1 or not all(0 < c < 0.5 for c in fractions):
        raise ParameterError("need n >= 1 and fractions in (0, 1/2)")
    return [c / n for c in fractions]


@dataclass
class PerturbationReport:
    lambda1_H: float
    r_H: float
    alpha: float
    m_min: float
    n0: int
    profile: FProfile
    study: DropStudy
    verdict: object  # True, False or "inconclusive"
    fitted_rho_slope: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def rho_H(self) -> float:
        return self.r_H**2 * self.lambda1_H

    @property
    def rows(self) -> list:
        return self.study.rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PERTURB_COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    r.n,
                    repr(r.eps),
                    repr(r.lambda1_pert),
                    repr(r.drop),
                    repr(r.drop_over_eps2),
                    repr(r.T),
                    repr(r.T_over_eps2),
                    repr(r.inradius2),
                    repr(r.rho),
                    "decrease" if r.rho_slope < 0 else "increase",
                ]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        s = self.study
        return {
            "n": s.n,
            "eps": [r.eps for r in s.rows],
            "lambda1_H": self.lambda1_H,
            "rho_H": self.rho_H,
            "alpha": self.alpha,
            "m_min": self.m_min,
            "n0": self.n0,
            "sum_f2": s.sum_f2,
            "fitted_drop_over_eps2": s.fitted_drop_over_eps2,
            "predicted_drop_over_eps2": s.predicted_drop_over_eps2,
            "fitted_T_over_eps2": s.fitted_T_over_eps2,
            "rho_slopes": [r.rho_slope for r in s.rows],
            "fitted_rho_slope": self.fitted_rho_slope,
            "verdict": self.verdict,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def verdict_from(study: DropStudy) -> tuple[object, float, dict]:
    """``True`` when every row and the fitted limit of ``d rho / d eps^2`` are negative.

    ``False`` when all are positive, ``"inconclusive"`` otherwise.
    """
    slopes = np.array([r.rho_slope for r in study.rows])
    fitted = _intercept(study.eps, slopes)
    diag = {"row_slopes": slopes.tolist(), "fitted": fitted}
    if len(slopes) < 3:
        diag["reason"] = "fewer than three eps values"
        return "inconclusive", fitted, diag
    signs = set(np.sign(slopes).tolist()) | {float(np.sign(fitted))}
    if signs == {-1.0}:
        return True, fitted, diag
    if signs == {1.0}:
        return False, fitted, diag
    diag["reason"] = "row slopes and fit disagree in sign"
    return "inconclusive", fitted, diag


def rho_verdict(
    n: int, eps_schedule, profile: FProfile, alpha: float, lambda1_H: float, policy: MeshPolicy | None = None, r_H: float = 0.5, tol: float = 1e-10
) -> PerturbationReport:
    """Drop study at ``n`` tubes and the sign of ``d rho / d eps^2``."""
    policy = (DENSE if n > 64 else FINE) if policy is None else policy
    study = eigen_drop_study(n, eps_schedule, profile, alpha, policy, tol)
    m_min = profile.m_min()
    n0 = choose_n0(lambda1_H, r_H, alpha, m_min)
    verdict, fitted, diag = verdict_from(study)
    diag["policy"] = asdict(policy)
    return PerturbationReport(float(lambda1_H), r_H, float(alpha), m_min, n0, profile, study, verdict, fitted, diag)
