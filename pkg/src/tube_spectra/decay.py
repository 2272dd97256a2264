"""Exponential decay of eigenfunctions along the tubes.

Explicit tail-bound constants for eigenvalues below the threshold, measured
tail profiles, and the sup-norm / L2-norm ratio.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import geometry as geo
from .errors import InapplicableError, ParameterError
from .fem import FeFunction, l2_norm, sup_norm_tail, tail_norm
from .linalg import EigenResult


@dataclass(frozen=True)
class DecayBoundConstants:
    """Constants of the tail bound ``A(R) <= C1 * beta**R * ||u||``."""

    E: float
    lambda_j: float
    C_Omega_j: float
    beta_j: float
    C1_j: float
    r0: float

    def bound(self, R, norm_u: float = 1.0):
        return self.C1_j * self.beta_j ** np.asarray(R, dtype=float) * norm_u

    @property
    def rate(self) -> float:
        """Decay rate per unit length implied by the bound, ``-ln beta``."""
        return -math.log(self.beta_j)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def paper_decay_constants(E: float, lambda_j: float, r0: float) -> DecayBoundConstants:
    """Tail-bound constants from the threshold ``E`` and an eigenvalue below it.

    ``C = 2/(E - lam) * (8E/(E - lam) + E)``, ``beta = sqrt(C/(C+1))`` and
    ``C1 = (C/(C+1))**(-r0/2 - 1)``.

    Raises
    ------
    InapplicableError
        If ``lambda_j >= E``.

    Examples
    --------
    >>> c = paper_decay_constants(1.0, 0.0, 0.0)
    >>> c.C_Omega_j, round(c.beta_j**2 * 19, 12)
    (18.0, 18.0)
    """
    if not lambda_j < E:
        raise InapplicableError(f"eigenvalue {lambda_j} is not below the threshold {E}")
    gap = E - lambda_j
    C = 2.0 / gap * (8.0 * E / gap + E)
    q = C / (C + 1.0)
    return DecayBoundConstants(float(E), float(lambda_j), C, math.sqrt(q), q ** (-r0 / 2.0 - 1.0), float(r0))


@dataclass
class DecayProfile:
    """Tail norms of one function along a grid of depths."""

    R: np.ndarray
    A: np.ndarray  # L2 norm beyond depth R
    S: np.ndarray  # sup norm beyond depth R
    rate: float  # fitted decay rate of A per unit length
    fit_range: tuple
    norm: float
    lam: float = math.nan

    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.A) <= 1e-14) and np.all(np.diff(self.S) <= 1e-14))


def _fit_rate(R, A) -> float:
    ok = A > 0
    if ok.sum() < 2:
        return math.nan
    slope = np.polyfit(R[ok], np.log(A[ok]), 1)[0]
    return float(-slope)


def tail_profile(u: FeFunction, spec: geo.DomainSpec, R_grid, R_trunc: float, r0: float, lam: float = math.nan) -> DecayProfile:
    """Tail profile of an arbitrary finite element function."""
    R_grid = np.asarray(R_grid, dtype=float)
    if np.any(R_grid > R_trunc + 1e-12):
        raise ParameterError(f"grid extends beyond the truncation radius {R_trunc}")
    if np.any(np.diff(R_grid) <= 0):
        raise ParameterError("R grid must be increasing")
    A = np.array([tail_norm(u, spec, R) for R in R_grid])
    S = np.array([sup_norm_tail(u, spec, R) for R in R_grid])
    lo, hi = r0 + 1.0, R_trunc - 2.0
    sel = (R_grid >= lo - 1e-12) & (R_grid <= hi + 1e-12)
    return DecayProfile(R_grid, A, S, _fit_rate(R_grid[sel], A[sel]), (lo, hi), l2_norm(u), lam)


def compute_tail_profile(eig: EigenResult, spec: geo.DomainSpec, R_grid=None, j: int = 0, step: float = 0.5) -> DecayProfile:
    """Tail profile of eigenfunction ``j``.

    The default grid runs from ``r0`` to the truncation radius in steps of
    ``step``; the rate is fitted on ``[r0 + 1, R_trunc - 2]`` where the
    artificial cap does not yet bend the profile.
    """
    R_trunc = eig.mesh.domain.R
    r0 = eig.mesh.domain.r0
    if R_grid is None:
        R_grid = np.arange(r0, R_trunc + 1e-9, step)
    return tail_profile(eig.function(j), spec, R_grid, R_trunc, r0, float(eig.eigenvalues[j]))


@dataclass
class DecayCheck:
    R: np.ndarray
    A: np.ndarray
    S: np.ndarray
    bound: np.ndarray
    l2_pass: np.ndarray
    sup_pass: np.ndarray
    included: np.ndarray
    C2: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.l2_pass[self.included]))

    @property
    def margins(self) -> np.ndarray:
        return self.bound - self.A

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("R", "A", "S", "paper_bound", "pass"))
        for i in np.flatnonzero(self.included):
            w.writerow([repr(float(self.R[i])), repr(float(self.A[i])), repr(float(self.S[i])), repr(float(self.bound[i])), int(self.l2_pass[i])])
        return buf.getvalue()


def verify_decay_bounds(profile: DecayProfile, constants: DecayBoundConstants, norm_u: float | None = None, rtol: float = 1e-12) -> DecayCheck:
    """Compare a profile with the explicit tail bound.

    Rows with ``R < r0 + 1`` are excluded.  The sup-norm constant is not
    explicit: ``C2`` is fitted at the first included row and later rows must
    satisfy ``S(R) <= C2 beta**R``.
    """
    norm_u = profile.norm if norm_u is None else norm_u
    R = profile.R
    bound = constants.bound(R, norm_u)
    included = R >= constants.r0 + 1.0 - 1e-12
    l2_pass = profile.A <= bound * (1 + rtol)
    sup_pass = np.ones(len(R), dtype=bool)
    C2 = math.nan
    idx = np.flatnonzero(included)
    if len(idx):
        i0 = idx[0]
        C2 = float(profile.S[i0] / constants.beta_j ** R[i0])
        sup_pass[included] = profile.S[included] <= C2 * constants.beta_j ** R[included] * (1 + rtol)
    return DecayCheck(R, profile.A, profile.S, bound, l2_pass, sup_pass, included, C2)


def check_linf_l2(eig: EigenResult, j: int = 0) -> float:
    """``||u||_inf / (sqrt(lambda) ||u||_2)`` for eigenpair ``j``."""
    u = eig.function(j)
    lam = float(eig.eigenvalues[j])
    if lam <= 0:
        raise ParameterError("eigenvalue must be positive")
    return float(np.abs(u.values).max() / (math.sqrt(lam) * l2_norm(u, eig.system.M_full)))


def linf_l2_ratio(u: FeFunction, lam: float) -> float:
    """Same ratio for an arbitrary function and level ``lam``."""
    return float(np.abs(u.values).max() / (math.sqrt(lam) * l2_norm(u)))


def linf_l2_stability(results, j: int = 0) -> tuple[np.ndarray, float]:
    """Ratios across refinements and their largest relative variation."""
    r = np.array([check_linf_l2(e, j) for e in results])
    return r, float((r.max() - r.min()) / r.min())
