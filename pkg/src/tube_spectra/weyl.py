"""Singular Weyl sequences supported in one tube.

For a level ``lam >= E`` the sequence

    U_n = sqrt(2 / R_n) * psi_1(s) * sin(k_n (t - r0)),   r0 < t < r0 + R_n,

with ``k_n = sqrt(lam + 1/n - E_tube)`` and ``R_n = 2 n pi / k_n``, has unit
L2 norm, Dirichlet energy ``lam + 1/n`` and a dual-norm residual that tends
to zero, while converging weakly to zero.  ``t`` is the depth along the tube
and ``psi_1`` the normalized transverse ground mode.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import mesh as ms
from .errors import InapplicableError, ParameterError, TruncationError
from .fem import AssembledSystem, FeFunction, assemble, interpolate, quadratic_forms
from .linalg import dual_norm

WEYL_COLUMNS = ("lambda", "n", "energy", "l2", "dual_residual", "sqrtn_scaled_residual", "probe1", "probe2", "probe3", "applicable", "pass")


@dataclass(frozen=True)
class WeylSpec:
    """Parameters of one member of the sequence."""

    lam: float
    n: int
    tube_id: int = 0
    r0: float = 2.0
    width: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if self.width <= 0:
            raise ParameterError("tube width must be positive")

    @property
    def E_tube(self) -> float:
        return math.pi**2 / self.width**2

    @property
    def lambda_n(self) -> float:
        return self.lam + 1.0 / self.n

    @property
    def k_n(self) -> float:
        d = self.lambda_n - self.E_tube
        if d <= 0:
            raise InapplicableError(f"lambda_n={self.lambda_n} does not exceed the tube threshold {self.E_tube}")
        return math.sqrt(d)

    @property
    def R_n(self) -> float:
        return 2 * self.n * math.pi / self.k_n

    @property
    def required_R(self) -> float:
        """Smallest truncation radius that contains the support with a unit margin."""
        return self.r0 + self.R_n + 1.0

    @classmethod
    def on(cls, spec: geo.DomainSpec, lam: float, n: int, tube_id: int = 0, r0: float = 2.0) -> "WeylSpec":
        tube = spec.tubes[tube_id]
        if not tube.infinite:
            raise ParameterError(f"tube {tube_id} is finite")
        E = geo.threshold_energy(spec)
        if lam < E - 1e-12:
            raise InapplicableError(f"lambda={lam} is below the threshold E={E}")
        return cls(float(lam), int(n), tube_id, float(r0), tube.width)


def weyl_values(spec: geo.DomainSpec, ws: WeylSpec, points: np.ndarray) -> np.ndarray:
    """Closed-form ``U_n`` at ``points`` (zero outside the tube slab)."""
    tube = spec.tubes[ws.tube_id]
    t, s = tube.frame(points)
    w = ws.width
    inside = (t > ws.r0) & (t < ws.r0 + ws.R_n) & (s > 0) & (s < w)
    amp = math.sqrt(2.0 / ws.R_n) * math.sqrt(2.0 / w)
    out = np.zeros(len(t))
    out[inside] = amp * np.sin(math.pi * s[inside] / w) * np.sin(ws.k_n * (t[inside] - ws.r0))
    return out


def build_weyl_function(mesh: ms.Mesh, ws: WeylSpec) -> FeFunction:
    """Nodal interpolant of ``U_n`` on a mesh of a truncated domain.

    Raises
    ------
    TruncationError
        If the truncation does not contain the support plus a unit margin.
    """
    dom = mesh.domain
    if dom is None:
        raise ParameterError("mesh carries no domain provenance")
    if dom.R < ws.required_R - 1e-9:
        raise TruncationError(f"truncation R={dom.R} is shorter than r0 + R_n + 1 = {ws.required_R:.6g}")
    spec = dom.spec
    return interpolate(mesh, lambda x, y: weyl_values(spec, ws, np.column_stack([x, y])))


@dataclass
class WeylDiagnostics:
    energy: float
    mass: float
    dual_residual: float
    n: int
    lam: float

    @property
    def l2(self) -> float:
        return math.sqrt(max(self.mass, 0.0))

    @property
    def energy_error(self) -> float:
        return abs(self.energy - (self.lam + 1.0 / self.n))

    @property
    def mass_error(self) -> float:
        return abs(self.mass - 1.0)

    @property
    def scaled_residual(self) -> float:
        return self.dual_residual * math.sqrt(self.n)


def ps_diagnostics(U: FeFunction, lam: float, system: AssembledSystem, n: int = 1, tol: float = 1e-10) -> WeylDiagnostics:
    """Energy ``U^T K U``, mass ``U^T M U`` and the dual norm of ``K U - lam M U``."""
    x = U.free_values
    KU, MU = system.K @ x, system.M @ x
    r = KU - lam * MU
    return WeylDiagnostics(float(x @ KU), float(x @ MU), dual_norm(r, system.K, system.M, tol), n, float(lam))


def refined_forms(U: FeFunction, spec: geo.DomainSpec, ws: WeylSpec) -> tuple[float, float]:
    """Energy and mass of the interpolant on the uniformly refined mesh.

    Only the triangles where ``U`` is nonzero are refined; uniform
    refinement is local, so this equals refining the whole mesh.
    """
    mesh = U.mesh
    touched = np.any(U.values[mesh.triangles] != 0, axis=1)
    fine = ms.refine_uniform(ms.submesh(mesh, touched))
    Uf = interpolate(fine, lambda x, y: weyl_values(spec, ws, np.column_stack([x, y])))
    return quadratic_forms(Uf)


def bump_probes(spec: geo.DomainSpec, tube_id: int = 0, r0: float = 2.0) -> list[tuple[np.ndarray, float]]:
    """Three fixed test bumps: in the core, at the tube mouth, and in the tube."""
    tube = spec.tubes[tube_id]
    core = spec.core_polygon().representative_point()
    rad = 0.4 * tube.width
    mouth = tube.center + 0.5 * rad * tube.axis
    mid = tube.origin + (r0 + 2.0) * tube.axis + 0.5 * tube.width * tube.lateral_axis
    return [(np.array([core.x, core.y]), rad), (mouth, rad), (mid, rad)]


def probe_values(U: FeFunction, probes, M_full) -> list[float]:
    """``<U, g_k>`` for smooth bumps ``g_k = (1 - |x - c|^2 / rad^2)_+^2``."""
    out = []
    for c, rad in probes:
        d2 = ((U.mesh.vertices - c) ** 2).sum(1) / rad**2
        g = np.where(d2 < 1, (1 - d2) ** 2, 0.0)
        out.append(float(U.values @ (M_full @ g)))
    return out


@dataclass
class WeylRow:
    lam: float
    n: int
    applicable: bool
    diag: WeylDiagnostics | None = None
    probes: list = field(default_factory=list)
    energy_tol: float = 0.02
    mass_tol: float = 0.01

    @property
    def passed(self) -> bool:
        return bool(self.applicable and self.diag.energy_error <= self.energy_tol and self.diag.mass_error <= self.mass_tol)


@dataclass
class ThresholdReport:
    rows: list
    threshold: float

    def scaling_variation(self, lam: float, ns=(2, 4, 8)) -> float:
        """``max / min - 1`` of ``dual_residual * sqrt(n)`` over ``ns`` at level ``lam``."""
        v = [r.diag.scaled_residual for r in self.rows if r.applicable and r.lam == lam and r.n in ns]
        if len(v) < 2:
            raise ParameterError("not enough rows for a scaling check")
        return max(v) / min(v) - 1.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(WEYL_COLUMNS)
        for r in self.rows:
            if not r.applicable:
                w.writerow([repr(r.lam), r.n, "", "", "", "", "", "", "", 0, 0])
                continue
            d = r.diag
            w.writerow(
                [repr(r.lam), r.n, repr(d.energy), repr(d.l2), repr(d.dual_residual), repr(d.scaled_residual)]
                + [repr(p) for p in r.probes]
                + [1, int(r.passed)]
            )
        return buf.getvalue()


def weyl_mesh(spec: geo.DomainSpec, specs, h: float, r0: float = 2.0) -> ms.Mesh:
    """One mesh long enough for every sequence member; tubes structured beyond ``r0``.

    The support ends ``r0 + R_n`` are cut lines, so the derivative jumps of
    ``U_n`` fall on element faces and the interpolant stays second order.
    """
    R = max([w.required_R for w in specs] + [r0 + 2.0])
    R = math.ceil(R)
    ends = sorted({round(w.r0 + w.R_n, 12) for w in specs} | {r0})
    dom = geo.truncate(spec, R, cuts=[c for c in ends if c < R])
    from .spectra import tip_sizing

    return ms.triangulate(dom, h, tip_sizing(dom, h), structured_from=max(r0, dom.r0))


def essential_threshold_report(
    spec: geo.DomainSpec, lambda_grid, n_values=(1, 2, 4, 8), h: float = 1 / 64, tube_id: int = 0, r0: float = 2.0, tol: float = 1e-10
) -> ThresholdReport:
    """Run the construction for every (lam, n) and record the diagnostics.

    Rows with ``lam < E`` are marked inapplicable rather than raising.
    """
    E = geo.threshold_energy(spec)
    wanted = []
    for lam in lambda_grid:
        for n in n_values:
            try:
                wanted.append((lam, n, WeylSpec.on(spec, lam, n, tube_id, r0)))
            except InapplicableError:
                wanted.append((lam, n, None))
    specs = [w for *_, w in wanted if w is not None]
    rows = []
    if specs:
        mesh = weyl_mesh(spec, specs, h, r0)
        system = assemble(mesh)
        probes = bump_probes(spec, tube_id, r0)
    for lam, n, ws in wanted:
        if ws is None:
            rows.append(WeylRow(float(lam), int(n), False))
            continue
        U = build_weyl_function(mesh, ws)
        d = ps_diagnostics(U, lam, system, n, tol)
        rows.append(WeylRow(float(lam), int(n), True, d, probe_values(U, probes, system.M_full)))
    return ThresholdReport(rows, E)
