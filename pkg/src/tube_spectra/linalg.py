"""Sparse symmetric solvers: preconditioned CG and blocked LOBPCG."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, ParameterError

log = logging.getLogger(__name__)

Preconditioner = Callable[[np.ndarray], np.ndarray]


def check_symmetric(A, rtol: float = 1e-14) -> bool:
    """True when ``A`` is structurally and numerically symmetric to ``rtol``."""
    A = sp.csr_matrix(A)
    D = A - A.T
    scale = abs(A).max() if A.nnz else 1.0
    return D.nnz == 0 or abs(D).max() <= rtol * scale


def make_preconditioner(A, kind="jacobi", shift_matrix=None, shift: float = 0.0) -> Preconditioner:
    """Approximate inverse of ``A - shift * shift_matrix``.

    Parameters
    ----------
    kind : {"jacobi", "ilu", "lu", "amg", None} or callable
        ``lu`` is an exact sparse factorization (SuperLU), ``ilu`` an
        incomplete one, ``amg`` a smoothed-aggregation V-cycle (pyamg).
    """
    if callable(kind):
        return kind
    B = sp.csc_matrix(A) if shift == 0 or shift_matrix is None else sp.csc_matrix(A - shift * shift_matrix)
    if kind is None or kind == "none":
        return lambda r: np.array(r, dtype=float, copy=True)
    if kind == "jacobi":
        d = B.diagonal()
        if np.any(d <= 0):
            raise ParameterError("Jacobi preconditioner needs a positive diagonal")
        inv = 1.0 / d
        return lambda r: (inv * r.T).T if r.ndim == 1 else inv[:, None] * r
    if kind == "lu":
        lu = spla.splu(B, permc_spec="COLAMD")
        return lambda r: lu.solve(np.asarray(r, dtype=float))
    if kind == "ilu":
        ilu = spla.spilu(B, drop_tol=1e-5, fill_factor=20)
        return lambda r: ilu.solve(np.asarray(r, dtype=float))
    if kind == "amg":
        import pyamg

        # "local" weighting bounds the spectral radius by row sums; the default
        # estimate starts from a random vector and breaks bitwise repeatability
        ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(B), max_coarse=500, smooth=("jacobi", {"weighting": "local"}))

        def apply(r):
            r = np.asarray(r, dtype=float)
            if r.ndim == 1:
                return ml.solve(r, tol=1e-12, maxiter=1, cycle="V", accel=None)
            return np.column_stack([ml.solve(r[:, j], tol=1e-12, maxiter=1, cycle="V") for j in range(r.shape[1])])

        return apply
    raise ParameterError(f"unknown preconditioner {kind!r}")


# --------------------------------------------------------------------------
# conjugate gradients


@dataclass
class CGInfo:
    iterations: int = 0
    residual: float = math.nan
    history: list = field(default_factory=list)


def cg_solve(A, b, tol: float = 1e-10, max_iter: int | None = None, preconditioner="jacobi", x0=None, info=None):
    """Preconditioned conjugate gradients for SPD ``A``.

    Stops when ``||A x - b|| <= tol ||b||`` (true residual, 2-norm).

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations; carries the best iterate.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    info = info if info is not None else CGInfo()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        info.iterations, info.residual = 0, 0.0
        return np.zeros(n)
    max_iter = max(10 * n, 100) if max_iter is None else max_iter
    Pinv = make_preconditioner(A, preconditioner) if not callable(preconditioner) else preconditioner
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = Pinv(r)
    p = z.copy()
    rz = float(r @ z)
    best, best_res = x.copy(), float(np.linalg.norm(r))
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise ConvergenceError("matrix not positive definite along a search direction", best, info.history)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rn = float(np.linalg.norm(r))
        info.history.append(rn / bnorm)
        if rn < best_res:
            best, best_res = x.copy(), rn
        if rn <= tol * bnorm:
            # confirm with the true residual to avoid drift
            true = float(np.linalg.norm(b - A @ x))
            if true <= tol * bnorm:
                info.iterations, info.residual = it, true / bnorm
                return x
            r = b - A @ x
        z = Pinv(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    info.iterations, info.residual = max_iter, best_res / bnorm
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations (rel. residual {best_res / bnorm:.3e})", best, info.history)


# --------------------------------------------------------------------------
# orthonormalization


def m_orthonormalize(block, M, tol: float = 1e-12) -> np.ndarray:
    """Return a basis of span(block) whose M-Gram matrix is the identity.

    Cholesky QR applied twice; raises on numerical rank deficiency.
    """
    X = np.array(block, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    for _ in range(2):
        G = X.T @ (M @ X)
        G = 0.5 * (G + G.T)
        w = np.linalg.eigvalsh(G)
        if w[0] <= tol * max(w[-1], 1e-300):
            raise ParameterError("block is (numerically) rank deficient in the M inner product")
        L = np.linalg.cholesky(G)
        X = sla.solve_triangular(L, X.T, lower=True).T
    return X


def _svqb(S, MS, drop=1e-13):
    """M-orthonormalize the columns of S, dropping near-dependent directions."""
    G = S.T @ MS
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.clip(np.diag(G), 1e-300, None))
    Gs = G / d[:, None] / d[None, :]
    w, Z = np.linalg.eigh(Gs)
    keep = w > drop * w[-1]
    C = (Z[:, keep] / np.sqrt(w[keep])) / d[:, None]
    return C


@dataclass
class EigenResult:
    """Sorted, M-orthonormal eigenpairs of a generalized problem on the free nodes."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int = 0
    mesh: object = None
    system: object = None
    domain: object = None
    h: float = math.nan
    R: float = math.nan

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def function(self, j: int):
        from .fem import FeFunction

        return FeFunction.from_free(self.mesh, self.eigenvectors[:, j])


def _relative_residuals(K, M, X, lam, lumped):
    R = K @ X - (M @ X) * lam
    # residual in the lumped M^{-1} norm, relative to lambda ||x||_M
    num = np.sqrt(np.einsum("ij,ij->j", R, R / lumped[:, None]))
    den = np.abs(lam) * np.sqrt(np.einsum("ij,ij->j", X, M @ X))
    den = np.where(den > 0, den, 1.0)
    return num / den


def fix_signs(X: np.ndarray) -> np.ndarray:
    """Make the entry of largest magnitude positive in each column."""
    idx = np.argmax(np.abs(X), axis=0)
    s = np.sign(X[idx, np.arange(X.shape[1])])
    s[s == 0] = 1.0
    return X * s


def lobpcg(
    K,
    M,
    k: int,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 0,
    preconditioner="lu",
    shift: float = 0.0,
    extra: int | None = None,
    X0=None,
) -> EigenResult:
    """Smallest ``k`` eigenpairs of ``K x = lambda M x`` by blocked LOBPCG.

    Parameters
    ----------
    tol : float
        Relative residual target ``||K x - lambda M x||_{M_L^{-1}} / (lambda ||x||_M)``
        with ``M_L`` the lumped mass.
    preconditioner : str or callable
        See :func:`make_preconditioner`; applied to ``K - shift M``.
    extra : int, optional
        Guard vectors added to the block (default ``max(2, k // 2)``).

    Notes
    -----
    Each iteration performs Rayleigh-Ritz on [X, W, P] made M-orthonormal by
    SVQB, which keeps the basis stable when directions become dependent.
    Converged columns are soft-locked: kept in X but receive no new search
    direction.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if k < 1 or k > n:
        raise ParameterError(f"k={k} must lie in [1, {n}]")
    extra = max(2, k // 2) if extra is None else extra
    m = min(k + extra, n)
    lumped = np.asarray(M.sum(axis=1)).ravel()
    if n <= max(200, 5 * m):
        w, V = sla.eigh(K.toarray(), M.toarray())
        X = m_orthonormalize(fix_signs(V[:, :k]), M)
        lam = np.einsum("ij,ij->j", X, K @ X)
        return EigenResult(lam, X, _relative_residuals(K, M, X, lam, lumped), 0)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m)) if X0 is None else np.array(X0, dtype=float)
    if X.shape[1] < m:
        X = np.column_stack([X, rng.standard_normal((n, m - X.shape[1]))])
    Tinv = make_preconditioner(K, preconditioner, M, shift)
    X = Tinv(X)
    C = _svqb(X, M @ X)
    X = X @ C
    P = np.zeros((n, 0))
    res = np.full(m, np.inf)
    history = []
    best_max = np.inf
    stall = 0
    lam = np.zeros(m)
    for it in range(1, max_iter + 1):
        KX, MX = K @ X, M @ X
        if it == 1:
            A = X.T @ KX
            w, Z = np.linalg.eigh(0.5 * (A + A.T))
            X, KX, MX = X @ Z, KX @ Z, MX @ Z
            lam = w
        Rm = KX - MX * lam
        res = _relative_residuals(K, M, X, lam, lumped)
        history.append(float(res[:k].max()))
        if res[:k].max() <= tol:
            break
        if res[:k].max() < 0.5 * best_max:
            best_max, stall = res[:k].max(), 0
        else:
            stall += 1
            if stall > 80:
                raise ConvergenceError(
                    f"LOBPCG stagnated at residual {res[:k].max():.3e} after {it} iterations", X[:, :k], history
                )
        active = res > tol
        active[k:] = True  # guard vectors always keep searching
        W = Tinv(Rm[:, active])
        if W.ndim == 1:
            W = W[:, None]
        S = np.column_stack([X, W, P])
        MS = M @ S
        C = _svqb(S, MS)
        S = S @ C
        KS, MS = K @ S, M @ S
        # a second pass cleans up round-off when directions were nearly dependent
        C2 = _svqb(S, MS)
        S, KS, MS = S @ C2, KS @ C2, MS @ C2
        A = S.T @ KS
        w, Z = np.linalg.eigh(0.5 * (A + A.T))
        Z = Z[:, :m]
        lam = w[:m]
        Xn = S @ Z
        # implicit P: the new iterate minus its component along the old X
        proj = X.T @ (M @ Xn)
        P = Xn - X @ proj
        X = Xn
        if P.shape[1]:
            nrm = np.sqrt(np.einsum("ij,ij->j", P, M @ P))
            P = P[:, nrm > 1e-14 * max(nrm.max(), 1e-300)]
    else:
        raise ConvergenceError(f"LOBPCG reached max_iter={max_iter} (residual {res[:k].max():.3e})", X[:, :k], history)
    X = m_orthonormalize(fix_signs(X[:, :k]), M)
    lam = np.einsum("ij,ij->j", X, K @ X)
    order = np.argsort(lam, kind="stable")
    X, lam = X[:, order], lam[order]
    return EigenResult(lam, X, _relative_residuals(K, M, X, lam, lumped), it)


def dual_norm(r, K, M, tol: float = 1e-10, preconditioner="amg") -> float:
    """Discrete dual norm ``sqrt(r^T (K + M)^{-1} r)`` of a free-node residual."""
    r = np.asarray(r, dtype=float)
    if not np.any(r):
        return 0.0
    A = sp.csr_matrix(K + M)
    z = cg_solve(A, r, tol=tol, preconditioner=preconditioner)
    return float(np.sqrt(max(r @ z, 0.0)))
