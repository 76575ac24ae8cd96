"""
Dense spectral diagnostics of the p-multigrid method: generalized eigenpairs,
per-mode reduction factors, explicit iteration matrices, spectral radii and
condition numbers.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AnalysisError
from . import pmg

__all__ = [
    "GeneralizedEigenSystem",
    "ReductionProfile",
    "SpectralReport",
    "generalized_eigs",
    "reduction_factors",
    "iteration_matrix",
    "spectral_radius",
    "estimate_spectral_radius",
    "condition_number",
    "observed_rate",
    "write_reduction_csv",
    "write_spectrum_csv",
]

DENSE_LIMIT = 5000
ITERATION_MATRIX_LIMIT = 2500


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


@dataclass(frozen=True, eq=False)
class GeneralizedEigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    A: np.ndarray
    M: np.ndarray

    def residuals(self):
        V = self.eigenvectors
        R = self.A @ V - (self.M @ V) * self.eigenvalues[None, :]
        return np.linalg.norm(R, axis=0)


def generalized_eigs(A, M):
    """Solve ``A v = lambda M v`` densely through a Cholesky reduction.

    Eigenvalues are sorted ascending (by real part for nonsymmetric ``A``),
    eigenvectors normalized to unit 2-norm.

    Raises
    ------
    AnalysisError
        If ``M`` is not symmetric positive definite or the size exceeds the
        dense limit.
    """
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise AnalysisError(f"dense eigensolve limited to {DENSE_LIMIT} unknowns")
    A, M = _dense(A), _dense(M)
    try:
        C = sla.cholesky(M, lower=True)
    except sla.LinAlgError as exc:
        raise AnalysisError("mass matrix is not SPD") from exc
    B = sla.solve_triangular(C, sla.solve_triangular(C, A, lower=True).T, lower=True).T
    symmetric = np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max())
    if symmetric:
        lam, Y = sla.eigh(0.5 * (B + B.T))
    else:
        lam, Y = sla.eig(B)
        if np.all(np.abs(lam.imag) <= 1e-12 * np.abs(lam).max()):
            lam, Y = lam.real, Y.real
        order = np.argsort(lam.real, kind="stable")
        lam, Y = lam[order], Y[:, order]
    V = sla.solve_triangular(C.T, Y, lower=False)
    V = V / np.linalg.norm(V, axis=0)[None, :]
    return GeneralizedEigenSystem(lam, V, A, M)


@dataclass(frozen=True)
class ReductionProfile:
    mode: int
    eigenvalue: float
    smoother: float
    cgc: float


def _smoothing_step(hierarchy, u, f):
    hierarchy.level(hierarchy.degree).smoother.smooth(u, f)
    return u


def reduction_factors(hierarchy, eigsystem, which=("smoother", "cgc"), exact_coarse=True):
    """Reduction of each eigenvector by one smoothing step and one CGC.

    Returns a list of :class:`ReductionProfile`, one per mode (1-based index,
    ascending eigenvalue). Factors not requested are ``nan``.
    """
    V = eigsystem.eigenvectors
    n = hierarchy.ndof
    if V.shape[0] != n:
        raise AnalysisError("eigensystem does not match the hierarchy")
    if isinstance(which, str):
        which = (which,)
    f = np.zeros(n)
    out = []
    for j in range(V.shape[1]):
        v = np.real(V[:, j]).copy()
        nv = np.linalg.norm(v)
        rs = rc = np.nan
        if "smoother" in which:
            rs = np.linalg.norm(_smoothing_step(hierarchy, v.copy(), f)) / nv
        if "cgc" in which:
            rc = np.linalg.norm(pmg.coarse_grid_correction(hierarchy, v.copy(), f, exact_coarse)) / nv
        out.append(ReductionProfile(j + 1, float(np.real(eigsystem.eigenvalues[j])), rs, rc))
    return out


def iteration_matrix(hierarchy, max_size=ITERATION_MATRIX_LIMIT):
    """Error propagator of one cycle: column ``i`` is the cycle applied to ``e_i`` with ``f = 0``."""
    n = hierarchy.ndof
    if n > max_size:
        raise AnalysisError(f"iteration matrix limited to {max_size} unknowns")
    p = hierarchy.degree
    f = np.zeros(n)
    T = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        T[:, i] = pmg.cycle(hierarchy, p, e, f)
    return T


@dataclass(frozen=True, eq=False)
class SpectralReport:
    eigenvalues: np.ndarray
    rho: float


def spectral_radius(T):
    """Eigenvalues of a dense square matrix and their maximum modulus."""
    T = _dense(T)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise AnalysisError("spectral radius needs a square matrix")
    try:
        lam = np.linalg.eigvals(T)
    except np.linalg.LinAlgError as exc:
        raise AnalysisError("eigensolver did not converge") from exc
    rho = float(np.abs(lam).max()) if lam.size else 0.0
    return SpectralReport(lam, rho)


def estimate_spectral_radius(hierarchy, tol=1e-6, seed=42):
    """Largest-modulus eigenvalue of the cycle's error propagator via ARPACK.

    Matrix-free counterpart of ``spectral_radius(iteration_matrix(h))`` for
    hierarchies too large for the dense path.
    """
    n = hierarchy.ndof
    p = hierarchy.degree
    f = np.zeros(n)

    def apply(e):
        return pmg.cycle(hierarchy, p, np.array(e, dtype=float).ravel(), f)

    op = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    v0 = pmg.seeded_initial_guess(n, seed)
    try:
        lam = spla.eigs(op, k=1, which="LM", tol=tol, v0=v0, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise AnalysisError("ARPACK did not converge") from exc
    return float(np.abs(lam).max())


def condition_number(A):
    """2-norm condition number from a dense SVD."""
    if A.shape[0] > DENSE_LIMIT:
        raise AnalysisError(f"dense SVD limited to {DENSE_LIMIT} unknowns")
    A = _dense(A)
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def observed_rate(history, first=10, last=20):
    """Geometric mean reduction factor of a residual history between two cycles."""
    h = np.asarray(history, dtype=float)
    last = min(last, h.size - 1)
    if last <= first:
        raise ValueError("history too short")
    return float((h[last] / h[first]) ** (1.0 / (last - first)))


def write_reduction_csv(path, profiles):
    with open(path, "w") as fh:
        fh.write("mode_index,eigenvalue,r_smoother,r_cgc\n")
        for r in profiles:
            fh.write(f"{r.mode},{r.eigenvalue:.17g},{r.smoother:.17g},{r.cgc:.17g}\n")


def write_spectrum_csv(path, eigenvalues):
    with open(path, "w") as fh:
        fh.write("re,im\n")
        for lam in np.asarray(eigenvalues, dtype=complex):
            fh.write(f"{lam.real:.17g},{lam.imag:.17g}\n")
