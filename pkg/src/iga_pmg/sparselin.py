"""
Sparse linear algebra: CSR helpers, Gauss-Seidel, RCM ordering, dual
threshold ILUT, BiCGSTAB and MatrixMarket I/O.

Matrices are :class:`scipy.sparse.csr_matrix` instances in canonical form
(sorted column indices, no duplicates); :func:`as_csr` enforces this.
"""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import _kernels
from .errors import FactorizationError, SmootherError

__all__ = [
    "as_csr",
    "spmv",
    "bandwidth",
    "gauss_seidel_sweep",
    "GaussSeidel",
    "rcm_ordering",
    "IlutFactorization",
    "ilut_factorize",
    "ilut_apply",
    "KrylovReport",
    "bicgstab",
    "write_matrix",
    "read_matrix",
    "write_vector",
    "read_vector",
]


def as_csr(A):
    """Return ``A`` as a canonical float64 CSR matrix (no copy if it already is one)."""
    if isinstance(A, sp.csr_matrix) and A.dtype == np.float64 and A.has_canonical_format:
        return A
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x):
    """``y = A @ x`` with row-ordered summation."""
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def bandwidth(A):
    """Maximum ``|i - j|`` over stored entries."""
    A = sp.coo_matrix(A)
    if A.nnz == 0:
        return 0
    return int(np.max(np.abs(A.row - A.col)))


def _diagonal(A):
    d = A.diagonal()
    if np.any(d == 0):
        raise SmootherError(f"zero diagonal entry in row {int(np.flatnonzero(d == 0)[0])}")
    return d


def gauss_seidel_sweep(A, u, f):
    """One forward Gauss-Seidel sweep, returning the updated vector.

    Raises
    ------
    SmootherError
        If ``A`` has a zero diagonal entry.
    """
    A = as_csr(A)
    u = np.array(u, dtype=float)
    _kernels.gauss_seidel_kernel(A.indptr, A.indices, A.data, _diagonal(A), u,
                                 np.asarray(f, dtype=float))
    return u


class GaussSeidel:
    """Forward Gauss-Seidel smoother bound to one matrix."""

    name = "gs"

    def __init__(self, A):
        self.A = as_csr(A)
        self.diag = _diagonal(self.A)

    def smooth(self, u, f):
        _kernels.gauss_seidel_kernel(self.A.indptr, self.A.indices, self.A.data,
                                     self.diag, u, f)
        return u


def rcm_ordering(A):
    """Reverse Cuthill-McKee permutation of the symmetrized pattern.

    Returns ``perm`` such that ``A[perm][:, perm]`` is the reordered matrix.
    If the permutation would widen the band (tensor-product matrices in
    lexicographic order are already close to optimal) the identity is
    returned instead, so the bandwidth never grows.
    """
    A = sp.csr_matrix(A)
    pattern = sp.csr_matrix((np.ones(A.nnz), A.indices, A.indptr), shape=A.shape)
    pattern = (pattern + pattern.T).tocsr()
    pattern.sort_indices()
    perm = np.asarray(reverse_cuthill_mckee(pattern, symmetric_mode=True), dtype=np.int64)
    if bandwidth(pattern[perm][:, perm]) > bandwidth(pattern):
        return np.arange(A.shape[0], dtype=np.int64)
    return perm


@dataclass(frozen=True, eq=False)
class IlutFactorization:
    """``P A P^T ~ L U`` with unit lower ``L`` (diagonal not stored).

    ``U`` holds the strict upper part; its diagonal is ``u_diag``.
    """

    L: sp.csr_matrix
    U: sp.csr_matrix
    u_diag: np.ndarray
    perm: np.ndarray
    perm_inverse: np.ndarray
    tau: float
    fillfactor: float
    max_keep: int

    name = "ilut"

    @property
    def shape(self):
        return self.L.shape

    @property
    def nnz(self):
        """Stored entries of ``L + U`` including both diagonals."""
        return self.L.nnz + self.U.nnz + 2 * self.L.shape[0]

    def lower(self):
        return self.L + sp.identity(self.L.shape[0], format="csr")

    def upper(self):
        return (self.U + sp.diags(self.u_diag)).tocsr()

    def solve(self, r):
        return ilut_apply(self, r)


def _trim(buf, used):
    # a nearly full work buffer is kept as a view instead of being copied
    view = buf[:used]
    return view if 4 * used >= 3 * buf.size else view.copy()


def ilut_factorize(A, tau=1e-12, fillfactor=1.0, ordering="rcm"):
    """Incomplete LU factorization with a dual dropping strategy.

    Row ``i`` of the (symmetrically permuted) matrix is eliminated in IKJ
    order. Entries whose magnitude does not exceed ``tau`` times the mean
    absolute value of the original row are dropped. Afterwards only the
    ``M = ceil(fillfactor * nnz(A) / n)`` largest entries of the L part and of
    the U part are kept; the diagonal is always kept.

    Parameters
    ----------
    A : sparse matrix, shape (n, n)
    tau : float
        Relative drop tolerance.
    fillfactor : float
        Multiplier ``m >= 1`` for the per-row entry cap.
    ordering : {"rcm", "none"}

    Returns
    -------
    IlutFactorization

    Raises
    ------
    FactorizationError
        On a zero (or dropped) pivot; ``row`` gives the offending row in the
        original numbering.
    """
    A = as_csr(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError("ILUT needs a square matrix")
    if tau < 0 or fillfactor < 1:
        raise ValueError("need tau >= 0 and fillfactor >= 1")
    if ordering == "rcm":
        perm = rcm_ordering(A)
    elif ordering == "none":
        perm = np.arange(n, dtype=np.int64)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    perm_inv = np.empty_like(perm)
    perm_inv[perm] = np.arange(n)
    B = as_csr(A[perm][:, perm])
    max_keep = max(1, int(math.ceil(fillfactor * A.nnz / n)))
    max_keep = min(max_keep, n)

    status, bad, lp, li, lv, up, ui, uv, ud = _kernels.ilut_kernel(
        B.indptr.astype(np.int64), B.indices, B.data,
        n, float(tau), max_keep)
    if status != _kernels.OK:
        raise FactorizationError(f"zero pivot in row {int(perm[bad])}", row=int(perm[bad]))
    L = sp.csr_matrix((_trim(lv, lp[-1]), _trim(li, lp[-1]), lp), shape=(n, n))
    U = sp.csr_matrix((_trim(uv, up[-1]), _trim(ui, up[-1]), up), shape=(n, n))
    return IlutFactorization(L, U, ud, perm, perm_inv, float(tau), float(fillfactor), max_keep)


def ilut_apply(fac, r):
    """``e = P^T U^{-1} L^{-1} P r`` by forward and backward substitution."""
    r = np.asarray(r, dtype=float)
    if r.shape != (fac.shape[0],):
        raise ValueError(f"dimension mismatch: factor {fac.shape}, vector {r.shape}")
    z = _kernels.lower_unit_solve(fac.L.indptr, fac.L.indices, fac.L.data, r[fac.perm])
    y = _kernels.upper_solve(fac.U.indptr, fac.U.indices, fac.U.data, fac.u_diag, z)
    return y[fac.perm_inverse]


class IlutSmoother:
    """``u <- u + (LU)^{-1} (f - A u)``."""

    name = "ilut"

    def __init__(self, A, tau=1e-12, fillfactor=1.0, ordering="rcm"):
        self.A = as_csr(A)
        self.factorization = ilut_factorize(self.A, tau, fillfactor, ordering)

    def smooth(self, u, f):
        u += ilut_apply(self.factorization, f - self.A @ u)
        return u


@dataclass
class KrylovReport:
    iterations: int = 0
    residual_history: list = field(default_factory=lambda: [1.0])
    converged: bool = False
    breakdown: bool = False


def _as_operator(M):
    if M is None:
        return lambda x: x.copy()
    if hasattr(M, "matvec"):
        return M.matvec
    if hasattr(M, "solve"):
        return M.solve
    return M


def bicgstab(A, f, preconditioner=None, tol=1e-8, max_iter=500, x0=None):
    """Right-preconditioned BiCGSTAB.

    Stops once ``||f - A u|| / ||f - A u0|| <= tol``. One iteration is a full
    step with two preconditioner applications; convergence after the first
    half step also counts as an iteration.

    Returns
    -------
    u : ndarray
    report : KrylovReport
    """
    apply_k = _as_operator(preconditioner)
    f = np.asarray(f, dtype=float)
    u = np.zeros_like(f) if x0 is None else np.array(x0, dtype=float)
    r = f - A @ u
    r0_norm = np.linalg.norm(r)
    report = KrylovReport()
    if r0_norm == 0.0:
        report.converged = True
        return u, report
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(f)
    p = np.zeros_like(f)
    tiny = np.finfo(float).tiny
    for it in range(1, max_iter + 1):
        rho_new = rhat @ r
        if abs(rho_new) <= tiny:
            report.breakdown = True
            break
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = apply_k(p)
        v = A @ phat
        denom = rhat @ v
        if abs(denom) <= tiny:
            report.breakdown = True
            break
        alpha = rho_new / denom
        s = r - alpha * v
        rel = np.linalg.norm(s) / r0_norm
        if rel <= tol:
            u += alpha * phat
            report.iterations = it
            report.residual_history.append(rel)
            report.converged = True
            return u, report
        shat = apply_k(s)
        t = A @ shat
        tt = t @ t
        omega = (t @ s) / tt if tt > 0 else 0.0
        u += alpha * phat + omega * shat
        r = s - omega * t
        rel = np.linalg.norm(r) / r0_norm
        report.iterations = it
        report.residual_history.append(rel)
        if rel <= tol:
            report.converged = True
            break
        if abs(omega) <= tiny:
            report.breakdown = True
            break
        rho = rho_new
    return u, report


def write_matrix(path, A, comment=""):
    """Write a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="real", precision=17)


def read_matrix(path):
    return as_csr(scipy.io.mmread(str(path)))


def write_vector(path, x):
    """Plain text, one value per line."""
    np.savetxt(str(path), np.asarray(x, dtype=float), fmt="%.17g")


def read_vector(path):
    path = str(path)
    if path.endswith(".mtx"):
        return np.asarray(scipy.io.mmread(path)).ravel()
    return np.loadtxt(path, ndmin=1)
