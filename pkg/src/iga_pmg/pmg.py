"""
p-multigrid: a hierarchy of spline degrees p, p-1, ..., 1 on a fixed mesh.

Transfers between degrees are L2 projections with row-sum lumped mass
matrices. Coarse operators are rediscretized by default. The degree-one
problem is handled by a single V-cycle of a geometric h-multigrid method with
ILUT smoothing, linear interpolation and its transpose as restriction.
"""
from dataclasses import dataclass, field
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._seed import seeded_initial_guess
from .discretization import assemble_mass, assemble_system, assemble_transfer, lump_mass
from .errors import FactorizationError
from .sparselin import GaussSeidel, IlutSmoother, as_csr, bicgstab

__all__ = [
    "PmgLevel",
    "HmgHierarchy",
    "PmgHierarchy",
    "SolveReport",
    "build_hierarchy",
    "galerkin_operator",
    "prolongate",
    "restrict",
    "cycle",
    "solve",
    "as_preconditioner",
    "solve_bicgstab",
]

COARSEST_H = 2.0**-2
DIVERGENCE_LIMIT = 1e10


def _make_smoother(kind, A, tau, fillfactor, ordering):
    if kind == "ilut":
        return IlutSmoother(A, tau, fillfactor, ordering)
    if kind == "gs":
        return GaussSeidel(A)
    raise ValueError(f"unknown smoother {kind!r}")


@dataclass(eq=False)
class PmgLevel:
    degree: int
    A: sp.csr_matrix
    lumped_mass: np.ndarray
    space: object
    smoother: object = None
    transfer_up: sp.csr_matrix = None  # P^{k+1}_k, shape (N(k+1), N(k))

    @property
    def ndof(self):
        return self.A.shape[0]


def _linear_interpolation_1d(n_coarse_spans):
    """Degree-one knot insertion matrix from n to 2n spans."""
    nc = n_coarse_spans + 1
    nf = 2 * n_coarse_spans + 1
    rows, cols, vals = [], [], []
    for i in range(nf):
        if i % 2 == 0:
            rows.append(i); cols.append(i // 2); vals.append(1.0)
        else:
            rows += [i, i]; cols += [i // 2, i // 2 + 1]; vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(nf, nc))


def _hmg_prolongation(fine, coarse):
    """Global degree-one prolongation between two glued spaces."""
    rows, cols, vals = [], [], []
    for k, (bf, bc) in enumerate(zip(fine.bases, coarse.bases)):
        Px = _linear_interpolation_1d(bc.basis_x.nspans)
        Py = _linear_interpolation_1d(bc.basis_y.nspans)
        P = sp.coo_matrix(sp.kron(Py, Px))
        rows.append(fine.local_to_global[k][P.row])
        cols.append(coarse.local_to_global[k][P.col])
        vals.append(P.data)
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    # glued fine dofs appear once per patch with identical rows: keep one copy
    key = np.stack([rows, cols])
    _, first = np.unique(key, axis=1, return_index=True)
    return sp.csr_matrix((vals[first], (rows[first], cols[first])),
                         shape=(fine.global_ndof, coarse.global_ndof))


@dataclass(eq=False)
class HmgHierarchy:
    """Degree-one h-multigrid levels, finest first, ending in a direct solve."""

    operators: list
    smoothers: list
    prolongations: list  # prolongations[l]: level l+1 -> level l
    hs: list
    coarse_lu: object
    nu1: int = 1
    nu2: int = 1

    @property
    def nlevels(self):
        return len(self.operators)

    def vcycle(self, u, f, level=0):
        A = self.operators[level]
        if level == self.nlevels - 1:
            return self.coarse_lu.solve(f)
        S = self.smoothers[level]
        for _ in range(self.nu1):
            S.smooth(u, f)
        P = self.prolongations[level]
        rc = P.T @ (f - A @ u)
        ec = self.vcycle(np.zeros(P.shape[1]), rc, level + 1)
        u += P @ ec
        for _ in range(self.nu2):
            S.smooth(u, f)
        return u


def build_hmg(spec, h, A_fine=None, domain=None, split_depth=0, tau=1e-12, fillfactor=1.0,
              ordering="rcm", coarsest_h=COARSEST_H, nu1=1, nu2=1):
    """h-multigrid for the degree-one rediscretization of ``spec``."""
    domain = spec.domain(split_depth) if domain is None else domain
    hs = [h]
    while hs[-1] < coarsest_h * (1 - 1e-12):
        hs.append(2 * hs[-1])
    ops, spaces = [], []
    for level, hl in enumerate(hs):
        if level == 0 and A_fine is not None:
            A = A_fine
            space = domain.glue(1, hl)
        else:
            prob = assemble_system(spec, 1, hl, domain=domain)
            A, space = prob.A, prob.space
        ops.append(A)
        spaces.append(space)
    smoothers = []
    for level, A in enumerate(ops[:-1]):
        try:
            smoothers.append(IlutSmoother(A, tau, fillfactor, ordering))
        except FactorizationError as exc:
            exc.level = f"h-level {level} (h={hs[level]})"
            raise
    prolongations = [_hmg_prolongation(spaces[l], spaces[l + 1]) for l in range(len(hs) - 1)]
    coarse_lu = spla.splu(sp.csc_matrix(ops[-1]))
    return HmgHierarchy(ops, smoothers, prolongations, hs, coarse_lu, nu1, nu2)


def galerkin_operator(A_fine, transfer, lumped_fine, lumped_coarse):
    """``I^{k-1}_k A_k I^k_{k-1}`` with lumped L2 transfers."""
    prolong = sp.diags(1.0 / lumped_fine) @ transfer
    restrict_ = sp.diags(1.0 / lumped_coarse) @ transfer.T
    return as_csr(restrict_ @ A_fine @ prolong)


@dataclass
class SolveReport:
    cycles: int = 0
    residual_history: list = field(default_factory=lambda: [1.0])
    converged: bool = False
    diverged: bool = False
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0


@dataclass(eq=False)
class PmgHierarchy:
    """Levels ordered by degree: ``levels[k - 1]`` has degree ``k``."""

    levels: list
    hmg: HmgHierarchy
    problem: object
    smoother: str = "ilut"
    cycle_type: str = "V"
    nu1: int = 1
    nu2: int = 1
    coarse_op: str = "rediscretize"
    setup_seconds: float = 0.0
    assembly_seconds: float = 0.0

    @property
    def degree(self):
        return self.levels[-1].degree

    @property
    def A(self):
        return self.levels[-1].A

    @property
    def ndof(self):
        return self.A.shape[0]

    def level(self, k):
        return self.levels[k - 1]


def build_hierarchy(spec, p, h, smoother="ilut", cycle="V", nu1=1, nu2=1,
                    coarse_op="rediscretize", tau=1e-12, fillfactor=1.0, ordering="rcm",
                    split_depth=0, problem=None, operators=None):
    """Assemble operators, transfers and smoothers for all degrees ``p..1``.

    Parameters
    ----------
    spec : BenchmarkSpec
    p : int
        Finest degree.
    h : float
        Mesh width, shared by all p-levels.
    smoother : {"ilut", "gs"}
        Smoother on the levels ``k >= 2``; the h-multigrid always uses ILUT.
    cycle : {"V", "W"}
    coarse_op : {"rediscretize", "galerkin"}
    operators : PmgHierarchy, optional
        Reuse assembled operators and transfers of an existing hierarchy.

    Raises
    ------
    FactorizationError
        With ``level`` set to the failing degree or h-level.
    """
    if p < 1:
        raise ValueError("degree must be at least 1")
    if cycle not in ("V", "W"):
        raise ValueError(f"unknown cycle type {cycle!r}")
    if coarse_op not in ("rediscretize", "galerkin"):
        raise ValueError(f"unknown coarse operator {coarse_op!r}")
    # setup = shared part (operators, transfers, h-multigrid) + level smoothers;
    # a reused hierarchy passes its shared time on
    t0 = time.perf_counter()
    if operators is not None:
        problem = operators.problem
        levels = [PmgLevel(l.degree, l.A, l.lumped_mass, l.space, None, l.transfer_up)
                  for l in operators.levels]
        hmg_ops = operators.hmg
    else:
        if problem is None:
            problem = assemble_system(spec, p, h, split_depth)
        domain = problem.domain
        levels = []
        for k in range(1, p + 1):
            if k == p:
                A, space = problem.A, problem.space
            elif coarse_op == "rediscretize":
                prob_k = assemble_system(spec, k, h, domain=domain)
                A, space = prob_k.A, prob_k.space
            else:
                A, space = None, domain.glue(k, h)
            ml = lump_mass(assemble_mass(space, domain))
            levels.append(PmgLevel(k, A, ml, space))
        for k in range(1, p):
            levels[k - 1].transfer_up = assemble_transfer(levels[k].space, levels[k - 1].space, domain)
        if coarse_op == "galerkin":
            for k in range(p - 1, 0, -1):
                fine, coarse = levels[k], levels[k - 1]
                coarse.A = galerkin_operator(fine.A, coarse.transfer_up,
                                             fine.lumped_mass, coarse.lumped_mass)
        hmg_ops = None
    shared = time.perf_counter() - t0

    t0 = time.perf_counter()
    for lvl in levels[1:]:
        try:
            lvl.smoother = _make_smoother(smoother, lvl.A, tau, fillfactor, ordering)
        except FactorizationError as exc:
            exc.level = f"p-level {lvl.degree}"
            raise
    smooth_time = time.perf_counter() - t0
    t0 = time.perf_counter()
    if hmg_ops is not None:
        hmg = HmgHierarchy(hmg_ops.operators, hmg_ops.smoothers, hmg_ops.prolongations,
                           hmg_ops.hs, hmg_ops.coarse_lu, nu1, nu2)
        shared = operators.assembly_seconds
    else:
        hmg = build_hmg(spec, h, A_fine=levels[0].A, domain=problem.domain, tau=tau,
                        fillfactor=fillfactor, ordering=ordering, nu1=nu1, nu2=nu2)
        shared += time.perf_counter() - t0
    return PmgHierarchy(levels, hmg, problem, smoother, cycle, nu1, nu2, coarse_op,
                        shared + smooth_time, shared)


def prolongate(hierarchy, k, v):
    """``diag(M^L_k)^{-1} P^k_{k-1} v`` from degree ``k-1`` to ``k``."""
    fine, coarse = hierarchy.level(k), hierarchy.level(k - 1)
    v = np.asarray(v, dtype=float)
    if v.shape != (coarse.ndof,):
        raise ValueError(f"expected vector of length {coarse.ndof}, got {v.shape}")
    return (coarse.transfer_up @ v) / fine.lumped_mass


def restrict(hierarchy, k, r):
    """``diag(M^L_{k-1})^{-1} (P^k_{k-1})^T r`` from degree ``k`` to ``k-1``."""
    fine, coarse = hierarchy.level(k), hierarchy.level(k - 1)
    r = np.asarray(r, dtype=float)
    if r.shape != (fine.ndof,):
        raise ValueError(f"expected vector of length {fine.ndof}, got {r.shape}")
    return (coarse.transfer_up.T @ r) / coarse.lumped_mass


def _coarse_solve(hierarchy, e, r):
    return hierarchy.hmg.vcycle(e, r)


def cycle(hierarchy, k, u, f):
    """One multigrid cycle at degree ``k``; ``u`` is updated in place and returned."""
    if k == 1:
        return _coarse_solve(hierarchy, u, f)
    lvl = hierarchy.level(k)
    for _ in range(hierarchy.nu1):
        lvl.smoother.smooth(u, f)
    rc = restrict(hierarchy, k, f - lvl.A @ u)
    ec = np.zeros(hierarchy.level(k - 1).ndof)
    for _ in range(2 if hierarchy.cycle_type == "W" else 1):
        ec = cycle(hierarchy, k - 1, ec, rc)
    u += prolongate(hierarchy, k, ec)
    for _ in range(hierarchy.nu2):
        lvl.smoother.smooth(u, f)
    return u


def coarse_grid_correction(hierarchy, u, f, exact=True):
    """Steps restrict - coarse solve - prolongate - update at the finest degree."""
    p = hierarchy.degree
    A = hierarchy.A
    rc = restrict(hierarchy, p, f - A @ u)
    coarse = hierarchy.level(p - 1)
    if exact:
        ec = spla.spsolve(sp.csc_matrix(coarse.A), rc)
    else:
        ec = cycle(hierarchy, p - 1, np.zeros(coarse.ndof), rc)
    return u + prolongate(hierarchy, p, ec)


def solve(hierarchy, f=None, tol=1e-8, max_cycles=200, u0=None, seed=42):
    """Stand-alone multigrid iteration.

    Cycles until the residual has been reduced by ``tol`` relative to the
    initial residual, the relative residual exceeds ``1e10`` (divergence) or
    ``max_cycles`` is reached. The default initial guess is
    :func:`seeded_initial_guess`.

    Returns
    -------
    u : ndarray
    report : SolveReport
    """
    A = hierarchy.A
    f = hierarchy.problem.rhs if f is None else np.asarray(f, dtype=float)
    u = seeded_initial_guess(A.shape[0], seed) if u0 is None else np.array(u0, dtype=float)
    report = SolveReport(setup_seconds=hierarchy.setup_seconds)
    t0 = time.perf_counter()
    r0 = np.linalg.norm(f - A @ u)
    if r0 == 0.0:
        report.converged = True
        return u, report
    p = hierarchy.degree
    for it in range(1, max_cycles + 1):
        u = cycle(hierarchy, p, u, f)
        rel = np.linalg.norm(f - A @ u) / r0
        report.residual_history.append(float(rel))
        report.cycles = it
        if rel <= tol:
            report.converged = True
            break
        if not np.isfinite(rel) or rel > DIVERGENCE_LIMIT:
            report.diverged = True
            break
    report.solve_seconds = time.perf_counter() - t0
    return u, report


def as_preconditioner(hierarchy):
    """Linear operator applying one cycle from a zero initial guess."""
    n = hierarchy.ndof
    p = hierarchy.degree

    def apply(r):
        r = np.asarray(r, dtype=float).ravel()
        return cycle(hierarchy, p, np.zeros(n), r)

    return spla.LinearOperator((n, n), matvec=apply, dtype=float)


def solve_bicgstab(hierarchy, f=None, tol=1e-8, max_iter=500, u0=None, seed=42):
    """BiCGSTAB preconditioned with one multigrid cycle per application."""
    A = hierarchy.A
    f = hierarchy.problem.rhs if f is None else np.asarray(f, dtype=float)
    x0 = seeded_initial_guess(A.shape[0], seed) if u0 is None else u0
    t0 = time.perf_counter()
    u, kr = bicgstab(A, f, as_preconditioner(hierarchy), tol, max_iter, x0)
    report = SolveReport(kr.iterations, kr.residual_history, kr.converged,
                         bool(kr.residual_history[-1] > DIVERGENCE_LIMIT),
                         hierarchy.setup_seconds, time.perf_counter() - t0)
    return u, report
