"""
Galerkin assembly of the convection-diffusion-reaction form on (multipatch)
spline spaces, with Dirichlet data imposed weakly by Nitsche's method.

All integrals use tensor Gauss-Legendre rules on the knot spans. Matrices are
accumulated per patch in a banded layout (test index, trial offset) and then
mapped to global dofs through the interface glue.
"""
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, GeometryError, LumpingError
from .splines import SIDES, GeometryPatch, MultiPatchDomain, basis_ders, collocation_matrix
from .sparselin import as_csr

__all__ = [
    "CdrCoefficients",
    "BenchmarkSpec",
    "DiscreteProblem",
    "benchmark",
    "laplace_variant",
    "assemble_system",
    "assemble_mass",
    "assemble_transfer",
    "lump_mass",
    "interpolate",
    "discretization_error",
    "nitsche_penalty",
]


@dataclass(frozen=True, eq=False)
class CdrCoefficients:
    """Coefficients of ``-div(D grad u) + v . grad u + R u = f``, ``u = g`` on the boundary."""

    D: np.ndarray
    v: np.ndarray
    R: float
    f: object
    g: object

    def __post_init__(self):
        D = np.array(self.D, dtype=float).reshape(2, 2)
        v = np.array(self.v, dtype=float).reshape(2)
        if np.linalg.eigvalsh(0.5 * (D + D.T)).min() <= 0:
            raise ValueError("symmetric part of the diffusion tensor must be positive definite")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "R", float(self.R))


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass(frozen=True, eq=False)
class BenchmarkSpec:
    id: int
    name: str
    geometry: str
    coefficients: CdrCoefficients
    exact_solution: object
    bc_kind: str

    def domain(self, split_depth=0):
        if self.geometry == "quarter_annulus":
            return MultiPatchDomain.single(GeometryPatch.quarter_annulus(1.0, 2.0))
        if self.geometry == "unit_square":
            return MultiPatchDomain.single(GeometryPatch.unit_square())
        if self.geometry == "l_shape":
            return MultiPatchDomain.l_shape(split_depth)
        raise ValueError(f"unknown geometry {self.geometry!r}")


def _b1_exact(x, y):
    r2 = x**2 + y**2
    return -(r2 - 1) * (r2 - 4) * x * y**2


def _b1_source(x, y):
    return 2 * x * (x**4 + 22 * x**2 * y**2 - 5 * x**2 + 21 * y**4 - 45 * y**2 + 4)


def _b2_exact(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def _b2_source(x, y):
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    cx, cy = np.cos(np.pi * x), np.cos(np.pi * y)
    pi2 = np.pi**2
    return (2.1 * pi2 * sx * sy + 1.1 * pi2 * cx * cy
            + 0.4 * np.pi * cx * sy - 0.2 * np.pi * sx * cy + 0.3 * sx * sy)


def _b3_exact(x, y):
    theta = np.arctan2(y, x)
    r23 = np.cbrt(x**2 + y**2)
    return np.where(y > 0,
                    r23 * np.sin((2 * theta - np.pi) / 3),
                    r23 * np.sin((2 * theta + 3 * np.pi) / 3))


_BENCHMARKS = {
    1: BenchmarkSpec(
        1, "Poisson's equation on quarter annulus", "quarter_annulus",
        CdrCoefficients(np.eye(2), [0.0, 0.0], 0.0, _b1_source, _zero),
        _b1_exact, "homogeneous"),
    2: BenchmarkSpec(
        2, "CDR-equation on unit square", "unit_square",
        CdrCoefficients([[1.2, -0.7], [-0.4, 0.9]], [0.4, -0.2], 0.3, _b2_source, _zero),
        _b2_exact, "homogeneous"),
    3: BenchmarkSpec(
        3, "Poisson's equation on L-shaped domain", "l_shape",
        CdrCoefficients(np.eye(2), [0.0, 0.0], 0.0, _zero, _b3_exact),
        _b3_exact, "inhomogeneous"),
}


def benchmark(bid):
    """Benchmark problem 1, 2 or 3."""
    try:
        return _BENCHMARKS[int(bid)]
    except KeyError:
        raise ValueError(f"unknown benchmark {bid!r}") from None


def laplace_variant(spec):
    """``-Laplace u = 0`` with homogeneous data on the geometry of ``spec``."""
    coeffs = CdrCoefficients(np.eye(2), [0.0, 0.0], 0.0, _zero, _zero)
    return replace(spec, name=f"Laplace on {spec.geometry}", coefficients=coeffs,
                   exact_solution=_zero, bc_kind="homogeneous")


def nitsche_penalty(degree):
    """Penalty constant ``eta``; the boundary form uses ``eta / h``."""
    return 4.0 * degree**2


@dataclass(eq=False)
class DiscreteProblem:
    spec: BenchmarkSpec
    degree: int
    h: float
    domain: MultiPatchDomain
    space: object
    A: sp.csr_matrix
    rhs: np.ndarray
    nitsche_penalty: float

    @property
    def basis(self):
        return self.space.bases[0]

    @property
    def ndof(self):
        return self.space.global_ndof


# ---------------------------------------------------------------------------
# quadrature helpers

def _gauss(nq):
    g, w = np.polynomial.legendre.leggauss(nq)
    return 0.5 * (g + 1.0), 0.5 * w


class _Line:
    """Quadrature and basis values along one parameter direction."""

    def __init__(self, kv, nq):
        g, w = _gauss(nq)
        brk = kv.breakpoints
        nel = brk.size - 1
        size = np.diff(brk)
        self.nel, self.nq = nel, nq
        self.points = brk[:-1, None] + size[:, None] * g[None, :]
        self.weights = size[:, None] * w[None, :]
        spans = np.repeat(np.arange(nel) + kv.degree, nq)
        _, ders = basis_ders(kv, self.points.ravel(), 1, spans=spans)
        p1 = kv.degree + 1
        self.values = ders[0].reshape(nel, nq, p1)
        self.derivs = ders[1].reshape(nel, nq, p1)


def _end_values(kv, end):
    """Basis values/derivatives at xi = end on its adjacent element."""
    _, ders = basis_ders(kv, [float(end)], 1)
    return ders[0, 0], ders[1, 0]


def _check_jacobian(det):
    if not np.all(det > 0):
        raise GeometryError("nonpositive Jacobian determinant at a quadrature point")


def _tensor_vals(nx, ny):
    """(e, qx, p1x) x (qy, p1y) -> (e, qx*qy, p1y*p1x) with qx fast, ax fast."""
    e, qx, ax = nx.shape
    qy, ay = ny.shape
    out = nx[:, None, :, None, :] * ny[None, :, None, :, None]
    return out.reshape(e, qy * qx, ay * ax)


class _Band:
    """Banded accumulator for one patch: rows = test dofs, columns by offset."""

    def __init__(self, basis_t, basis_s):
        self.pt, self.ps = basis_t.degree, basis_s.degree
        self.nxt, self.nyt = basis_t.shape
        self.nxs, self.nys = basis_s.shape
        self.W = self.pt + self.ps + 1
        self.data = np.zeros(self.nyt * self.nxt * self.W * self.W)
        at = self.pt + 1
        as_ = self.ps + 1
        ax, ay = np.arange(at), np.arange(at)
        bx, by = np.arange(as_), np.arange(as_)
        # local (a, b) with a = ay*at + ax, b = by*as + bx
        AX = np.tile(ax, at)[:, None]
        AY = np.repeat(ay, at)[:, None]
        BX = np.tile(bx, as_)[None, :]
        BY = np.repeat(by, as_)[None, :]
        self._rel = (AY, AX, BY - AY + self.pt, BX - AX + self.pt)

    def add(self, ex, ey, E):
        """Add element blocks ``E[e, a, b]`` for elements (ex[e], ey[e])."""
        AY, AX, DY, DX = self._rel
        ex = np.asarray(ex)[:, None, None]
        ey = np.asarray(ey)[:, None, None]
        iy = ey + AY
        ix = ex + AX
        flat = ((iy * self.nxt + ix) * self.W + DY) * self.W + DX
        flat = np.broadcast_to(flat, E.shape).ravel()
        lo, hi = flat.min(), flat.max()
        self.data[lo:hi + 1] += np.bincount(flat - lo, weights=E.ravel(), minlength=hi - lo + 1)

    def triplets(self, l2g_t, l2g_s):
        W, pt = self.W, self.pt
        nz = self.nyt * self.nxt * W * W
        index_t = np.int32 if max(nz, len(l2g_t), len(l2g_s)) < 2**31 else np.int64
        data = self.data.reshape(self.nyt, self.nxt, W, W)
        ix, dy, dx = np.meshgrid(np.arange(self.nxt), np.arange(W), np.arange(W), indexing="ij")
        jx = ix + dx - pt
        okx = (jx >= 0) & (jx < self.nxs)
        rows, cols, vals = [], [], []
        # one row of test functions at a time keeps the index arrays small
        for iy in range(self.nyt):
            jy = iy + dy - pt
            ok = okx & (jy >= 0) & (jy < self.nys)
            vals.append(data[iy][ok])
            rows.append(l2g_t[(ix + iy * self.nxt)[ok]].astype(index_t))
            cols.append(l2g_s[(jx + jy * self.nxs)[ok]].astype(index_t))
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _check_compatible(space_t, space_s):
    if len(space_t.bases) != len(space_s.bases):
        raise AssemblyError("spaces live on different patch layouts")
    for bt, bs in zip(space_t.bases, space_s.bases):
        if (bt.basis_x.nspans, bt.basis_y.nspans) != (bs.basis_x.nspans, bs.basis_y.nspans):
            raise AssemblyError("spaces have different knot spans")


def _volume(domain, space_t, space_s, nq, kernel, rhs_kernel=None):
    """Assemble sum over patches of element integrals.

    ``kernel(data) -> E[e, a, b]`` receives a dict with trial/test values,
    physical gradients, weights and physical points for one element row.
    """
    _check_compatible(space_t, space_s)
    nt, ns = space_t.global_ndof, space_s.global_ndof
    rows, cols, vals = [], [], []
    rhs = np.zeros(nt) if rhs_kernel is not None else None
    for k, patch in enumerate(domain.patches):
        bt, bs = space_t.bases[k], space_s.bases[k]
        lt = (_Line(bt.basis_x, nq), _Line(bt.basis_y, nq))
        ls = (_Line(bs.basis_x, nq), _Line(bs.basis_y, nq))
        X, J = patch.evaluate_grid(lt[0].points.ravel(), lt[1].points.ravel())
        nelx, nely = lt[0].nel, lt[1].nel
        X = X.reshape(nelx, nq, nely, nq, 2)
        J = J.reshape(nelx, nq, nely, nq, 2, 2)
        band = _Band(bt, bs)
        ex = np.arange(nelx)
        for ey in range(nely):
            # (e, qy, qx, ...) so that flattening gives qx fastest
            Jr = np.transpose(J[:, :, ey], (0, 2, 1, 3, 4)).reshape(nelx, nq * nq, 2, 2)
            Xr = np.transpose(X[:, :, ey], (0, 2, 1, 3)).reshape(nelx, nq * nq, 2)
            det = np.linalg.det(Jr)
            _check_jacobian(det)
            Jinv = np.linalg.inv(Jr)
            w = (lt[0].weights[:, None, :] * lt[1].weights[ey][None, :, None]).reshape(nelx, nq * nq)
            w = w * det
            data = {"w": w, "x": Xr}
            for tag, lines in (("t", lt), ("s", ls)):
                lx, ly = lines
                val = _tensor_vals(lx.values, ly.values[ey])
                gxi = _tensor_vals(lx.derivs, ly.values[ey])
                geta = _tensor_vals(lx.values, ly.derivs[ey])
                # physical gradient: grad = Jinv^T grad_ref
                g0 = Jinv[:, :, 0, 0, None] * gxi + Jinv[:, :, 1, 0, None] * geta
                g1 = Jinv[:, :, 0, 1, None] * gxi + Jinv[:, :, 1, 1, None] * geta
                data["val_" + tag] = val
                data["grad_" + tag] = np.stack([g0, g1], axis=2)  # (e, Q, 2, A)
            if kernel is not None:
                band.add(ex, np.full(nelx, ey), kernel(data))
            if rhs_kernel is not None:
                loc = rhs_kernel(data)  # (e, A)
                _scatter_vec(rhs, space_t.local_to_global[k], bt, ex, np.full(nelx, ey), loc)
        r, c, v = band.triplets(space_t.local_to_global[k], space_s.local_to_global[k])
        rows.append(r)
        cols.append(c)
        vals.append(v)
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nt, ns))
    return as_csr(A), rhs


def _element_dofs(l2g, basis, ex, ey):
    """Global indices ``(e, a)`` of the functions supported on elements (ex, ey)."""
    p1 = basis.degree + 1
    nx = basis.shape[0]
    ax = np.tile(np.arange(p1), p1)
    ay = np.repeat(np.arange(p1), p1)
    idx = (np.asarray(ex)[:, None] + ax[None, :]) + (np.asarray(ey)[:, None] + ay[None, :]) * nx
    return l2g[idx]


def _scatter_vec(rhs, l2g, basis, ex, ey, loc):
    np.add.at(rhs, _element_dofs(l2g, basis, ex, ey).ravel(), loc.ravel())


def _cdr_kernel(coeffs):
    D, v, R = coeffs.D, coeffs.v, coeffs.R
    has_conv = np.any(v != 0)
    has_reac = R != 0

    def kernel(d):
        w = d["w"]
        gt, gs = d["grad_t"], d["grad_s"]
        e, Q, _, A = gt.shape
        Dgs = np.einsum("ij,eqjb->eqib", D, gs)
        E = np.matmul((gt * w[:, :, None, None]).reshape(e, Q * 2, A).transpose(0, 2, 1),
                      Dgs.reshape(e, Q * 2, -1))
        if has_conv or has_reac:
            trial = np.zeros_like(d["val_s"])
            if has_conv:
                trial = trial + v[0] * gs[:, :, 0] + v[1] * gs[:, :, 1]
            if has_reac:
                trial = trial + R * d["val_s"]
            E += np.matmul((d["val_t"] * w[:, :, None]).transpose(0, 2, 1), trial)
        return E
    return kernel


def _mass_kernel(d):
    return np.matmul((d["val_t"] * d["w"][:, :, None]).transpose(0, 2, 1), d["val_s"])


def _source_kernel(f):
    def kernel(d):
        x = d["x"]
        fx = f(x[..., 0], x[..., 1])
        return np.einsum("eq,eqa->ea", d["w"] * fx, d["val_t"])
    return kernel


def _nitsche(domain, space, coeffs, eta, nq):
    """Symmetric Nitsche boundary terms on all non-interface sides."""
    n = space.global_ndof
    D = coeffs.D
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    g_fn = coeffs.g
    for k, side in space.boundary_sides:
        patch = domain.patches[k]
        basis = space.bases[k]
        direction, end = SIDES[side]
        tangent = 1 - direction
        kvs = (basis.basis_x, basis.basis_y)
        kv_n, kv_t = kvs[direction], kvs[tangent]
        line = _Line(kv_t, nq)
        nv, nd = _end_values(kv_n, end)
        nel = line.nel
        fixed_el = 0 if end == 0 else kv_n.nspans - 1
        h_param = 1.0 / kv_n.nspans

        tpts = line.points.ravel()
        if direction == 0:
            X, J = patch.evaluate_grid([float(end)], tpts)
            X, J = X[0], J[0]
        else:
            X, J = patch.evaluate_grid(tpts, [float(end)])
            X, J = X[:, 0], J[:, 0]
        X = X.reshape(nel, nq, 2)
        J = J.reshape(nel, nq, 2, 2)
        det = np.linalg.det(J)
        _check_jacobian(det)
        Jinv = np.linalg.inv(J)
        grad_n = Jinv[:, :, direction, :]  # gradient of the normal parameter
        gnorm = np.linalg.norm(grad_n, axis=-1)
        sign = -1.0 if end == 0 else 1.0
        normal = sign * grad_n / gnorm[..., None]
        ds = np.linalg.norm(J[:, :, :, tangent], axis=-1) * line.weights
        h_n = h_param / gnorm

        # local functions: normal-direction index a_n, tangential index a_t
        p1 = basis.degree + 1
        vt, dt = line.values, line.derivs  # (e, q, p1)
        val = vt[:, :, None, :] * nv[None, None, :, None]       # (e, q, a_n, a_t)
        dref_n = vt[:, :, None, :] * nd[None, None, :, None]
        dref_t = dt[:, :, None, :] * nv[None, None, :, None]
        if direction == 0:
            # local order a = ay*p1 + ax, ax = a_n, ay = a_t
            perm = (0, 1, 3, 2)
            gxi, geta = dref_n, dref_t
        else:
            perm = (0, 1, 2, 3)
            gxi, geta = dref_t, dref_n
        val = val.transpose(perm).reshape(nel, nq, p1 * p1)
        gxi = gxi.transpose(perm).reshape(nel, nq, p1 * p1)
        geta = geta.transpose(perm).reshape(nel, nq, p1 * p1)
        g0 = Jinv[:, :, 0, 0, None] * gxi + Jinv[:, :, 1, 0, None] * geta
        g1 = Jinv[:, :, 0, 1, None] * gxi + Jinv[:, :, 1, 1, None] * geta
        Dn = np.einsum("ij,eqi->eqj", D, normal)  # (D grad phi) . n = grad phi . (D^T n)
        flux = Dn[..., 0, None] * g0 + Dn[..., 1, None] * g1  # (e, q, A)
        pen = eta / h_n
        wv = ds[..., None] * val
        E = (-np.matmul(wv.transpose(0, 2, 1), flux)
             - np.matmul((ds[..., None] * flux).transpose(0, 2, 1), val)
             + np.matmul((wv * pen[..., None]).transpose(0, 2, 1), val))
        gvals = g_fn(X[..., 0], X[..., 1])
        loc = np.einsum("eq,eqa->ea", ds * gvals, -flux + pen[..., None] * val)

        els = np.arange(nel)
        if direction == 0:
            ex, ey = np.full(nel, fixed_el), els
        else:
            ex, ey = els, np.full(nel, fixed_el)
        l2g = space.local_to_global[k]
        dofs = _element_dofs(l2g, basis, ex, ey)
        rows.append(np.repeat(dofs, p1 * p1, axis=1).ravel())
        cols.append(np.tile(dofs, (1, p1 * p1)).ravel())
        vals.append(E.ravel())
        _scatter_vec(rhs, l2g, basis, ex, ey, loc)
    if not rows:
        return sp.csr_matrix((n, n)), rhs
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return as_csr(A), rhs


def assemble_system(spec, p, h, split_depth=0, penalty=None, domain=None):
    """Assemble the Nitsche-Galerkin system of a benchmark at degree ``p``.

    Parameters
    ----------
    spec : BenchmarkSpec
    p : int
        Spline degree (1..5 in the experiments).
    h : float
        Mesh width (knot span size).
    split_depth : int
        Uniform patch splitting depth for multipatch geometries.
    penalty : float, optional
        Nitsche constant, default :func:`nitsche_penalty`.

    Returns
    -------
    DiscreteProblem
    """
    if domain is None:
        domain = spec.domain(split_depth)
    space = domain.glue(p, h)
    eta = nitsche_penalty(p) if penalty is None else float(penalty)
    nq = p + 1
    coeffs = spec.coefficients
    A, rhs = _volume(domain, space, space, nq, _cdr_kernel(coeffs), _source_kernel(coeffs.f))
    N, g = _nitsche(domain, space, coeffs, eta, nq)
    A = as_csr(A + N)
    return DiscreteProblem(spec, p, h, domain, space, A, rhs + g, eta)


def _mass_points(domain, degree):
    # rational Jacobians need extra points for the mass to integrate to the area
    rational = any(np.ptp(patch.weights) > 0 for patch in domain.patches)
    return degree + (4 if rational else 1)


def assemble_mass(space, domain, nq=None):
    """Consistent mass matrix of ``space``."""
    nq = _mass_points(domain, space.degree) if nq is None else nq
    M, _ = _volume(domain, space, space, nq, _mass_kernel)
    return M


def assemble_transfer(space_k, space_km1, domain, nq=None):
    """Mixed mass matrix ``P[i, j] = int phi_{i,k} phi_{j,k-1}``."""
    nq = _mass_points(domain, max(space_k.degree, space_km1.degree)) if nq is None else nq
    P, _ = _volume(domain, space_k, space_km1, nq, _mass_kernel)
    return P


def lump_mass(M):
    """Row sums of ``M``.

    Raises
    ------
    LumpingError
        If some row sum is not strictly positive.
    """
    M = sp.csr_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("mass matrix must be square")
    d = np.asarray(M.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise LumpingError(f"nonpositive row sum in row {int(np.flatnonzero(d <= 0)[0])}")
    return d


def interpolate(space, domain, func):
    """Coefficients of the spline interpolant at the Greville points of each patch."""
    u = np.zeros(space.global_ndof)
    for k, patch in enumerate(domain.patches):
        b = space.bases[k]
        gx, gy = b.basis_x.greville(), b.basis_y.greville()
        X, _ = patch.evaluate_grid(gx, gy)
        U = func(X[..., 0], X[..., 1])
        Bx = collocation_matrix(b.basis_x, gx)
        By = collocation_matrix(b.basis_y, gy)
        C = np.linalg.solve(Bx, np.linalg.solve(By, U.T).T)
        u[space.local_to_global[k]] = C.ravel(order="F")
    return u


def discretization_error(problem, exact_solution, u, extra_points=2):
    """L2 norm of ``u_h - u`` over the physical domain."""
    u = np.asarray(u, dtype=float)
    if u.shape != (problem.ndof,):
        raise ValueError("coefficient vector has wrong length")
    total = 0.0
    space = problem.space
    for k, patch in enumerate(problem.domain.patches):
        b = space.bases[k]
        nq = b.degree + 1 + extra_points
        lx, ly = _Line(b.basis_x, nq), _Line(b.basis_y, nq)
        X, J = patch.evaluate_grid(lx.points.ravel(), ly.points.ravel())
        det = np.linalg.det(J)
        Bx = sp.csr_matrix(collocation_matrix(b.basis_x, lx.points.ravel()))
        By = sp.csr_matrix(collocation_matrix(b.basis_y, ly.points.ravel()))
        C = u[space.local_to_global[k]].reshape(b.shape, order="F")
        uh = Bx @ (By @ C.T).T
        diff = uh - exact_solution(X[..., 0], X[..., 1])
        w = np.outer(lx.weights.ravel(), ly.weights.ravel()) * det
        total += np.sum(w * diff**2)
    return float(np.sqrt(total))
