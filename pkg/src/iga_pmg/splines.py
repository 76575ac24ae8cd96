"""
B-spline bases on open uniform knot vectors, tensor-product bases and
NURBS patch geometries.

Indices are 0-based throughout. A knot span index ``s`` satisfies
``knots[s] <= xi < knots[s + 1]``; the non-vanishing functions on that span
are ``s - p, ..., s``. The last span is closed on the right so that
``xi = 1`` is a valid evaluation point.

The bivariate numbering is ``i = ix + iy * nx`` (x index fastest).
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import AssemblyError, DomainError, GeometryError

__all__ = [
    "KnotVector",
    "TensorBasis2D",
    "GeometryPatch",
    "MultiPatchDomain",
    "DofGlue",
    "find_span",
    "find_spans",
    "eval_basis",
    "eval_basis_deriv",
    "basis_ders",
    "geometry_map",
]

_KNOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open uniform knot vector on [0, 1].

    Parameters
    ----------
    degree : int
        Polynomial degree ``p >= 0``.
    knots : array_like
        Non-decreasing knots with the end knots repeated ``p + 1`` times and
        simple, equally spaced interior knots.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        p = int(self.degree)
        kv = np.array(self.knots, dtype=float)
        kv.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", kv)
        if p < 0:
            raise ValueError("degree must be nonnegative")
        if kv.ndim != 1 or kv.size < 2 * (p + 1):
            raise ValueError("knot vector too short for the degree")
        if np.any(np.diff(kv) < 0):
            raise ValueError("knots must be non-decreasing")
        if kv[0] != 0.0 or kv[-1] != 1.0:
            raise ValueError("knots must span [0, 1]")
        if np.any(kv[: p + 1] != 0.0) or np.any(kv[-(p + 1):] != 1.0):
            raise ValueError("end knots must be repeated p + 1 times")
        brk = kv[p:kv.size - p]
        if np.any(np.diff(brk) <= 0):
            raise ValueError("end knots repeated more than p + 1 times or "
                             "interior knots not simple")
        spans = np.diff(brk)
        if np.any(np.abs(spans - spans[0]) > 1e-12):
            raise ValueError("interior knots must be equally spaced")

    @classmethod
    def uniform(cls, degree, nspans):
        """Open uniform knot vector with ``nspans`` equal spans."""
        nspans = int(nspans)
        if nspans < 1:
            raise ValueError("need at least one knot span")
        interior = np.arange(1, nspans) / nspans
        kv = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
        return cls(degree, kv)

    @property
    def num_basis(self):
        return self.knots.size - self.degree - 1

    @property
    def nspans(self):
        return self.num_basis - self.degree

    @property
    def h(self):
        return 1.0 / self.nspans

    @property
    def breakpoints(self):
        return self.knots[self.degree:self.knots.size - self.degree]

    def greville(self):
        """Greville abscissae, one per basis function."""
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        n = self.num_basis
        idx = np.arange(n)[:, None] + np.arange(1, p + 1)[None, :]
        return self.knots[idx].mean(axis=1)

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, nspans={self.nspans})"


def find_spans(kv, xi):
    """Vectorized :func:`find_span` for an array of parameters."""
    xi = np.asarray(xi, dtype=float)
    t = kv.knots
    if np.any(xi < t[0] - _KNOT_TOL) or np.any(xi > t[-1] + _KNOT_TOL):
        raise DomainError(f"parameter outside knot range [{t[0]}, {t[-1]}]")
    xi = np.clip(xi, t[0], t[-1])
    span = np.searchsorted(t, xi, side="right") - 1
    # right-closed last span
    last = kv.num_basis - 1
    return np.minimum(span, last)


def find_span(kv, xi):
    """Knot span index ``s`` with ``knots[s] <= xi < knots[s+1]``.

    ``xi`` equal to the last knot is assigned to the last non-empty span.

    Raises
    ------
    DomainError
        If ``xi`` lies outside ``[knots[0], knots[-1]]``.
    """
    return int(find_spans(kv, np.array([xi]))[0])


def basis_ders(kv, xi, nders=0, spans=None):
    """Values and derivatives of the non-vanishing basis functions.

    Vectorized over ``xi`` (Piegl & Tiller, algorithms A2.2/A2.3).

    Parameters
    ----------
    kv : KnotVector
    xi : array_like, shape (m,)
    nders : int
        Highest derivative order, ``0 <= nders <= p``.
    spans : array_like of int, optional
        Precomputed knot spans of ``xi``.

    Returns
    -------
    first : ndarray of int, shape (m,)
        Index of the first non-vanishing function at each point.
    ders : ndarray, shape (nders + 1, m, p + 1)
        ``ders[k, q, r]`` is the k-th derivative of function ``first[q] + r``.
    """
    p = kv.degree
    t = kv.knots
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if nders > p:
        raise ValueError(f"derivative order {nders} exceeds degree {p}")
    span = find_spans(kv, xi) if spans is None else np.asarray(spans)
    m = xi.size

    ndu = np.zeros((p + 1, p + 1, m))
    ndu[0, 0] = 1.0
    left = np.zeros((p + 1, m))
    right = np.zeros((p + 1, m))
    for j in range(1, p + 1):
        left[j] = xi - t[span + 1 - j]
        right[j] = t[span + j] - xi
        saved = np.zeros(m)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nders + 1, p + 1, m))
    ders[0] = ndu[:, p]
    for r in range(p + 1):
        a = np.zeros((2, p + 1, m))
        a[0, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, nders + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    for k in range(1, nders + 1):
        ders[k] *= factorial(p) // factorial(p - k)
    return span - p, np.moveaxis(ders, 2, 1)


def eval_basis(kv, xi):
    """Non-vanishing basis functions at a single parameter.

    Returns
    -------
    first : int
        Index of the first of the ``p + 1`` returned functions.
    values : ndarray, shape (p + 1,)
    """
    first, ders = basis_ders(kv, [xi], 0)
    return int(first[0]), ders[0, 0]


def eval_basis_deriv(kv, xi, order=1):
    """Derivatives of the ``p + 1`` non-vanishing functions at ``xi``.

    Raises
    ------
    ValueError
        If ``order`` exceeds the degree or is not positive.
    """
    if order < 1 or order > kv.degree:
        raise ValueError(f"unsupported derivative order {order} for degree {kv.degree}")
    first, ders = basis_ders(kv, [xi], order)
    return int(first[0]), ders[order, 0]


def collocation_matrix(kv, xi):
    """Dense matrix ``B[q, i] = phi_i(xi_q)``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    first, ders = basis_ders(kv, xi, 0)
    B = np.zeros((xi.size, kv.num_basis))
    rows = np.repeat(np.arange(xi.size), kv.degree + 1)
    cols = (first[:, None] + np.arange(kv.degree + 1)).ravel()
    B[rows, cols] = ders[0].ravel()
    return B


@dataclass(frozen=True, eq=False)
class TensorBasis2D:
    """Tensor product of two univariate bases of equal degree."""

    basis_x: KnotVector
    basis_y: KnotVector

    def __post_init__(self):
        if self.basis_x.degree != self.basis_y.degree:
            raise ValueError("tensor basis requires equal degrees in both directions")

    @classmethod
    def uniform(cls, degree, nspans_x, nspans_y=None):
        nspans_y = nspans_x if nspans_y is None else nspans_y
        return cls(KnotVector.uniform(degree, nspans_x), KnotVector.uniform(degree, nspans_y))

    @property
    def degree(self):
        return self.basis_x.degree

    @property
    def shape(self):
        return self.basis_x.num_basis, self.basis_y.num_basis

    @property
    def ndof(self):
        nx, ny = self.shape
        return nx * ny

    def index(self, ix, iy):
        return np.asarray(ix) + np.asarray(iy) * self.basis_x.num_basis

    def unravel(self, i):
        nx = self.basis_x.num_basis
        i = np.asarray(i)
        return i % nx, i // nx


@dataclass(frozen=True, eq=False)
class GeometryPatch:
    """NURBS map from the unit square onto a physical patch.

    Parameters
    ----------
    control_net : array_like, shape (nx, ny, 2)
    weights : array_like, shape (nx, ny)
        Positive NURBS weights (all ones for polynomial patches).
    basis : TensorBasis2D
        Geometry basis, independent of the solution degree.
    extent : float
        Physical length represented by the unit parameter interval. The
        parameter knot spacing of a solution space with physical mesh width
        ``h`` is ``h / extent``.
    """

    control_net: np.ndarray
    weights: np.ndarray
    basis: TensorBasis2D
    extent: float = 1.0

    def __post_init__(self):
        cp = np.array(self.control_net, dtype=float)
        w = np.array(self.weights, dtype=float)
        if cp.shape != self.basis.shape + (2,) or w.shape != self.basis.shape:
            raise ValueError("control net shape does not match the geometry basis")
        if np.any(w <= 0):
            raise ValueError("NURBS weights must be positive")
        cp.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "control_net", cp)
        object.__setattr__(self, "weights", w)

    @classmethod
    def rectangle(cls, x0, x1, y0, y1, extent=None):
        kv = KnotVector.uniform(1, 1)
        cp = np.array([[[x0, y0], [x0, y1]], [[x1, y0], [x1, y1]]], dtype=float)
        if extent is None:
            extent = max(x1 - x0, y1 - y0)
        return cls(cp, np.ones((2, 2)), TensorBasis2D(kv, kv), extent)

    @classmethod
    def unit_square(cls):
        return cls.rectangle(0.0, 1.0, 0.0, 1.0)

    @classmethod
    def quarter_annulus(cls, r_inner=1.0, r_outer=2.0):
        """Exact quarter annulus in the first quadrant.

        The first parameter runs radially (degree-elevated linear map), the
        second runs along the arc from the x-axis to the y-axis.
        """
        kv = KnotVector.uniform(2, 1)
        radii = np.array([r_inner, 0.5 * (r_inner + r_outer), r_outer])
        arc = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        cp = radii[:, None, None] * arc[None, :, :]
        w = np.tile([1.0, np.sqrt(0.5), 1.0], (3, 1))
        return cls(cp, w, TensorBasis2D(kv, kv), 1.0)

    def _eval_1d(self, xi, eta):
        kx, ky = self.basis.basis_x, self.basis.basis_y
        fx, dx = basis_ders(kx, xi, 1)
        fy, dy = basis_ders(ky, eta, 1)
        # expand to dense collocation-like matrices over the (small) geometry basis
        def dense(first, d, nb):
            out = np.zeros((2, first.size, nb))
            for r in range(d.shape[2]):
                out[:, np.arange(first.size), first + r] = d[:, :, r]
            return out
        return dense(fx, dx, kx.num_basis), dense(fy, dy, ky.num_basis)

    def evaluate_grid(self, xi, eta):
        """Physical points and Jacobians on the tensor grid ``xi x eta``.

        Returns
        -------
        x : ndarray, shape (len(xi), len(eta), 2)
        jac : ndarray, shape (len(xi), len(eta), 2, 2)
            ``jac[..., :, 0]`` is dx/dxi and ``jac[..., :, 1]`` is dx/deta.
        """
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        Bx, By = self._eval_1d(xi, eta)
        w = self.weights
        wp = self.control_net * w[..., None]
        W = np.einsum("ai,bj,ij->ab", Bx[0], By[0], w)
        Wx = np.einsum("ai,bj,ij->ab", Bx[1], By[0], w)
        Wy = np.einsum("ai,bj,ij->ab", Bx[0], By[1], w)
        P = np.einsum("ai,bj,ijc->abc", Bx[0], By[0], wp)
        Px = np.einsum("ai,bj,ijc->abc", Bx[1], By[0], wp)
        Py = np.einsum("ai,bj,ijc->abc", Bx[0], By[1], wp)
        x = P / W[..., None]
        jac = np.empty(x.shape + (2,))
        jac[..., 0] = (Px - x * Wx[..., None]) / W[..., None]
        jac[..., 1] = (Py - x * Wy[..., None]) / W[..., None]
        return x, jac

    def corners(self):
        x, _ = self.evaluate_grid([0.0, 1.0], [0.0, 1.0])
        return x


def geometry_map(patch, xi_pair):
    """Physical point and 2x2 Jacobian at one parameter point.

    Raises
    ------
    GeometryError
        If the Jacobian determinant is not positive.
    """
    xi, eta = xi_pair
    x, jac = patch.evaluate_grid([xi], [eta])
    x, jac = x[0, 0], jac[0, 0]
    if not np.linalg.det(jac) > 0:
        raise GeometryError(f"nonpositive Jacobian determinant at {tuple(xi_pair)}")
    return x, jac


# sides of the parameter square: (direction normal to the side, end)
SIDES = {0: (0, 0), 1: (0, 1), 2: (1, 0), 3: (1, 1)}


def side_dofs(basis, side):
    """Local indices of the functions that do not vanish on ``side``."""
    nx, ny = basis.shape
    direction, end = SIDES[side]
    if direction == 0:
        ix = 0 if end == 0 else nx - 1
        return basis.index(np.full(ny, ix), np.arange(ny))
    iy = 0 if end == 0 else ny - 1
    return basis.index(np.arange(nx), np.full(nx, iy))


@dataclass(frozen=True, eq=False)
class DofGlue:
    """Solution space on a multipatch domain with glued interface dofs."""

    bases: list
    local_to_global: list
    global_ndof: int
    boundary_sides: list
    interfaces: list = field(default_factory=list)

    @property
    def degree(self):
        return self.bases[0].degree


class MultiPatchDomain:
    """Collection of conforming patches with a shared boundary."""

    def __init__(self, patches):
        self.patches = list(patches)
        if not self.patches:
            raise ValueError("domain needs at least one patch")

    def __len__(self):
        return len(self.patches)

    @classmethod
    def single(cls, patch):
        return cls([patch])

    @classmethod
    def l_shape(cls, split_depth=0):
        """[-1,1]^2 minus [0,1]^2 as 3 * 4**split_depth unit-aspect patches."""
        blocks = [(-1.0, 0.0, 0.0, 1.0), (-1.0, 0.0, -1.0, 0.0), (0.0, 1.0, -1.0, 0.0)]
        n = 2 ** int(split_depth)
        patches = []
        for x0, x1, y0, y1 in blocks:
            size = (x1 - x0) / n
            for j in range(n):
                for i in range(n):
                    patches.append(GeometryPatch.rectangle(
                        x0 + i * size, x0 + (i + 1) * size,
                        y0 + j * size, y0 + (j + 1) * size, extent=size))
        return cls(patches)

    def area(self, nq=8):
        total = 0.0
        g, w = np.polynomial.legendre.leggauss(nq)
        g, w = 0.5 * (g + 1), 0.5 * w
        for patch in self.patches:
            _, jac = patch.evaluate_grid(g, g)
            total += np.einsum("a,b,ab->", w, w, np.linalg.det(jac))
        return total

    def _side_midpoints(self):
        mids = {}
        for k, patch in enumerate(self.patches):
            for side, (direction, end) in SIDES.items():
                pt = [0.5, 0.5]
                pt[direction] = float(end)
                x, _ = patch.evaluate_grid([pt[0]], [pt[1]])
                mids[(k, side)] = x[0, 0]
        return mids

    def glue(self, degree, h):
        """Build the global solution space of the given degree and mesh width.

        Parameters
        ----------
        degree : int
        h : float
            Physical knot span size; each patch gets ``extent / h`` spans.

        Raises
        ------
        AssemblyError
            If an interface is non-conforming.
        """
        bases = []
        for patch in self.patches:
            n = patch.extent / h
            nspans = int(round(n))
            if nspans < 1 or abs(n - nspans) > 1e-9:
                raise AssemblyError(f"mesh width {h} does not subdivide patch extent {patch.extent}")
            bases.append(TensorBasis2D.uniform(degree, nspans))

        mids = self._side_midpoints()
        keys = list(mids)
        interfaces = []
        paired = set()
        tol = 1e-10
        for a in range(len(keys)):
            for b in range(a + 1, len(keys)):
                ka, kb = keys[a], keys[b]
                if ka[0] == kb[0]:
                    continue
                if np.linalg.norm(mids[ka] - mids[kb]) < tol:
                    interfaces.append((ka, kb))
                    paired.update([ka, kb])
        boundary = [k for k in keys if k not in paired]

        offsets = np.cumsum([0] + [b.ndof for b in bases])
        parent = np.arange(offsets[-1])

        def root(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for (pa, sa), (pb, sb) in interfaces:
            da = side_dofs(bases[pa], sa)
            db = side_dofs(bases[pb], sb)
            if da.size != db.size:
                raise AssemblyError(f"non-conforming interface between patches {pa} and {pb}")
            xa = self._anchors(pa, bases[pa], da)
            xb = self._anchors(pb, bases[pb], db)
            dist = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=2)
            match = dist.argmin(axis=1)
            if np.any(dist[np.arange(da.size), match] > 1e-9) or np.unique(match).size != da.size:
                raise AssemblyError(f"non-conforming interface between patches {pa} and {pb}")
            for i, j in zip(da + offsets[pa], db[match] + offsets[pb]):
                ri, rj = root(i), root(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

        numbering = {}
        l2g = []
        for k, basis in enumerate(bases):
            ids = np.empty(basis.ndof, dtype=np.int64)
            for i in range(basis.ndof):
                r = root(offsets[k] + i)
                if r not in numbering:
                    numbering[r] = len(numbering)
                ids[i] = numbering[r]
            l2g.append(ids)
        return DofGlue(bases, l2g, len(numbering), boundary, interfaces)

    def _anchors(self, k, basis, dofs):
        gx = basis.basis_x.greville()
        gy = basis.basis_y.greville()
        ix, iy = basis.unravel(dofs)
        x, _ = self.patches[k].evaluate_grid(gx, gy)
        return x[ix, iy]
