import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iga_pmg.errors import DomainError, GeometryError, AssemblyError
from iga_pmg.splines import (
    KnotVector, TensorBasis2D, GeometryPatch, MultiPatchDomain, basis_ders, collocation_matrix,
    eval_basis, eval_basis_deriv, find_span, geometry_map,
)
from oracles import all_basis, scan_span, gauss

KV_P1 = KnotVector(1, [0, 0, 0.5, 1, 1])


# --- knot vectors -----------------------------------------------------------

def test_uniform_knot_vector_layout():
    kv = KnotVector.uniform(3, 4)
    assert kv.num_basis == 7
    assert len(kv.knots) == kv.num_basis + kv.degree + 1
    assert np.allclose(kv.knots, [0, 0, 0, 0, .25, .5, .75, 1, 1, 1, 1])
    assert kv.h == 0.25


@pytest.mark.parametrize("knots", [
    [0, 0, 1, 0.5, 1, 1],       # decreasing
    [0, 0.5, 1, 1],             # first knot not repeated
    [0, 0, 0.5, 0.5, 1, 1],     # repeated interior knot
    [0, 0, 0.3, 1, 1],          # non-uniform spacing
])
def test_invalid_knot_vectors_rejected(knots):
    with pytest.raises(ValueError):
        KnotVector(1, knots)


# --- find_span --------------------------------------------------------------

def test_find_span_first_interior_span():
    assert find_span(KV_P1, 0.25) == 1     # knots[1] = 0 <= 0.25 < knots[2] = 0.5


def test_find_span_right_endpoint_is_closed():
    assert find_span(KV_P1, 1.0) == 2      # span [0.5, 1)


def test_find_span_matches_linear_scan():
    kv = KnotVector.uniform(2, 4)
    assert find_span(kv, 0.6) == scan_span(kv.knots, 0.6)


@pytest.mark.parametrize("xi", [-1e-3, 1.001])
def test_find_span_outside_range(xi):
    with pytest.raises(DomainError):
        find_span(KV_P1, xi)


@settings(max_examples=200, deadline=None)
@given(p=st.integers(0, 5), nspans=st.sampled_from([1, 2, 4, 8]), xi=st.floats(0, 1))
def test_find_span_property(p, nspans, xi):
    kv = KnotVector.uniform(p, nspans)
    assert find_span(kv, xi) == scan_span(kv.knots, xi)


# --- basis values -----------------------------------------------------------

@pytest.mark.parametrize("xi", [0.0, 0.3, 0.99, 1.0])
def test_degree_zero_is_indicator(xi):
    first, vals = eval_basis(KnotVector.uniform(0, 4), xi)
    assert vals.tolist() == [1.0]
    assert first == min(int(xi * 4), 3)


def test_hat_functions_by_hand():
    first, vals = eval_basis(KV_P1, 0.25)
    assert first == 0
    assert np.allclose(vals, [0.5, 0.5], atol=1e-15)


def test_hat_derivatives_by_hand():
    first, d = eval_basis_deriv(KV_P1, 0.25)
    assert first == 0
    assert np.allclose(d, [-2.0, 2.0], atol=1e-14)


def test_derivative_order_above_degree_rejected():
    with pytest.raises(ValueError):
        eval_basis_deriv(KV_P1, 0.3, order=2)


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_values_match_recursive_cox_de_boor(p):
    kv = KnotVector.uniform(p, 4)
    xs = np.linspace(0, 1, 37)
    B = collocation_matrix(kv, xs)
    ref = np.array([all_basis(kv.knots, p, x) for x in xs])
    assert np.allclose(B, ref, atol=1e-14)


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("L", [2, 3, 4, 5, 6])
def test_partition_of_unity(p, L):
    kv = KnotVector.uniform(p, 2**L)
    xi = np.random.default_rng(p * 10 + L).random(1000)
    _, ders = basis_ders(kv, xi, 0)
    assert np.abs(ders[0].sum(axis=1) - 1).max() < 1e-13


@settings(max_examples=100, deadline=None)
@given(p=st.integers(1, 5), L=st.integers(0, 5), xi=st.floats(0, 1))
def test_derivatives_sum_to_zero(p, L, xi):
    kv = KnotVector.uniform(p, 2**L)
    _, ders = basis_ders(kv, [xi], p)
    assert np.abs(ders[1:].sum(axis=2)).max() < 1e-12 * 2 ** (L * p) * 10**p


@settings(max_examples=100, deadline=None)
@given(p=st.integers(0, 5), L=st.integers(0, 5), xi=st.floats(0, 1))
def test_local_support_and_nonnegativity(p, L, xi):
    kv = KnotVector.uniform(p, 2**L)
    first, vals = eval_basis(kv, xi)
    assert vals.shape == (p + 1,)
    assert np.all(vals >= 0)
    t = kv.knots
    for r, v in enumerate(vals):
        i = first + r
        if v > 0:
            assert t[i] <= xi <= t[i + p + 1]


def test_first_derivative_matches_central_difference():
    kv = KnotVector.uniform(2, 8)
    eps = 1e-6
    xs = np.random.default_rng(0).random(50)
    xs = xs[np.abs(xs * 8 - np.round(xs * 8)) > 1e-3]  # keep the stencil inside one span
    for xi in xs:
        first, d = eval_basis_deriv(kv, xi)
        B = collocation_matrix(kv, [xi - eps, xi + eps])
        fd = (B[1] - B[0]) / (2 * eps)
        ref = fd[first:first + 3]
        assert np.allclose(d, ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())


@pytest.mark.parametrize("p", [2, 3, 4])
def test_continuity_of_derivative_p_minus_1_across_knots(p):
    kv = KnotVector.uniform(p, 4)
    for s, knot in ((p + 1, 0.25), (p + 2, 0.5), (p + 3, 0.75)):
        # one-sided limits: evaluate the polynomial pieces of both spans at the knot
        f_lo, lo = basis_ders(kv, [knot], p - 1, spans=[s - 1])
        f_hi, hi = basis_ders(kv, [knot], p - 1, spans=[s])
        a = np.zeros(kv.num_basis)
        b = np.zeros(kv.num_basis)
        a[f_lo[0]:f_lo[0] + p + 1] = lo[p - 1, 0]
        b[f_hi[0]:f_hi[0] + p + 1] = hi[p - 1, 0]
        assert np.abs(a - b).max() < 1e-6 * np.abs(a).max()
        # the p-th derivative does jump
        _, lo = basis_ders(kv, [knot], p, spans=[s - 1])
        _, hi = basis_ders(kv, [knot], p, spans=[s])
        a[:] = 0
        b[:] = 0
        a[f_lo[0]:f_lo[0] + p + 1] = lo[p, 0]
        b[f_hi[0]:f_hi[0] + p + 1] = hi[p, 0]
        assert np.abs(a - b).max() > 1.0


# --- tensor basis -----------------------------------------------------------

def test_tensor_index_bijective():
    tb = TensorBasis2D.uniform(2, 4, 3)
    nx, ny = tb.shape
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    idx = tb.index(ix.ravel(), iy.ravel())
    assert sorted(idx.tolist()) == list(range(tb.ndof))
    jx, jy = tb.unravel(idx)
    assert np.array_equal(jx, ix.ravel()) and np.array_equal(jy, iy.ravel())


def test_tensor_basis_requires_equal_degrees():
    with pytest.raises(ValueError):
        TensorBasis2D(KnotVector.uniform(1, 2), KnotVector.uniform(2, 2))


# --- geometry ---------------------------------------------------------------

def test_identity_patch():
    x, J = geometry_map(GeometryPatch.unit_square(), (0.3, 0.7))
    assert np.allclose(x, [0.3, 0.7], atol=1e-15)
    assert np.allclose(J, np.eye(2), atol=1e-14)


def test_quarter_annulus_radial_edges_are_circles():
    patch = GeometryPatch.quarter_annulus()
    x0, _ = geometry_map(patch, (0.0, 0.0))
    assert abs(np.linalg.norm(x0) - 1) < 1e-12
    eta = np.linspace(0, 1, 41)
    x, _ = patch.evaluate_grid([0.0, 1.0], eta)
    r = np.linalg.norm(x, axis=-1)
    assert np.abs(r[0] - 1).max() < 1e-12
    assert np.abs(r[1] - 2).max() < 1e-12


def test_quarter_annulus_area():
    area = MultiPatchDomain.single(GeometryPatch.quarter_annulus()).area(nq=20)
    assert abs(area - 0.75 * np.pi) < 1e-12


def test_l_shape_corners():
    dom = MultiPatchDomain.l_shape()
    pts = {tuple(np.round(c, 12)) for patch in dom.patches for c in patch.corners().reshape(-1, 2)}
    expected = {(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1)}
    assert pts == {tuple(float(v) for v in e) for e in expected}
    assert abs(dom.area() - 3.0) < 1e-12


@pytest.mark.parametrize("s", [0, 1, 2])
def test_l_shape_patch_count(s):
    assert len(MultiPatchDomain.l_shape(s)) == 3 * 4**s


@pytest.mark.parametrize("patch", [GeometryPatch.unit_square(), GeometryPatch.quarter_annulus()]
                         + MultiPatchDomain.l_shape(1).patches[:2])
def test_jacobian_positive_at_gauss_points(patch):
    g, _ = gauss(6)
    pts = np.concatenate([(g + e) / 16 for e in range(16)])
    _, J = patch.evaluate_grid(pts, pts)
    assert np.linalg.det(J).min() > 0


def test_inverted_patch_raises_geometry_error():
    p = GeometryPatch.unit_square()
    flipped = GeometryPatch(p.control_net[::-1].copy(), p.weights, p.basis)
    with pytest.raises(GeometryError):
        geometry_map(flipped, (0.5, 0.5))


# --- multipatch glue --------------------------------------------------------

def test_l_shape_glue_dof_count():
    # 3 patches of 5x5 p=1 dofs, two interfaces of 5 shared dofs
    space = MultiPatchDomain.l_shape().glue(1, 0.25)
    assert space.global_ndof == 3 * 25 - 2 * 5


@pytest.mark.parametrize("p", [1, 2, 3])
def test_glue_is_consistent(p):
    space = MultiPatchDomain.l_shape(1).glue(p, 0.25)
    allg = np.concatenate(space.local_to_global)
    # every global dof has a local preimage
    assert np.array_equal(np.unique(allg), np.arange(space.global_ndof))
    # 4 inside each of the 3 blocks, 2 halves of each of the 2 block interfaces
    assert len(space.interfaces) == 3 * 4 + 2 * 2


def test_glued_dofs_share_physical_trace():
    dom = MultiPatchDomain.l_shape()
    space = dom.glue(2, 0.25)
    # anchors of glued dofs coincide
    seen = {}
    for k, (patch, basis, l2g) in enumerate(zip(dom.patches, space.bases, space.local_to_global)):
        gx = basis.basis_x.greville()
        gy = basis.basis_y.greville()
        x, _ = patch.evaluate_grid(gx, gy)
        pts = np.transpose(x, (1, 0, 2)).reshape(-1, 2)  # index ix + iy * nx
        for loc, g in enumerate(l2g):
            if g in seen:
                assert np.allclose(seen[g], pts[loc], atol=1e-12)
            seen[g] = pts[loc]


def test_mesh_width_must_subdivide_patch():
    with pytest.raises(AssemblyError):
        MultiPatchDomain.l_shape(1).glue(1, 1.0)
