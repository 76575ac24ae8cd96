"""
B-spline bases and the benchmark geometries
===========================================

Evaluate an open uniform basis, check that it sums to one, and map the
exact quarter annulus and the L-shaped multipatch domain.
"""
import numpy as np

from iga_pmg.splines import GeometryPatch, KnotVector, MultiPatchDomain, basis_ders, collocation_matrix

# a cubic basis on eight knot spans: 11 functions
kv = KnotVector.uniform(3, 8)
print("knots:", kv.knots)
print("functions:", kv.num_basis)

# values and first derivatives at a handful of points; rows sum to one and zero
x = np.linspace(0, 1, 5)
first, ders = basis_ders(kv, x, 1)
print("row sums of values     :", ders[0].sum(axis=1))
print("row sums of derivatives:", ders[1].sum(axis=1))

# the full collocation matrix is handy for plotting the basis elsewhere
B = collocation_matrix(kv, np.linspace(0, 1, 201))
np.savetxt("cubic_basis.csv", B, delimiter=",")

# the annulus is an exact NURBS patch; its area is 3*pi/4
annulus = MultiPatchDomain.single(GeometryPatch.quarter_annulus())
print("annulus area:", annulus.area(nq=20), "exact:", 0.75 * np.pi)

# the L-shape is made of 3 squares, each optionally split into 4^s patches
for s in (0, 1):
    dom = MultiPatchDomain.l_shape(s)
    space = dom.glue(2, 0.25)
    print(f"L-shape s={s}: {len(dom)} patches, {space.global_ndof} quadratic dofs, area {dom.area():.3f}")
