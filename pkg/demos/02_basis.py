"""Bernstein polynomials on a tet: layout, evaluation, derivatives.

Run from the repository root:  python demos/02_basis.py
"""

import numpy as np

from tpst import (SplineField, TetMesh, bform_of_polynomial, diff_matrix, diff_matrix_first,
                  eval_basis, eval_bform, layout, lex_index, mass_matrix)

# Degree-3 polynomials on a tet have 20 Bernstein coefficients, indexed by
# (i, j, k, l) with i + j + k + l = 3 and listed in descending lexicographic order.
lay = layout(3)
print("dimension:", lay.dim)
print("first five indices:", [tuple(int(v) for v in mi) for mi in lay.indices[:5]])
print("position of (2, 1, 0, 0):", lex_index(3, (2, 1, 0, 0)))

# The basis is a partition of unity, even at points with negative coordinates.
b = np.array([[0.1, 0.2, 0.3, 0.4], [1.5, -0.2, -0.2, -0.1]])
print("sum of basis values:", eval_basis(lay, b).sum(axis=1))

# A global polynomial has an exact B-form on every tet; de Casteljau evaluation
# gives the same values back.
ref = TetMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)], [(0, 1, 2, 3)])
f = bform_of_polynomial(ref, 3, {(3, 0, 0): 1.0, (0, 1, 1): -2.0})  # x^3 - 2yz
p = np.array([0.2, 0.3, 0.1])
print(f"\nf(p) by de Casteljau: {f(p[None])[0]:.6f}; directly: {p[0]**3 - 2*p[1]*p[2]:.6f}")

# Directional derivatives act on coefficients. A direction is written in
# directional coordinates (barycentric coordinates of a vector, summing to 0);
# on this tet the x axis is (-1, 1, 0, 0).
ax = (-1, 1, 0, 0)
dfx = f.coeffs[0] @ diff_matrix_first(3, ax)  # degree-2 coefficients of df/dx
bary = np.r_[1 - p.sum(), p]
print(f"df/dx at p: {eval_bform(dfx, bary):.6f}; directly: {3*p[0]**2:.6f}")
d2 = f.coeffs[0] @ diff_matrix(3, [ax, ax])
print(f"d2f/dx2 at p: {eval_bform(d2, bary):.6f}; directly: {6*p[0]:.6f}")

# SplineField wraps this for arbitrary directions in space.
field = SplineField(ref, lay, f.coeffs)
print("gradient . (1,1,1)/sqrt3:", field.derivative_in(0, p[None], np.ones(3) / np.sqrt(3))[0])

# Gram matrix of the degree-1 basis on a tet of volume 1.
print("\nlinear mass matrix (V = 1):\n", mass_matrix(1, 1.0))
