"""Smoothness conditions across faces and the spline space they cut out.

Run from the repository root:  python demos/03_constraints.py
"""

import numpy as np

from tpst import (SplineField, assemble_H, bform_of_polynomial, generate_box_mesh, layout,
                  nullspace_basis)
from tpst.smoothness import rows_per_face

# Two neighbouring tets: each shared face contributes one row per matching
# coefficient pair for continuity, and more rows for each order of smoothness.
mesh = generate_box_mesh(((0, 0, 0), (1, 1, 1)), (2, 2, 2))
print(f"{mesh.n_tets} tets, {len(mesh.interior_faces)} interior faces")
for d, r in [(2, 0), (3, 0), (3, 1), (4, 2)]:
    H = assemble_H(mesh, d, r)
    Q = nullspace_basis(H)
    print(f"  d={d} r={r}: {rows_per_face(d, r):2d} rows/face, H is {H.shape[0]}x{H.shape[1]}, "
          f"spline space dimension {Q.shape[1]}")

# Every global polynomial of degree <= d satisfies every condition.
H = assemble_H(mesh, 3, 1)
g = bform_of_polynomial(mesh, 3, {(1, 2, 0): 1.0, (0, 0, 3): -0.5, (0, 0, 0): 2.0}).flat
print("\n|H g| for a global cubic:", np.abs(H.H @ g).max())

# A random element of the null space is a C1 spline: value and normal
# derivative agree on both sides of a shared face.
rng = np.random.default_rng(0)
Q = nullspace_basis(H)
field = SplineField(mesh, layout(3), Q @ rng.normal(size=Q.shape[1]))
ta, fa, tb, _ = mesh.interior_faces[5]
shared = [mesh.tets[ta][s] for s in range(4) if s != fa]
p = rng.dirichlet(np.ones(3)) @ mesh.nodes[shared]
n = mesh.bary_maps[ta][fa, 1:]  # gradient of the opposite coordinate: a face normal
n = n / np.linalg.norm(n)
print("value on both sides:     ", field.eval_in(ta, p[None])[0], field.eval_in(tb, p[None])[0])
print("derivative on both sides:", field.derivative_in(ta, p[None], n)[0],
      field.derivative_in(tb, p[None], n)[0])

# Each row records where it came from: face, derivative order, and index.
print("\nfirst row provenance:", H.provenance[0])
