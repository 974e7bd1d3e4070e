"""Meshes: reading, checking, locating points.

Run from the repository root:  python demos/01_mesh.py
"""

from pathlib import Path

import numpy as np

from tpst import TetMesh, generate_box_mesh, load_mesh, shape_metrics, validate_partition

DATA = Path(__file__).parent / "data"

# A two-tet mesh sharing one face, read from whitespace node/element files with
# 1-based element indices.
mesh = load_mesh(DATA / "a1_nodes.txt", DATA / "a1_elems.txt", index_base=1)
print(mesh)
print("volumes:", mesh.volumes)
print("interior faces (tet, local face, tet, local face):\n", mesh.interior_faces)
print("valid partition:", validate_partition(mesh).valid)
print("checksum:", mesh.checksum[:16], "...")

# Point location returns the containing tet and the barycentric coordinates
# against its vertices (-1 for points outside the domain).
pts = np.array([[0.2, 0.2, 0.2], [-0.3, 0.1, 0.1], [2.0, 2.0, 2.0]])
tets, bary = mesh.locate(pts)
for p, t, b in zip(pts, tets, bary):
    where = f"tet {t}, barycentric {np.round(b, 3)}" if t >= 0 else "outside"
    print(f"  {p} -> {where}")

# Structured meshes: each grid cell is split into six tets, and whole cells can
# be left out to carve holes.
box = generate_box_mesh(((0, 0, 0), (3, 2, 2)), (3, 2, 2), holes=[((1, 0, 0), (2, 1, 1))])
q = shape_metrics(box)
print(f"\nbox with a hole: {box.n_tets} tets, volume {box.volumes.sum():.3f}")
print(f"size {q.size:.3f}, quasi-uniformity constant {q.beta:.3f}")
print("valid partition:", validate_partition(box).valid)

# A hanging vertex breaks conformity, and the validator says where.
nodes = np.vstack([mesh.nodes, [0, 0, 0.5]])
broken = TetMesh(nodes, [(1, 0, 2, 5), (4, 0, 3, 2)])
report = validate_partition(broken)
print("\nhanging-vertex mesh valid:", report.valid)
for line in report.issues:
    print("  ", line)
