"""Smoothness conditions across interior faces, assembled into a sparse matrix H.

For two tets T and T~ sharing a face, a spline is C^r across that face iff for
every m <= r and every distribution (i, j, k) of d - m over the shared vertices

    coef_T~[m at the opposite vertex of T~, (i, j, k) on the face]
        = sum_{|beta| = m} coef_T[beta + (i, j, k)] * B^m_beta(w),

where ``w`` are the barycentric coordinates of T~'s opposite vertex relative
to T. Each such identity becomes one row of H (with H @ coeffs == 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .bernstein import BasisLayout, eval_basis, layout
from .mesh import TetMesh

__all__ = [
    "FaceCorrespondence",
    "ConstraintMatrix",
    "face_correspondence",
    "continuity_rows",
    "assemble_H",
    "rows_per_face",
    "write_matrix_market",
]


@dataclass(frozen=True)
class FaceCorrespondence:
    """How the two tets of an interior face see it.

    ``order`` and ``order_tilde`` list local vertex slots as (opposite, a, b, c)
    and (opposite~, a, c, b): the shared vertices a, b, c follow the first tet's
    local order, and the second side swaps the last two.
    """

    face: int
    tet: int
    tet_tilde: int
    order: tuple[int, int, int, int]
    order_tilde: tuple[int, int, int, int]
    shared_nodes: tuple[int, int, int]
    bary_of_tilde_opposite: np.ndarray  # opposite vertex of tet_tilde, relative to tet
    bary_of_opposite: np.ndarray        # opposite vertex of tet, relative to tet_tilde


@dataclass
class ConstraintMatrix:
    """Sparse H plus, per row, the (face, order m, face multi-index) that produced it."""

    H: sp.csr_matrix
    provenance: list[tuple[int, int, tuple[int, int, int]]]
    degree: int
    smoothness: int

    @property
    def shape(self):
        return self.H.shape


def rows_per_face(d: int, r: int) -> int:
    return sum(math.comb(d - m + 2, 2) for m in range(r + 1))


def face_correspondence(mesh: TetMesh, face: int) -> FaceCorrespondence:
    """Correspondence for the ``face``-th interior face (index into ``mesh.interior_faces``)."""
    if not 0 <= face < len(mesh.interior_faces):
        raise ValueError(f"face {face} is not an interior face "
                         f"(mesh has {len(mesh.interior_faces)})")
    ta, sa, tb, sb = (int(x) for x in mesh.interior_faces[face])
    mesh.check_tet(ta)
    mesh.check_tet(tb)
    nodes_a = mesh.tets[ta].tolist()
    nodes_b = mesh.tets[tb].tolist()
    shared = [n for s, n in enumerate(nodes_a) if s != sa]
    order = (sa, *(nodes_a.index(n) for n in shared))
    va, vb, vc = shared
    order_t = (sb, nodes_b.index(va), nodes_b.index(vc), nodes_b.index(vb))
    opp_a = mesh.nodes[nodes_a[sa]]
    opp_b = mesh.nodes[nodes_b[sb]]
    w_b = mesh.bary_maps[ta] @ np.r_[1.0, opp_b]
    w_a = mesh.bary_maps[tb] @ np.r_[1.0, opp_a]
    return FaceCorrespondence(face, ta, tb, order, order_t, (va, vb, vc), w_b, w_a)


def _face_triples(n):
    return [(i, j, n - i - j) for i in range(n, -1, -1) for j in range(n - i, -1, -1)]


def continuity_rows(lay: BasisLayout | int, r: int, fc: FaceCorrespondence):
    """Rows of H for one face, as ``(cols, vals, provenance)`` lists.

    Column indices are local: ``0..dim-1`` address the block of ``fc.tet``,
    ``dim..2*dim-1`` the block of ``fc.tet_tilde``.
    """
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    d = lay.degree
    if not 0 <= r < d:
        raise ValueError(f"smoothness r={r} must satisfy 0 <= r < d={d}")
    look, dim = lay.lookup, lay.dim
    opp, *sh = fc.order
    opp_t, *sh_t = fc.order_tilde
    # shared node -> local slot on each side
    slot_a = dict(zip(fc.shared_nodes, sh))
    slot_b = dict(zip((fc.shared_nodes[0], fc.shared_nodes[2], fc.shared_nodes[1]), sh_t))
    rows = []
    for m in range(r + 1):
        sub = layout(m)
        weights = eval_basis(sub, fc.bary_of_tilde_opposite)
        for trip in _face_triples(d - m):
            tilde = [0, 0, 0, 0]
            tilde[opp_t] = m
            base = [0, 0, 0, 0]
            for node, e in zip(fc.shared_nodes, trip):
                tilde[slot_b[node]] = e
                base[slot_a[node]] = e
            cols = [dim + look[tuple(tilde)]]
            vals = [1.0]
            for beta, w in zip(sub.indices, weights):
                if w == 0.0:
                    continue
                cols.append(look[tuple(int(x) for x in np.add(base, beta))])
                vals.append(-float(w))
            rows.append((cols, vals, (fc.face, m, trip)))
    return rows


def assemble_H(mesh: TetMesh, lay: BasisLayout | int, r: int) -> ConstraintMatrix:
    """Stack the continuity rows of every interior face into one sparse matrix."""
    lay = layout(lay) if isinstance(lay, (int, np.integer)) else lay
    d, dim = lay.degree, lay.dim
    if not 0 <= r < d:
        raise ValueError(f"smoothness r={r} must satisfy 0 <= r < d={d}")
    ii, jj, vv, prov = [], [], [], []
    row = 0
    for f in range(len(mesh.interior_faces)):
        fc = face_correspondence(mesh, f)
        for cols, vals, p in continuity_rows(lay, r, fc):
            for c, v in zip(cols, vals):
                jj.append(fc.tet * dim + c if c < dim else fc.tet_tilde * dim + c - dim)
                ii.append(row)
                vv.append(v)
            prov.append(p)
            row += 1
    H = sp.csr_matrix((vv, (ii, jj)), shape=(row, mesh.n_tets * dim))
    H.sum_duplicates()
    return ConstraintMatrix(H, prov, d, r)


def write_matrix_market(cm: ConstraintMatrix, path) -> None:
    """Dump H as Matrix Market coordinate text."""
    from scipy.io import mmwrite

    mmwrite(str(path), cm.H.tocoo(), comment=f"H degree={cm.degree} smoothness={cm.smoothness}")
