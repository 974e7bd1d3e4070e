import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from tpst import TetMesh, assemble_H, bform_of_polynomial, face_correspondence, layout
from tpst.smoothness import continuity_rows, rows_per_face, write_matrix_market
from tpst.solver import nullspace_basis
from tpst.bernstein import SplineField

from oracles import interior_face_samples, random_poly, same_rows_up_to_sign
from reference_values import H_TWO_TET_D2_R0, H_TWO_TET_D2_R1_PRINTED


def polynomial_coeffs(mesh, d, rng, count):
    return [bform_of_polynomial(mesh, d, random_poly(rng, d)).flat for _ in range(count)]


class TestFaceCorrespondence:
    def test_example(self, a1_mesh):
        fc = face_correspondence(a1_mesh, 0)
        assert (fc.tet, fc.tet_tilde) == (0, 1)
        nodes = a1_mesh.tets
        # <v2 | v1, v3, v4> and <v5 | v1, v4, v3>, zero-based node ids
        assert [nodes[0][s] for s in fc.order] == [1, 0, 2, 3]
        assert [nodes[1][s] for s in fc.order_tilde] == [4, 0, 3, 2]
        np.testing.assert_allclose(fc.bary_of_tilde_opposite, [-1, 2, 0, 0], atol=1e-15)
        assert fc.bary_of_opposite.sum() == pytest.approx(1.0)

    def test_mirrored_copy_has_same_correspondence(self, a1_mesh):
        mirrored = TetMesh(a1_mesh.nodes[:, [0, 2, 1]], a1_mesh.tets)
        a, b = face_correspondence(a1_mesh, 0), face_correspondence(mirrored, 0)
        assert (a.order, a.order_tilde, a.shared_nodes) == (b.order, b.order_tilde, b.shared_nodes)

    def test_boundary_face_rejected(self, ref_tet):
        with pytest.raises(ValueError, match="interior"):
            face_correspondence(ref_tet, 0)

    def test_shared_orders_name_same_nodes(self, box_hole):
        for f in range(0, len(box_hole.interior_faces), 7):
            fc = face_correspondence(box_hole, f)
            a = [box_hole.tets[fc.tet][s] for s in fc.order[1:]]
            b = [box_hole.tets[fc.tet_tilde][s] for s in fc.order_tilde[1:]]
            assert a == [b[0], b[2], b[1]] == list(fc.shared_nodes)


class TestContinuityRows:
    def test_c0_rows_match_printed_matrix(self, a1_mesh):
        H = assemble_H(a1_mesh, 2, 0).H.toarray()
        assert same_rows_up_to_sign(H, H_TWO_TET_D2_R0)

    def test_c0_rows_pair_transposed_indices(self, a1_mesh):
        # gamma_{0jkl} on T equals gamma~_{0jlk} on T~ with both tets in canonical order
        lay = layout(3)
        for cols, vals, (_, m, (j, k, l)) in continuity_rows(lay, 0, face_correspondence(a1_mesh, 0)):
            assert m == 0 and sorted(vals) == [-1.0, 1.0]
            tilde = lay.indices[cols[0] - lay.dim]
            base = lay.indices[cols[1]]
            # T = tets[0] is already <v2|v1,v3,v4>; T~ = tets[1] is already <v5|v1,v4,v3>
            assert tuple(base) == (0, j, k, l)
            assert tuple(tilde) == (0, j, l, k)

    def test_c1_rows_count_and_annihilation(self, a1_mesh, rng):
        H = assemble_H(a1_mesh, 2, 1)
        assert H.shape == (9, 20)
        assert same_rows_up_to_sign(H.H.toarray()[:6], H_TWO_TET_D2_R0)
        for g in polynomial_coeffs(a1_mesh, 2, rng, 10):
            assert np.abs(H.H @ g).max() <= 1e-12 * np.abs(g).max()

    def test_printed_c1_rows_are_inconsistent_with_the_geometry(self, a1_mesh):
        # the printed rows use (2, -1, 0, 0) for the opposite vertex; even the
        # global linear function x violates them, which is why they are not used
        g = bform_of_polynomial(a1_mesh, 2, {(1, 0, 0): 1.0}).flat
        np.testing.assert_allclose(np.asarray(H_TWO_TET_D2_R1_PRINTED) @ g, 1.5)

    def test_smoothness_must_be_below_degree(self, a1_mesh):
        with pytest.raises(ValueError):
            assemble_H(a1_mesh, 2, 2)


class TestAssembleH:
    def test_single_tet_has_no_rows(self, ref_tet):
        assert assemble_H(ref_tet, 3, 1).shape == (0, 20)

    @pytest.mark.parametrize("d, r", [(2, 0), (2, 1), (3, 0), (3, 1), (3, 2), (4, 1)])
    def test_row_count(self, box_hole, d, r):
        H = assemble_H(box_hole, d, r)
        per_face = sum(math.comb(d - m + 2, 2) for m in range(r + 1))
        assert per_face == rows_per_face(d, r)
        assert H.shape == (len(box_hole.interior_faces) * per_face, box_hole.n_tets * math.comb(d + 3, 3))
        assert len(H.provenance) == H.shape[0]

    def test_each_row_touches_two_blocks(self, box222):
        H = assemble_H(box222, 3, 1).H.tocsr()
        for i in range(0, H.shape[0], 11):
            blocks = set(H.indices[H.indptr[i]:H.indptr[i + 1]] // 20)
            assert len(blocks) == 2

    def test_cubic_c1_annihilates_random_cubics(self, box222, rng):
        H = assemble_H(box222, 3, 1).H
        for g in polynomial_coeffs(box222, 3, rng, 20):
            assert np.abs(H @ g).max() < 1e-10 * np.abs(g).max()

    def test_tet_relabeling_keeps_the_kernel(self, box_hole, rng):
        perm = rng.permutation(box_hole.n_tets)
        shuffled = TetMesh(box_hole.nodes, box_hole.tets[perm])
        H = assemble_H(box_hole, 3, 1).H.toarray()
        H2 = assemble_H(shuffled, 3, 1).H.toarray()
        # column block t of the shuffled mesh is block perm[t] of the original
        cols = (perm[:, None] * 20 + np.arange(20)).ravel()
        back = np.zeros_like(H2)
        back[:, cols] = H2
        rank = np.linalg.matrix_rank
        assert rank(H) == rank(back) == rank(np.vstack([H, back]))

    def test_matrix_market_dump(self, a1_mesh, tmp_path):
        H = assemble_H(a1_mesh, 2, 1)
        write_matrix_market(H, tmp_path / "H.mtx")
        back = sp.csr_matrix(scipy.io.mmread(tmp_path / "H.mtx"))
        assert abs(back - H.H).max() == 0


class TestSufficiency:
    @pytest.mark.parametrize("r", [0, 1])
    def test_null_space_fields_are_continuous(self, box_hole, rng, r):
        d = 3
        Q2 = nullspace_basis(assemble_H(box_hole, d, r))
        g = Q2 @ rng.normal(size=Q2.shape[1])
        field = SplineField(box_hole, layout(d), g)
        pts, ta, tb, normals = interior_face_samples(box_hole, rng, 50)
        va = np.array([field.eval_in(t, p)[0] for t, p in zip(ta, pts)])
        vb = np.array([field.eval_in(t, p)[0] for t, p in zip(tb, pts)])
        scale = np.abs(g).max()
        assert np.abs(va - vb).max() < 1e-10 * scale
        if r == 1:
            da = np.array([field.derivative_in(t, p, n)[0] for t, p, n in zip(ta, pts, normals)])
            db = np.array([field.derivative_in(t, p, n)[0] for t, p, n in zip(tb, pts, normals)])
            assert np.abs(da - db).max() < 1e-8 * scale
            # cross-check the piece derivatives with central differences
            h = 1e-5
            fd = np.array([(field.eval_in(t, p + h * n) - field.eval_in(t, p - h * n))[0] / (2 * h)
                           for t, p, n in zip(ta, pts, normals)])
            np.testing.assert_allclose(da, fd, rtol=1e-6, atol=1e-6 * scale)

    def test_discontinuous_field_is_detected(self, a1_mesh, rng):
        H = assemble_H(a1_mesh, 2, 0).H
        g = rng.normal(size=20)
        assert np.abs(H @ g).max() > 1e-3
