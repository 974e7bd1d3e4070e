import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tpst import (DegenerateTetError, MeshError, MeshFormatError, TetMesh, barycentric,
                  generate_box_mesh, load_mesh, shape_metrics, validate_partition, write_mesh)
from tpst.mesh import directional_coords, locate, tet_volume

from oracles import A1_NODES, REF_NODES

REGULAR = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]  # edge 2*sqrt(2)


def random_tet(rng, scale=1.0):
    while True:
        v = rng.normal(size=(4, 3)) * scale
        if abs(np.linalg.det(v[1:] - v[0])) > 0.05 * scale**3:
            return v


class TestLoadMesh:
    def test_example_two_tets_share_one_face(self, a1_files):
        mesh = load_mesh(*a1_files, index_base=1)
        assert mesh.n_tets == 2
        assert mesh.tets.tolist() == [[1, 0, 2, 3], [4, 0, 3, 2]]
        # the shared face is {v1, v3, v4}, i.e. zero-based nodes {0, 2, 3}
        assert mesh.interior_face_nodes.tolist() == [[0, 2, 3]]
        assert len(mesh.boundary_faces) == 6

    def test_single_tet_has_only_boundary_faces(self):
        mesh = load_mesh("0 0 0\n1 0 0\n0 1 0\n0 0 1\n", "1 2 3 4\n")
        assert len(mesh.boundary_faces) == 4
        assert len(mesh.interior_faces) == 0

    def test_out_of_range_node_index(self):
        nodes = "".join(f"{x} {y} {z}\n" for x, y, z in A1_NODES)
        with pytest.raises(MeshError, match="outside 1..5"):
            load_mesh(nodes, "1 2 3 9\n", index_base=1)

    def test_zero_based_and_comments_and_commas(self):
        nodes = "# x, y, z\n0,0,0\n1, 0, 0  # second\n0 1 0\n\n0,0,1\n"
        mesh = load_mesh(nodes, "0 1 2 3\n", index_base=0)
        assert mesh.n_tets == 1
        assert mesh.volumes[0] == pytest.approx(1 / 6)

    @pytest.mark.parametrize("nodes, elems", [
        ("0 0\n", "1 2 3 4\n"),
        ("0 0 zero\n", "1 2 3 4\n"),
        ("0 0 0\n1 0 0\n0 1 0\n0 0 1\n", "1 2 3\n"),
        ("0 0 0\n1 0 0\n0 1 0\n0 0 1\n", "1 2 3 4.5\n"),
    ])
    def test_parse_failures(self, nodes, elems):
        with pytest.raises(MeshFormatError):
            load_mesh(nodes, elems)

    def test_duplicate_tet_rejected(self):
        with pytest.raises(MeshError, match="duplicate"):
            TetMesh(REF_NODES, [(0, 1, 2, 3), (3, 2, 1, 0)])

    def test_repeated_node_rejected(self):
        with pytest.raises(MeshError, match="repeats"):
            TetMesh(REF_NODES, [(0, 1, 1, 3)])

    def test_bad_index_base(self):
        with pytest.raises(ValueError):
            load_mesh("0 0 0\n", "1 1 1 1\n", index_base=2)

    def test_streams_are_accepted(self):
        mesh = load_mesh(io.StringIO("0 0 0\n1 0 0\n0 1 0\n0 0 1\n"), io.StringIO("1 2 3 4\n"))
        assert mesh.n_nodes == 4

    def test_write_then_load_round_trip(self, tmp_path, box_hole):
        write_mesh(box_hole, tmp_path / "n.txt", tmp_path / "e.txt", index_base=0)
        again = load_mesh(tmp_path / "n.txt", tmp_path / "e.txt", index_base=0)
        assert again.checksum == box_hole.checksum

    def test_checksum_depends_on_geometry(self, a1_mesh):
        moved = TetMesh(a1_mesh.nodes + 1e-9, a1_mesh.tets)
        assert moved.checksum != a1_mesh.checksum
        assert TetMesh(a1_mesh.nodes, a1_mesh.tets).checksum == a1_mesh.checksum


class TestValidatePartition:
    def test_example_is_valid(self, a1_mesh):
        report = validate_partition(a1_mesh)
        assert report.valid
        assert report.to_dict()["valid"] is True

    def test_hanging_vertex_configuration_is_invalid(self):
        # v6 splits the edge v1-v4, so the face {v1, v3, v6} covers only part of
        # the neighbour's face {v1, v3, v4}
        nodes = A1_NODES + [(0, 0, 0.5)]
        mesh = TetMesh(nodes, [(1, 0, 2, 5), (4, 0, 3, 2)])
        report = validate_partition(mesh)
        assert not report.valid
        assert report.improper and report.improper[0][:2] == (0, 1)

    def test_overlapping_tets_are_invalid(self):
        nodes = REF_NODES + [(0.2, 0.2, 0.2), (1, 1, 1)]
        mesh = TetMesh(nodes, [(0, 1, 2, 3), (4, 1, 2, 5)])
        assert not validate_partition(mesh).valid

    def test_empty_mesh_is_valid(self):
        report = validate_partition(TetMesh(np.zeros((0, 3)), np.zeros((0, 4), dtype=int)))
        assert report.valid and report.n_tets == 0

    def test_degenerate_tet_reported(self):
        mesh = TetMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)], [(0, 1, 2, 3)])
        assert validate_partition(mesh).degenerate == [0]

    def test_face_shared_by_three_tets(self):
        nodes = REF_NODES + [(0.3, 0.3, -1), (0.3, 0.3, 2)]
        mesh = TetMesh(nodes, [(0, 1, 2, 3), (0, 1, 2, 4), (0, 1, 2, 5)])
        assert validate_partition(mesh).overshared_faces


class TestVolumeAndBarycentric:
    @pytest.mark.parametrize("attr", ["nodes", "tets", "vertices", "volumes", "bary_maps",
                                      "faces", "interior_faces", "boundary_faces"])
    def test_cached_arrays_are_read_only(self, a1_mesh, attr):
        # an in-place edit of a view (say, normalising a bary_maps row) would
        # otherwise silently corrupt every later evaluation on the mesh
        arr = getattr(a1_mesh, attr)
        with pytest.raises(ValueError):
            arr.flat[0] = arr.flat[0]

    def test_reference_volume(self, ref_tet):
        assert tet_volume(ref_tet, 0) == pytest.approx(1 / 6, rel=1e-15)

    def test_scaling_by_two_multiplies_volume_by_eight(self, ref_tet):
        big = TetMesh(ref_tet.nodes * 2, ref_tet.tets)
        assert tet_volume(big, 0) == pytest.approx(8 * tet_volume(ref_tet, 0), rel=1e-14)

    def test_coplanar_points_are_degenerate(self):
        mesh = TetMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)], [(0, 1, 2, 3)])
        with pytest.raises(DegenerateTetError):
            tet_volume(mesh, 0)
        with pytest.raises(DegenerateTetError):
            barycentric(mesh, 0, (0, 0, 0))

    @pytest.mark.parametrize("i", range(4))
    def test_vertex_gives_unit_vector(self, a1_mesh, i):
        b = barycentric(a1_mesh, 1, a1_mesh.vertices[1, i])
        np.testing.assert_allclose(b, np.eye(4)[i], atol=1e-15)

    def test_centroid(self, a1_mesh):
        b = barycentric(a1_mesh, 0, a1_mesh.vertices[0].mean(0))
        np.testing.assert_allclose(b, 0.25, atol=1e-15)

    def test_opposite_vertex_of_example(self, a1_mesh):
        # solve  sum b_i v_i = v5, sum b_i = 1  for T = <v2, v1, v3, v4> independently
        T = np.array(A1_NODES)[[1, 0, 2, 3]]
        M = np.vstack([np.ones(4), T.T])
        expected = np.linalg.solve(M, np.r_[1.0, A1_NODES[4]])
        np.testing.assert_allclose(expected, [-1, 2, 0, 0], atol=1e-15)
        np.testing.assert_allclose(barycentric(a1_mesh, 0, A1_NODES[4]), expected, atol=1e-14)

    def test_directional_coordinates_sum_to_zero(self, a1_mesh):
        a = directional_coords(a1_mesh, 0, (0.3, -1.2, 2.0))
        assert abs(a.sum()) < 1e-14
        # x axis on T = <v2, v1, v3, v4>: v2 - v1 is the unit x vector
        np.testing.assert_allclose(directional_coords(a1_mesh, 0, (1, 0, 0)), [1, -1, 0, 0],
                                   atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
    def test_reconstruction_property(self, seed, scale):
        rng = np.random.default_rng(seed)
        v = random_tet(rng, scale)
        mesh = TetMesh(v, [(0, 1, 2, 3)])
        b = rng.dirichlet(np.ones(4), size=200)
        p = b @ v
        got = np.einsum("ij,kj->ki", mesh.bary_maps[0], np.c_[np.ones(200), p])
        diam = max(np.linalg.norm(v[i] - v[j]) for i in range(4) for j in range(4))
        assert np.abs(got.sum(1) - 1).max() < 1e-12
        assert np.abs(got @ v - p).max() < 1e-10 * diam
        np.testing.assert_allclose(got, b, atol=1e-9)


class TestLocate:
    def test_centroid_of_tet_zero(self, a1_mesh):
        tet, b = locate(a1_mesh, a1_mesh.vertices[0].mean(0))
        assert tet == 0
        np.testing.assert_allclose(b, 0.25, atol=1e-15)

    def test_shared_face_goes_to_lowest_tet(self, a1_mesh):
        p = np.array([0.0, 0.2, 0.3])  # inside the face x = 0
        assert locate(a1_mesh, p)[0] == 0

    def test_outside_is_none(self, a1_mesh):
        assert locate(a1_mesh, (10, 10, 10)) is None

    def test_vectorised_matches_brute_force(self, box_hole, rng):
        pts = rng.uniform(-0.2, 3.2, size=(2000, 3)) * [1, 2 / 3, 2 / 3]
        tet, bary = box_hole.locate(pts)
        hom = np.c_[np.ones(len(pts)), pts]
        allb = np.einsum("tij,kj->kti", box_hole.bary_maps, hom)
        inside = np.all(allb >= -1e-9, axis=2)
        expected = np.where(inside.any(1), inside.argmax(1), -1)
        np.testing.assert_array_equal(tet, expected)
        ok = tet >= 0
        np.testing.assert_allclose(bary[ok], allb[ok, tet[ok]], atol=1e-12)
        assert np.isnan(bary[~ok]).all()

    def test_points_in_hole_are_outside(self, box_hole):
        assert locate(box_hole, (1.5, 0.5, 0.5)) is None
        assert locate(box_hole, (0.5, 0.5, 0.5)) is not None


class TestShapeMetrics:
    def test_regular_tet(self):
        q = shape_metrics(TetMesh(REGULAR, [(0, 1, 2, 3)]))
        assert q.shape[0] == pytest.approx(2 * math.sqrt(6), rel=1e-13)
        assert q.beta == pytest.approx(2 * math.sqrt(6), rel=1e-13)

    def test_reference_tet(self, ref_tet):
        q = shape_metrics(ref_tet)
        area = 3 * 0.5 + math.sqrt(3) / 2  # three right triangles plus the slanted face
        rho = 3 * (1 / 6) / area
        assert q.inradius[0] == pytest.approx(rho, rel=1e-14)
        assert q.longest_edge[0] == pytest.approx(math.sqrt(2), rel=1e-15)
        assert q.shape[0] == pytest.approx(math.sqrt(2) / rho, rel=1e-14)

    def test_flattening_increases_shape_parameter(self):
        betas = [shape_metrics(TetMesh(REF_NODES[:3] + [(0.2, 0.2, h)], [(0, 1, 2, 3)])).shape[0]
                 for h in (1.0, 0.5, 0.1, 0.01)]
        assert all(b2 > b1 for b1, b2 in zip(betas, betas[1:]))

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateTetError):
            shape_metrics(TetMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)], [(0, 1, 2, 3)]))

    def test_report_dict(self, box222):
        d = shape_metrics(box222).to_dict()
        assert d["n_tets"] == 48
        assert d["volume_total"] == pytest.approx(1.0, rel=1e-14)


class TestGenerateBoxMesh:
    def test_single_cell(self):
        mesh = generate_box_mesh(((0, 0, 0), (1, 1, 1)), (1, 1, 1))
        assert mesh.n_tets == 6
        assert mesh.volumes.sum() == pytest.approx(1.0, rel=1e-14)

    def test_one_cell_removed(self):
        mesh = generate_box_mesh(((0, 0, 0), (1, 1, 1)), (2, 2, 2),
                                 [((0.5, 0.5, 0.5), (1, 1, 1))])
        assert mesh.n_tets == 7 * 6

    def test_everything_removed(self):
        with pytest.raises(MeshError, match="empty"):
            generate_box_mesh(((0, 0, 0), (1, 1, 1)), (1, 1, 1), [((0, 0, 0), (1, 1, 1))])

    def test_misaligned_hole(self):
        with pytest.raises(MeshError, match="aligned"):
            generate_box_mesh(((0, 0, 0), (1, 1, 1)), (2, 2, 2), [((0.25, 0, 0), (1, 1, 1))])

    @pytest.mark.parametrize("resolution", [(0, 1, 1), (1, 2)])
    def test_bad_resolution(self, resolution):
        with pytest.raises(ValueError):
            generate_box_mesh(((0, 0, 0), (1, 1, 1)), resolution)

    def test_default_simulation_domain(self, default_mesh):
        # 6x3x3 cells minus the 2x1x1 block of the hole
        assert default_mesh.n_tets == 6 * (54 - 2)
        assert default_mesh.volumes.sum() == pytest.approx(3 - 1 / 9, rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(res=st.tuples(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3)),
           hole=st.tuples(st.integers(0, 3), st.integers(0, 2), st.integers(0, 2)),
           lengths=st.tuples(st.floats(0.5, 3), st.floats(0.5, 3), st.floats(0.5, 3)))
    def test_generated_meshes_are_valid_partitions(self, res, hole, lengths):
        lo = np.zeros(3)
        hi = np.asarray(lengths)
        h = hi / res
        cell = np.minimum(hole, np.asarray(res) - 1)
        holes = [(lo + cell * h, lo + (cell + 1) * h)] if np.prod(res) > 1 else []
        mesh = generate_box_mesh((lo, hi), res, holes)
        kept = np.prod(res) - len(holes)
        assert mesh.n_tets == 6 * kept
        assert mesh.volumes.sum() == pytest.approx(np.prod(h) * kept, rel=1e-12)
        assert validate_partition(mesh).valid
        assert shape_metrics(mesh).shape.min() >= 2 * math.sqrt(6) - 1e-9
