import json

import numpy as np
import pytest

from tpst import SplineField, TetMesh, layout
from tpst.fitio import (FORMAT, coef_path_for, coefficients_csv, file_sha256, load_field,
                        load_header, save_field)


@pytest.fixture
def saved(box222, rng, tmp_path):
    field = SplineField(box222, layout(3), rng.normal(size=(48, 20)) * 10.0 ** rng.integers(-8, 8, (48, 20)))
    path = tmp_path / "fit.json"
    save_field(field, path, 1, {"note": "hello", "weights": np.arange(3.0), "bad": float("nan")})
    return field, path


class TestRoundTrip:
    def test_coefficients_are_bit_exact(self, saved, box222):
        field, path = saved
        back, header = load_field(path, box222)
        np.testing.assert_array_equal(back.coeffs, field.coeffs)
        assert back.degree == 3

    def test_header_contents(self, saved):
        _, path = saved
        h = load_header(path)
        assert h["format"] == FORMAT
        assert (h["degree"], h["smoothness"], h["n_tets"], h["block_size"]) == (3, 1, 48, 20)
        assert h["coefficients"] == "fit.coef.csv"
        assert h["note"] == "hello" and h["weights"] == [0.0, 1.0, 2.0] and h["bad"] is None

    def test_sibling_layout(self, saved):
        _, path = saved
        cpath = coef_path_for(path)
        rows = cpath.read_text().splitlines()
        assert rows[0].split(",")[:3] == ["tet", "c0", "c1"]
        assert len(rows) == 49 and rows[48].startswith("47,")

    def test_coefficients_csv_is_deterministic(self):
        a = np.array([[0.1, 1 / 3]])
        assert coefficients_csv(a) == "tet,c0,c1\n0,0.1,0.3333333333333333\n"

    def test_file_sha256(self, tmp_path):
        p = tmp_path / "x"
        p.write_bytes(b"abc")
        assert file_sha256(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


class TestRejection:
    def test_other_mesh(self, saved, box_hole):
        _, path = saved
        with pytest.raises(ValueError, match="checksum"):
            load_field(path, box_hole)

    def test_moved_node_changes_checksum(self, saved, box222):
        _, path = saved
        nodes = box222.nodes.copy()
        nodes[0, 0] += 1e-9
        with pytest.raises(ValueError, match="checksum"):
            load_field(path, TetMesh(nodes, box222.tets))

    def test_check_can_be_skipped(self, saved, box222):
        field, path = saved
        nodes = box222.nodes.copy()
        nodes[0, 0] += 1e-9
        back, _ = load_field(path, TetMesh(nodes, box222.tets), check_mesh=False)
        np.testing.assert_array_equal(back.coeffs, field.coeffs)

    def test_tampered_coefficients(self, saved, box222):
        _, path = saved
        cpath = coef_path_for(path)
        cpath.write_text(cpath.read_text().replace("\n0,", "\n0,1", 1))
        with pytest.raises(ValueError, match="coefficient file checksum"):
            load_field(path, box222)

    def test_truncated_coefficients_with_matching_hash(self, saved, box222):
        import hashlib
        _, path = saved
        cpath = coef_path_for(path)
        text = "\n".join(cpath.read_text().splitlines()[:10]) + "\n"
        cpath.write_text(text)
        h = json.loads(path.read_text())
        h["coefficients_sha256"] = hashlib.sha256(text.encode()).hexdigest()
        path.write_text(json.dumps(h))
        with pytest.raises(ValueError, match="expected 48 rows"):
            load_field(path, box222)

    @pytest.mark.parametrize("content, match", [("{not json", "valid JSON"),
                                                ('{"format": "other/2"}', "unsupported")])
    def test_bad_header(self, tmp_path, content, match):
        p = tmp_path / "f.json"
        p.write_text(content)
        with pytest.raises(ValueError, match=match):
            load_header(p)

    def test_missing_coefficient_file(self, saved, box222):
        _, path = saved
        coef_path_for(path).unlink()
        with pytest.raises(OSError):
            load_field(path, box222)
