import zlib

import numpy as np
import pytest

from tpst import TetMesh, generate_box_mesh, load_mesh
from tpst.simharness import SimConfig

from oracles import A1_ELEMS_1BASED, A1_NODES, REF_NODES

BOX_HOLE_BOUNDS = ((0.0, 0.0, 0.0), (3.0, 2.0, 2.0))
BOX_HOLE_CELL = ((1.0, 0.0, 0.0), (2.0, 1.0, 1.0))


def write_table(path, rows):
    """Whitespace table; floats written with repr so they read back exactly."""
    def cell(v):
        return str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v))
    path.write_text("".join(" ".join(cell(v) for v in row) + "\n" for row in rows))
    return path


@pytest.fixture(scope="session")
def a1_mesh():
    return TetMesh(A1_NODES, np.array(A1_ELEMS_1BASED) - 1)


@pytest.fixture(scope="session")
def ref_tet():
    return TetMesh(REF_NODES, [(0, 1, 2, 3)])


@pytest.fixture(scope="session")
def box222():
    return generate_box_mesh(((0, 0, 0), (1, 1, 1)), (2, 2, 2))


@pytest.fixture(scope="session")
def box_hole():
    """3x2x2 grid of unit cells with one cell removed (66 tets)."""
    return generate_box_mesh(BOX_HOLE_BOUNDS, (3, 2, 2), [BOX_HOLE_CELL])


@pytest.fixture(scope="session")
def default_mesh():
    return SimConfig().mesh()


@pytest.fixture
def rng(request):
    # a stable per-test seed so failures reproduce
    return np.random.default_rng(zlib.crc32(request.node.nodeid.encode()))


@pytest.fixture
def a1_files(tmp_path):
    nodes = write_table(tmp_path / "nodes.txt", A1_NODES)
    elems = write_table(tmp_path / "elems.txt", A1_ELEMS_1BASED)
    return nodes, elems


@pytest.fixture
def mesh_files(tmp_path):
    """Write any mesh to 1-based node/element files; returns the two paths."""
    def _write(mesh, stem="mesh"):
        nodes = write_table(tmp_path / f"{stem}_nodes.txt", mesh.nodes)
        elems = write_table(tmp_path / f"{stem}_elems.txt", mesh.tets + 1)
        assert load_mesh(nodes, elems, index_base=1).checksum == mesh.checksum
        return nodes, elems
    return _write


# --- acceptance summary ----------------------------------------------------------------
# Tests carrying ``@pytest.mark.criterion(n, title)`` are tallied per criterion and
# reported as one PASS/FAIL line each at the end of the run, followed by any notes
# the tests logged through the ``acceptance_log`` fixture.

_CRITERIA: dict[int, dict] = {}
_NOTES: list[str] = []


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        n, title = mark.args
        entry = _CRITERIA.setdefault(n, {"title": title, "ok": True})
        if rep.failed:
            entry["ok"] = False
    return rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        tr.write_line(f"criterion {n:>2}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}")
    for note in _NOTES:
        tr.write_line(f"  note: {note}")


@pytest.fixture
def acceptance_log():
    return _NOTES.append
