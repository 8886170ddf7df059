"""Shared fixtures and the acceptance-summary reporter.

The reporter prints one PASS/FAIL line per acceptance criterion at the
end of the run, derived from the outcomes of tests in
test_acceptance.py (named test_c<NN>_...).
"""

import re
import sys

import numpy as np
import pytest

sys.path.insert(0, str(__import__("pathlib").Path(__file__).parent))

import helpers
from pcup.mesh import TriangleMesh

_ACCEPTANCE = re.compile(r"test_acceptance\.py.*::test_(c\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    match = _ACCEPTANCE.search(report.nodeid)
    if not match:
        return
    key = (match.group(1).upper(), match.group(2))
    if report.when == "call":
        _results[key] = report.outcome
    elif report.when == "setup" and report.outcome != "passed":
        _results[key] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (cid, label), outcome in sorted(_results.items()):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{cid} {label}: {verdict}")


@pytest.fixture(scope="session")
def tetra_mesh():
    verts, faces = helpers.tetrahedron()
    return TriangleMesh(verts, faces)


@pytest.fixture(scope="session")
def icosphere_mesh():
    verts, faces = helpers.icosphere(2)
    return TriangleMesh(verts, faces)


@pytest.fixture(scope="session")
def two_triangle_mesh():
    verts, faces = helpers.two_triangles()
    return TriangleMesh(verts, faces)


@pytest.fixture(scope="session")
def planar_mesh():
    verts, faces = helpers.planar_grid()
    return TriangleMesh(verts, faces)


@pytest.fixture(scope="session")
def bent_sheet_mesh():
    verts, faces = helpers.bent_sheet()
    return TriangleMesh(verts, faces)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def mesh_dir(tmp_path_factory):
    """Directory holding one OFF and one PLY fixture mesh."""
    d = tmp_path_factory.mktemp("meshes")
    tv, tf = helpers.tetrahedron()
    (d / "tetra.off").write_text(helpers.off_text(tv, tf))
    iv, if_ = helpers.icosphere(2)
    (d / "icosphere.ply").write_text(helpers.ply_text(iv, if_))
    return d
