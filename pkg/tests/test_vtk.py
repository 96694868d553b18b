import numpy as np

from elastic_afem.mesh import Mesh
from elastic_afem.vtk import read_vtk_cells, write_vtk

from conftest import refined


def test_round_trip_2d(tmp_path):
    m = refined("lshape2d", 2)
    path = tmp_path / "m.vtk"
    write_vtk(path, m, {"eta": np.arange(m.num_cells, dtype=float), "u": np.ones((m.num_cells, 2))}, {"theta": np.zeros((m.num_vertices, 2))})
    pts, cells = read_vtk_cells(path)
    assert np.array_equal(pts[:, :2], m.vertices) and np.all(pts[:, 2] == 0)
    assert np.array_equal(cells, m.oriented_cells)
    text = path.read_text()
    assert f"CELL_DATA {m.num_cells}" in text and "SCALARS eta double 1" in text
    assert "VECTORS u double" in text and f"POINT_DATA {m.num_vertices}" in text
    assert f"CELL_TYPES {m.num_cells}\n5\n" in text


def test_tets_positively_oriented(tmp_path):
    m = refined("lshape3d", 1)
    path = tmp_path / "m.vtk"
    write_vtk(path, m)
    pts, cells = read_vtk_cells(path)
    assert np.all(Mesh(pts, cells).signed_volumes > 0)
    assert "\n10\n" in path.read_text()
