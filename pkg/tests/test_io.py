import numpy as np
import pytest

from doublephase.io import read_csv, read_json, read_vtk, to_jsonable, write_csv, write_json, write_vtk
from doublephase.mesh import build_unit_square_mesh


class TestVtk:
    def test_round_trip_exact(self, tmp_path, rng):
        mesh = build_unit_square_mesh(5)
        a, b = rng.standard_normal((2, mesh.n_vertices))
        write_vtk(tmp_path / "f.vtk", mesh, {"a": a, "b": b}, "two\nfields")
        pts, tris, fields = read_vtk(tmp_path / "f.vtk")
        assert np.array_equal(pts, mesh.vertices)
        assert np.array_equal(tris, mesh.triangles)
        assert np.array_equal(fields["a"], a) and np.array_equal(fields["b"], b)

    def test_header(self, tmp_path):
        mesh = build_unit_square_mesh(2)
        write_vtk(tmp_path / "f.vtk", mesh, {})
        lines = (tmp_path / "f.vtk").read_text().splitlines()
        assert lines[0].startswith("# vtk DataFile") and lines[2] == "ASCII"
        assert f"CELL_TYPES {mesh.n_triangles}" in lines

    def test_shape_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="shape"):
            write_vtk(tmp_path / "f.vtk", build_unit_square_mesh(2), {"x": np.zeros(3)})


class TestTables:
    def test_csv_round_trip(self, tmp_path):
        write_csv(tmp_path / "t.csv", ["k", "v"], [[1, 0.1], [2, np.float64(1 / 3)]])
        header, rows = read_csv(tmp_path / "t.csv")
        assert header == ["k", "v"]
        assert float(rows[1][1]) == 1 / 3

    def test_json(self, tmp_path):
        obj = {"a": np.arange(3), "b": np.float64(np.inf), "c": (np.bool_(True), np.int64(4))}
        write_json(tmp_path / "x.json", obj)
        assert read_json(tmp_path / "x.json") == {"a": [0, 1, 2], "b": "inf", "c": [True, 4]}

    def test_jsonable_nested(self):
        assert to_jsonable({1: [np.float32(0.5)]}) == {"1": [0.5]}
