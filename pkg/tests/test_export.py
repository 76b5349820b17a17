import csv
import json

import numpy as np

from charflow import export
from charflow.lift import integrate_characteristic, transport_xi
from conftest import preset_mesh


def test_trajectory_csv_roundtrip(tmp_path, H):
    traj = integrate_characteristic(H, [0.1, 0.2, 0.3, 0.4], (0, 0.05), 1e-2)
    xi = transport_xi(H, traj, [1, 0, 0, 0])
    path = export.write_trajectory_csv(tmp_path / "t.csv", traj, xi)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "x", "y", "z", "phi", "xi1", "xi2", "xi3", "xi4"]
    back = np.array(rows[1:], dtype=float)
    assert np.array_equal(back[:, 1:5], traj.states)  # %.17g is exact
    assert np.array_equal(back[:, 5:], xi)


def test_mesh_obj_and_csv(tmp_path):
    mesh = preset_mesh("helicoid-ccw", 5, 4)
    obj = export.write_mesh_obj(tmp_path / "m.obj", mesh).read_text().splitlines()
    verts = [l for l in obj if l.startswith("v ")]
    faces = [l for l in obj if l.startswith("f ")]
    assert len(verts) == 20 and len(faces) == 2 * 4 * 3
    idx = np.array([f.split()[1:] for f in faces], dtype=int)
    assert idx.min() == 1 and idx.max() == 20
    rows = list(csv.reader((export.write_mesh_csv(tmp_path / "m.csv", mesh)).open()))
    assert rows[0] == ["t", "s", "x", "y", "z", "phi", "xi3_t"] and len(rows) == 21


def test_json_is_clean_and_sorted(tmp_path):
    path = export.write_json(tmp_path / "r.json", {"b": np.float64(np.inf), "a": np.arange(3), "c": np.bool_(True)})
    text = path.read_text()
    assert json.loads(text) == {"a": [0, 1, 2], "b": "inf", "c": True}
    assert text.index('"a"') < text.index('"b"')
