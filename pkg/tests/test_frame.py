import numpy as np
import pytest

from charflow.frame import (ContactStructure, SingularFrame, from_frame_components, get_structure,
                            load_structure, numeric_bracket, to_frame_components, validate_structure)


def _points(rng, n=100):
    return rng.uniform(-2, 2, size=(n, 3))


def test_heisenberg_constants(H, rng):
    rep = validate_structure(H, _points(rng))
    assert rep.passed, rep.violations
    assert rep.nonzero_constants == {"c12^3": -1.0}


def test_e2_constants(E2, rng):
    rep = validate_structure(E2, _points(rng))
    assert rep.passed, rep.violations
    assert rep.nonzero_constants == {"c12^3": -1.0, "c23^1": -1.0}


def test_heisenberg_bracket_is_reeb(H, rng):
    q = _points(rng, 20)
    # [X1, X2] = -c12^3 X3 = X3 = d/dz
    assert np.allclose(numeric_bracket(H, 1, 2, q), [0, 0, 1], atol=1e-9)


def test_file_structure_validates(solvable, rng):
    rep = validate_structure(solvable, _points(rng, 30))
    assert rep.passed, rep.violations
    assert rep.nonzero_constants == {"c12^1": -1.0, "c12^3": -1.0}


def test_wrong_constant_is_reported(H, rng):
    bad = ContactStructure("bad", H.X1, H.X2, H.X3, {(1, 2, 3): lambda q: np.ones(q.shape[:-1])}, True)
    rep = validate_structure(bad, _points(rng, 10))
    assert not rep.passed
    assert any("[X1,X2]" in v for v in rep.violations)


def test_missing_reeb_normalization_reported(H, rng):
    bad = ContactStructure("flat", H.X1, H.X2, H.X3, {}, True)
    rep = validate_structure(bad, _points(rng, 10))
    assert any("normalization" in v for v in rep.violations)


def test_frame_components_roundtrip(E2, rng):
    q, v = _points(rng, 50), rng.normal(size=(50, 3))
    a = to_frame_components(E2, q, v)
    assert np.allclose(from_frame_components(E2, q, a), v, atol=1e-13)


def test_singular_frame_detected(H):
    degenerate = ContactStructure("deg", H.X1, H.X1, H.X3, {(1, 2, 3): lambda q: -np.ones(q.shape[:-1])})
    with pytest.raises(SingularFrame):
        validate_structure(degenerate, np.zeros((1, 3)))


def test_get_structure_names():
    assert get_structure("Heisenberg").closed_form == "H1"
    assert get_structure("e2").closed_form == "E2"


@pytest.mark.parametrize("body, message", [
    ("[structure]\nX2 = 0,1,0\nX3 = 0,0,1\n[constants]\nc12_3 = -1\n", "X1"),
    ("[structure]\nX1 = 1,0,0\nX2 = 0,1,0\nX3 = 0,0,1\n", "c12_3"),
    ("[structure]\nX1 = 1,0,0\nX2 = 0,1,0\nX3 = 0,0,1\n[constants]\nc21_3 = 1\n", "i < j"),
    ("[structure]\nX1 = 1,0\nX2 = 0,1,0\nX3 = 0,0,1\n[constants]\nc12_3 = -1\n", "components"),
])
def test_load_structure_errors(tmp_path, body, message):
    path = tmp_path / "s.ini"
    path.write_text(body)
    with pytest.raises(ValueError, match=message):
        load_structure(path)
