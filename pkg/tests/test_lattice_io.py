"""Lattice file parsing, validation, and round-trips."""

import numpy as np
import pytest
import yaml

from sympenv.dynamics import monodromy
from sympenv.errors import LatticeFormatError
from sympenv.lattice import (
    lattice_from_dict,
    load_lattice,
    load_matrix,
    save_lattice,
    save_matrix,
)


def sho_dict(period=2 * np.pi):
    return {
        "name": "sho",
        "n": 1,
        "period": float(period),
        "elements": [{
            "kind": "constant",
            "duration": float(period),
            "kappa": [[1.0]],
            "r": [[0.0]],
            "mass_inv": [[1.0]],
        }],
    }


def fodo_dict():
    return {
        "name": "fodo",
        "n": 1,
        "period": 2.0,
        "elements": [
            {"kind": "constant", "duration": 0.3, "kappa": [[4.0]]},
            {"kind": "constant", "duration": 0.7, "kappa": [[0.0]]},
            {"kind": "constant", "duration": 0.3, "kappa": [[-4.0]]},
            {"kind": "constant", "duration": 0.7, "kappa": [[0.0]]},
        ],
    }


def mathieu_dict(a=0.2, q=0.1):
    return {
        "name": "mathieu",
        "n": 1,
        "period": float(np.pi),
        "elements": [{
            "kind": "harmonic",
            "duration": float(np.pi),
            "a": [[a]],
            "q": [[q]],
            "frequency": 2.0,
        }],
    }


class TestLoadValidate:
    def test_minimal_sho(self, tmp_path):
        path = tmp_path / "sho.yaml"
        path.write_text(yaml.safe_dump(sho_dict()))
        config = load_lattice(path)
        assert config.name == "sho"
        assert config.dim_n == 1
        h = config.to_hamiltonian()
        np.testing.assert_allclose(monodromy(h).matrix, np.eye(2), atol=1e-9)

    def test_defaults_for_r_and_mass(self):
        config = lattice_from_dict(fodo_dict())
        el = config.elements[0]
        np.testing.assert_array_equal(el.r, np.zeros((1, 1)))
        np.testing.assert_array_equal(el.mass_inv, np.eye(1))

    def test_asymmetric_kappa_named_in_error(self):
        data = sho_dict()
        data["n"] = 2
        data["elements"][0]["kappa"] = [[1.0, 0.5], [0.0, 1.0]]
        data["elements"][0]["r"] = [[0.0, 0.0], [0.0, 0.0]]
        data["elements"][0]["mass_inv"] = [[1.0, 0.0], [0.0, 1.0]]
        with pytest.raises(LatticeFormatError, match="kappa"):
            lattice_from_dict(data)

    def test_duration_mismatch_rejected(self):
        data = sho_dict()
        data["elements"][0]["duration"] = 0.9 * data["period"]
        with pytest.raises(LatticeFormatError, match="durations sum"):
            lattice_from_dict(data)

    def test_wrong_matrix_shape_rejected(self):
        data = sho_dict()
        data["elements"][0]["kappa"] = [[1.0, 0.0]]
        with pytest.raises(LatticeFormatError, match="1x1"):
            lattice_from_dict(data)

    def test_missing_field_rejected(self):
        data = sho_dict()
        del data["period"]
        with pytest.raises(LatticeFormatError, match="period"):
            lattice_from_dict(data)

    def test_unknown_tolerance_rejected(self):
        data = sho_dict()
        data["tolerances"] = {"bogus": 1e-3}
        with pytest.raises(LatticeFormatError, match="bogus"):
            lattice_from_dict(data)

    def test_harmonic_element_evaluation(self):
        config = lattice_from_dict(mathieu_dict(0.3, 0.05))
        h = config.to_hamiltonian()
        kap, _, _ = h.coefficients(0.0)
        assert kap[0, 0] == pytest.approx(0.4)
        kap, _, _ = h.coefficients(np.pi / 2)
        assert kap[0, 0] == pytest.approx(0.2)

    def test_parse_error_carries_location(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("name: x\nelements: [:::\n")
        with pytest.raises(LatticeFormatError, match="YAML"):
            load_lattice(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(LatticeFormatError, match="not found"):
            load_lattice(tmp_path / "nope.yaml")


class TestRoundTrip:
    def test_canonical_files_round_trip_byte_identical(self, tmp_path):
        config = lattice_from_dict(fodo_dict())
        p1 = tmp_path / "one.yaml"
        p2 = tmp_path / "two.yaml"
        save_lattice(config, p1)
        save_lattice(load_lattice(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_harmonic_round_trip(self, tmp_path):
        config = lattice_from_dict(mathieu_dict())
        p1 = tmp_path / "one.yaml"
        p2 = tmp_path / "two.yaml"
        save_lattice(config, p1)
        save_lattice(load_lattice(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_content_hash_stable(self):
        c1 = lattice_from_dict(fodo_dict())
        c2 = lattice_from_dict(fodo_dict())
        assert c1.content_hash() == c2.content_hash()
        c3 = lattice_from_dict(sho_dict())
        assert c1.content_hash() != c3.content_hash()


class TestMatrixFiles:
    def test_round_trip(self, tmp_path, rng):
        from conftest import random_symplectic

        m = random_symplectic(rng, 2)
        path = tmp_path / "m.txt"
        save_matrix(m, path)
        np.testing.assert_array_equal(load_matrix(path), m)

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("2\n1 0 0 0\n0 1 0 0\n")
        with pytest.raises(LatticeFormatError, match="rows"):
            load_matrix(path)

    def test_bad_entry_count(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("1\n1 0\n0 1 2\n")
        with pytest.raises(LatticeFormatError, match="entries"):
            load_matrix(path)

    def test_comments_and_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("# drift\n1\n\n1.0 1.0\n0.0 1.0\n")
        np.testing.assert_array_equal(load_matrix(path),
                                      np.array([[1.0, 1.0], [0.0, 1.0]]))
