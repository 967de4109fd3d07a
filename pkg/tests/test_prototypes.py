import numpy as np
import pytest

from swarmpref.prototypes import (
    FormationPrototype,
    default_prototypes,
    load_prototypes,
    save_prototypes,
)

NAMES = {"line", "column", "wedge", "grid", "circle"}


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_library_names_and_sizes(n):
    protos = default_prototypes(n)
    assert {p.name for p in protos} == NAMES
    for p in protos:
        assert p.n_robots == n
        assert p.local_positions.shape == (n, 3)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_min_spacing_normalized_to_one(n):
    for p in default_prototypes(n):
        assert p.min_spacing == pytest.approx(1.0, abs=1e-9), p.name


def test_prototypes_are_centered():
    for p in default_prototypes(5):
        assert np.allclose(p.center, 0.0, atol=1e-9), p.name


def test_prototypes_are_planar():
    for p in default_prototypes(5):
        assert np.allclose(p.local_positions[:, 2], 0.0), p.name


def test_roundtrip(tmp_path):
    protos = default_prototypes(4)
    path = tmp_path / "protos.json"
    save_prototypes(protos, path)
    loaded = load_prototypes(path)
    assert [p.name for p in loaded] == [p.name for p in protos]
    for a, b in zip(protos, loaded):
        assert np.allclose(a.local_positions, b.local_positions)


def test_to_dict_shape():
    p = default_prototypes(3)[0]
    d = p.to_dict()
    assert d["name"] == p.name
    assert np.asarray(d["positions"]).shape == (3, 3)


def test_zero_robots_rejected():
    with pytest.raises(ValueError):
        default_prototypes(0)


def test_single_robot_degenerates_gracefully():
    for p in default_prototypes(1):
        assert p.n_robots == 1
        assert p.min_spacing == 0.0


def test_unnormalized_prototype_rejected():
    bad = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    with pytest.raises(ValueError):
        FormationPrototype("pair", bad)


def test_fixture_library_matches_default(proto_library):
    assert {p.name for p in proto_library} == NAMES
    fresh = {p.name: p for p in default_prototypes(5)}
    for p in proto_library:
        assert np.allclose(p.local_positions, fresh[p.name].local_positions)
