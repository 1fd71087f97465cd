import numpy as np
import pytest

from synthforge.primitives import (DISTRACTOR_KINDS, distractor_mesh,
                                   make_box, make_cone, make_distractor,
                                   make_sphere)


@pytest.mark.parametrize("kind", DISTRACTOR_KINDS)
def test_kinds_build_valid_normalized_meshes(kind):
    mesh = make_distractor(kind, (0.3, 0.4, 0.5))
    mesh.validate()
    extent = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    assert extent.max() == pytest.approx(1.0)
    assert mesh.diffuse_color == (0.3, 0.4, 0.5)
    assert mesh.category == "distractor"


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="cylinder"):
        make_distractor("cylinder", (0.5, 0.5, 0.5))


def test_box_counts():
    mesh = make_box()
    assert len(mesh.vertices) == 8
    assert len(mesh.faces) == 12


def test_sphere_and_cone_are_closed_enough():
    # every vertex referenced, normals unit length
    for mesh in (make_sphere(), make_cone()):
        assert set(mesh.faces.ravel().tolist()) == set(range(len(mesh.vertices)))
        lengths = np.linalg.norm(mesh.face_normals, axis=1)
        assert np.allclose(lengths, 1.0, atol=1e-6)


def test_distractor_mesh_shared_and_deterministic():
    a = distractor_mesh("box")
    b = distractor_mesh("box")
    assert a is b
    c = make_distractor("box", (0.1, 0.2, 0.3))
    assert np.array_equal(a.vertices, c.vertices)
    assert np.array_equal(a.faces, c.faces)
