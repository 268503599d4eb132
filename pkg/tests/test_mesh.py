import numpy as np
import pytest

from smallscat.mesh import MeshError, SurfaceMesh, cube_mesh, icosphere, read_mesh, write_mesh


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_icosphere_counts_and_radius(level):
    m = icosphere(level, radius=2.0)
    assert m.n_triangles == 20 * 4 ** level
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 2.0, rtol=1e-14)
    m.validate()


def test_cube_mesh_area_and_centre():
    m = cube_mesh(3, side=2.0)
    assert m.n_triangles == 12 * 9
    assert m.areas.sum() == pytest.approx(24.0, rel=1e-14)
    np.testing.assert_allclose(m.vertices.mean(axis=0), 0.0, atol=1e-14)
    m.validate()


def test_refinement_keeps_children_together():
    m = cube_mesh(1)
    r = m.refined()
    assert r.n_triangles == 4 * m.n_triangles
    np.testing.assert_allclose(r.areas.reshape(-1, 4).sum(axis=1), m.areas, rtol=1e-13)
    r.validate()


def test_refinement_can_snap_to_sphere():
    r = icosphere(1).refined(snap_to_sphere=1.0)
    np.testing.assert_allclose(np.linalg.norm(r.vertices, axis=1), 1.0, rtol=1e-14)


def test_open_surface_rejected():
    m = icosphere(0)
    holed = SurfaceMesh(m.vertices, m.triangles[1:])
    with pytest.raises(MeshError):
        holed.validate()


def test_inconsistent_orientation_rejected():
    m = icosphere(0)
    tri = m.triangles.copy()
    tri[0] = tri[0][::-1]
    with pytest.raises(MeshError):
        SurfaceMesh(m.vertices, tri).validate()


def test_degenerate_triangle_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0.0]])
    with pytest.raises(MeshError):
        SurfaceMesh(v, [[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]]).validate()


def test_read_write_roundtrip(tmp_path):
    m = cube_mesh(2)
    p = tmp_path / "cube.tri"
    write_mesh(m, p)
    back = read_mesh(p)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.vertices, m.vertices)


def test_transforms_preserve_area():
    m = cube_mesh(2)
    assert m.scaled(3.0).areas.sum() == pytest.approx(9 * m.areas.sum(), rel=1e-13)
    assert m.translated([1, 2, 3]).areas.sum() == pytest.approx(m.areas.sum(), rel=1e-13)
