import numpy as np
import pytest
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from conftest import sphere_sdf
from mvrecon.errors import DomainError, SizeError
from mvrecon.renderer import get_fixture
from mvrecon.surface import (
    Mesh,
    SdfGrid,
    count_components,
    is_watertight,
    load_grid,
    marching_cubes,
    normalize_to_unit_sphere,
    read_obj,
    sample_surface,
    save_grid,
    sdf_grid_from_function,
    write_obj,
)

CELL64 = 2 / 63


def test_sphere_vertices_near_radius(sphere_mesh64):
    r = np.linalg.norm(sphere_mesh64.vertices, axis=1)
    assert np.abs(r - 0.4).max() <= 2 * CELL64
    assert np.abs(r - 0.4).max() <= 1e-3  # linear interpolation is far tighter than the bound
    ok, diag = is_watertight(sphere_mesh64)
    assert ok and diag["components"] == 1 and diag["boundary_edges"] == 0
    assert sphere_mesh64.signed_volume() == pytest.approx(4 / 3 * np.pi * 0.4**3, rel=0.01)


def test_empty_grids():
    assert marching_cubes(SdfGrid(np.ones((8, 8, 8)))).is_empty
    assert marching_cubes(SdfGrid(-np.ones((8, 8, 8)))).is_empty


def test_negation_flips_orientation():
    g = sdf_grid_from_function(sphere_sdf(0.37), 32)
    a = marching_cubes(g)
    b = marching_cubes(SdfGrid(-g.values, g.bounds))
    assert len(a.vertices) == len(b.vertices)
    ta, tb = cKDTree(a.vertices), cKDTree(b.vertices)
    assert ta.query(b.vertices)[0].max() <= 1e-9 and tb.query(a.vertices)[0].max() <= 1e-9
    assert a.signed_volume() > 0 > b.signed_volume()
    assert b.signed_volume() == pytest.approx(-a.signed_volume(), rel=1e-9)


def test_matches_skimage_vertex_set():
    measure = pytest.importorskip("skimage.measure")
    for name in ("torus", "lumpy", "two_spheres"):
        g = sdf_grid_from_function(get_fixture(name), 40)
        ours = marching_cubes(g)
        verts, faces, _, _ = measure.marching_cubes(g.values, 0.0, spacing=tuple(g.spacing))
        verts = verts + np.array(g.bounds[0])
        d1 = cKDTree(verts).query(ours.vertices)[0].max()
        d2 = cKDTree(ours.vertices).query(verts)[0].max()
        # skimage interpolates in single precision
        assert d1 <= 1e-6 and d2 <= 1e-6
        # ambiguous faces may be split differently, so compare volumes loosely
        assert len(ours.faces) == len(faces)
        assert ours.signed_volume() == pytest.approx(abs(Mesh(verts, faces).signed_volume()), rel=1e-3)


def test_vertex_residual_trilinear():
    g = sdf_grid_from_function(get_fixture("torus"), 48)
    m = marching_cubes(g)
    interp = RegularGridInterpolator(g.axes(), g.values)
    vals = interp(m.vertices)
    assert np.abs(vals).max() <= 1e-6 * np.ptp(g.values)


def test_iso_ties_count_as_inside():
    v = np.ones((3, 3, 3))
    v[1, 1, 1] = 0.0
    m = marching_cubes(SdfGrid(v))
    # the tied sample is inside; the surface collapses onto it and degenerate triangles are dropped
    assert m.is_empty or np.all(m.face_areas() >= 1e-12)
    v[1, 1, 1] = -1.0
    assert not marching_cubes(SdfGrid(v)).is_empty


def test_hausdorff_decreases_with_resolution():
    def hausdorff(res):
        m = marching_cubes(sdf_grid_from_function(get_fixture("torus"), res))
        return np.abs(get_fixture("torus")(m.vertices)).max()

    assert hausdorff(64) < hausdorff(32)


@pytest.mark.parametrize("name", ["sphere", "torus", "box", "dented_sphere", "lumpy"])
def test_fixtures_watertight(name):
    ok, diag = is_watertight(marching_cubes(sdf_grid_from_function(get_fixture(name), 48)))
    assert ok, diag


def test_two_components():
    m = marching_cubes(sdf_grid_from_function(get_fixture("two_spheres"), 48))
    ok, diag = is_watertight(m)
    assert ok and diag["components"] == 2


def test_single_triangle_not_watertight():
    m = Mesh(np.eye(3), np.array([[0, 1, 2]]))
    ok, diag = is_watertight(m)
    assert not ok and diag["boundary_edges"] == 3
    assert count_components(m) == 1


def test_mesh_validation():
    with pytest.raises(DomainError):
        Mesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))
    with pytest.raises(SizeError):
        SdfGrid(np.zeros((1, 4, 4)))
    with pytest.raises(DomainError):
        SdfGrid(np.full((2, 2, 2), np.nan))


def test_normalize(sphere_mesh64):
    n, scale, center = normalize_to_unit_sphere(sphere_mesh64)
    assert np.linalg.norm(n.vertices, axis=1).max() == pytest.approx(1.0, abs=1e-12)
    again, s2, c2 = normalize_to_unit_sphere(n)
    assert s2 == pytest.approx(1.0, abs=1e-9) and np.abs(c2).max() <= 1e-9
    big = Mesh(sphere_mesh64.vertices * 3 + 0.2, sphere_mesh64.faces)
    np.testing.assert_allclose(normalize_to_unit_sphere(big)[0].vertices, n.vertices, atol=1e-9)
    with pytest.raises(DomainError):
        normalize_to_unit_sphere(Mesh(np.zeros((0, 3)), np.zeros((0, 3))))


def test_sample_surface_on_sphere(sphere_mesh64):
    pc = sample_surface(sphere_mesh64, 10000, np.random.default_rng(0))
    assert len(pc) == 10000
    assert np.abs(np.linalg.norm(pc.points, axis=1) - 0.4).max() <= 2 * CELL64
    again = sample_surface(sphere_mesh64, 10000, np.random.default_rng(0))
    assert np.array_equal(pc.points, again.points)


def test_sample_surface_area_weighting():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [5, 0, 0], [5 + 3, 0, 0], [5, 2, 0]], dtype=float)
    m = Mesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
    np.testing.assert_allclose(m.face_areas(), [1, 3])
    n = 100_000
    pts = sample_surface(m, n, np.random.default_rng(1)).points
    k = (pts[:, 0] < 2.5).sum()
    p = 0.25
    assert abs(k - n * p) <= 3 * np.sqrt(n * p * (1 - p))


def test_sample_points_on_triangle_planes():
    m = marching_cubes(sdf_grid_from_function(get_fixture("box"), 24))
    rng = np.random.default_rng(2)
    pc = sample_surface(m, 5000, rng)
    # every point lies on the plane of its nearest supporting triangle
    a = m.vertices[m.faces[:, 0]]
    nrm = np.cross(m.vertices[m.faces[:, 1]] - a, m.vertices[m.faces[:, 2]] - a)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    centers = m.vertices[m.faces].mean(axis=1)
    _, tri = cKDTree(centers).query(pc.points, k=8)
    plane_d = np.abs(np.einsum("nkj,nkj->nk", pc.points[:, None] - a[tri], nrm[tri])).min(axis=1)
    assert plane_d.max() <= 1e-9


def test_sample_rejects_degenerate():
    with pytest.raises(DomainError):
        sample_surface(Mesh(np.zeros((3, 3)), np.array([[0, 1, 2]])), 10)
    with pytest.raises(DomainError):
        sample_surface(Mesh(np.zeros((0, 3)), np.zeros((0, 3))), 10)


def test_obj_and_grid_round_trip(tmp_path, sphere_mesh64):
    write_obj(tmp_path / "m.obj", sphere_mesh64)
    back = read_obj(tmp_path / "m.obj")
    np.testing.assert_array_equal(back.faces, sphere_mesh64.faces)
    np.testing.assert_allclose(back.vertices, sphere_mesh64.vertices, atol=1e-8)
    (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n")
    assert read_obj(tmp_path / "q.obj").faces.tolist() == [[0, 1, 2], [0, 2, 3]]
    g = sdf_grid_from_function(sphere_sdf(), 16, ((-1, -1, -1), (1, 1, 2)))
    save_grid(tmp_path / "g.bin", g)
    g2 = load_grid(tmp_path / "g.bin")
    assert g2.bounds == g.bounds
    np.testing.assert_allclose(g2.values, g.values, atol=1e-6)
