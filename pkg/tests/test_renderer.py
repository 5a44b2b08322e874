import numpy as np
import pytest

from mvrecon.camera import CameraPose, orbit_poses
from mvrecon.renderer import (
    FIXTURES,
    MARCH_EPS,
    Box,
    DentedSphere,
    Empty,
    Intersect,
    Sphere,
    Subtract,
    Torus,
    Union,
    eval_sdf,
    get_fixture,
    march_rays,
    ray_march,
    render,
    render_fixture_set,
    sdf_normals,
    top_pose,
)


def test_sphere_values():
    s = Sphere(0.5)
    assert eval_sdf(s, [0, 0, 0]) == -0.5
    assert eval_sdf(s, [1, 0, 0]) == 0.5


def test_csg_definitions():
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, (500, 3))
    a, b = Sphere(0.4), Box((0.3, 0.2, 0.5))
    np.testing.assert_array_equal(Union((a, b))(p), np.minimum(a(p), b(p)))
    np.testing.assert_array_equal(Intersect((a, b))(p), np.maximum(a(p), b(p)))
    np.testing.assert_array_equal(Subtract(a, b)(p), np.maximum(a(p), -b(p)))


def test_primitive_exact_values():
    assert Box((0.3, 0.2, 0.1))(np.array([0.5, 0, 0])) == pytest.approx(0.2)
    assert Box((0.3, 0.2, 0.1))(np.array([0.0, 0, 0])) == pytest.approx(-0.1)
    assert Box((0.3, 0.2, 0.1))(np.array([0.4, 0.3, 0])) == pytest.approx(np.hypot(0.1, 0.1))
    assert Torus(0.35, 0.12)(np.array([0.35, 0, 0])) == pytest.approx(-0.12)
    assert Torus(0.35, 0.12)(np.array([0.0, 0, 0])) == pytest.approx(0.23)


@pytest.mark.parametrize("shape", [Sphere(0.4), Box((0.35, 0.25, 0.15)), Torus(0.35, 0.12), Sphere(0.3, (0.1, 0, 0))])
def test_eikonal_near_surface(shape):
    rng = np.random.default_rng(1)
    p = rng.uniform(-0.7, 0.7, (4000, 3))
    d = shape(p)
    near = p[(np.abs(d) < 0.1) & (np.abs(d) > 1e-3)]
    h = 1e-6
    grad = np.stack([(shape(near + h * e) - shape(near - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    g = np.linalg.norm(grad, axis=1)
    # boxes have a gradient discontinuity on their medial axis; exclude those points
    ok = np.abs(g - 1) <= 1e-3
    assert ok.mean() > 0.98


def test_ray_march_basic():
    hit = ray_march(np.array([0, 0, 1.5]), np.array([0, 0, -1.0]), Sphere(0.5))
    assert hit is not None
    assert hit[1] == pytest.approx(1.0, abs=1e-4)
    assert ray_march(np.array([0, 0, 1.5]), np.array([1.0, 0, 0]), Sphere(0.5)) is None
    assert ray_march(np.array([5.0, 5, 5]), np.array([1.0, 0, 0]), Sphere(0.5)) is None


def test_grazing_ray_hits():
    b = 0.5 - 1e-3
    o = np.array([b, 0, 1.5])
    res = ray_march(o, np.array([0, 0, -1.0]), Sphere(0.5))
    assert res is not None
    expected = 1.5 - np.sqrt(0.25 - b * b)  # analytic first intersection
    assert res[1] == pytest.approx(expected, abs=5e-3)


def test_hit_points_on_surface():
    rng = np.random.default_rng(2)
    o = rng.normal(size=(2000, 3))
    o = 1.5 * o / np.linalg.norm(o, axis=1, keepdims=True)
    target = rng.uniform(-0.3, 0.3, (2000, 3))
    d = target - o
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for name in ("sphere", "torus", "dented_sphere"):
        shape = get_fixture(name)
        hit, t = march_rays(o, d, shape)
        pts = o[hit] + t[hit, None] * d[hit]
        assert np.all(np.abs(shape(pts)) <= MARCH_EPS)
        assert np.all(np.isinf(t[~hit]))


def test_empty_shape_renders_white():
    v = render(Empty(), orbit_poses()[0], 32)
    assert np.all(v.image == 255) and not v.silhouette.any()


def test_background_white_and_mask_consistent():
    v = render(get_fixture("torus"), CameraPose(30, 45), 96)
    assert np.all(v.image[~v.silhouette] == 255)
    assert v.silhouette.any()
    assert np.all(v.image[v.silhouette].min(axis=-1) < 250)


def test_sphere_silhouette_matches_projected_disc():
    res, r, dist, fov = 512, 0.4, 1.5, 47.9
    v = render(Sphere(r), CameraPose(0, 0, dist, fov), res)
    f = 0.5 * res / np.tan(np.radians(fov) / 2)
    alpha = np.arcsin(r / dist)
    area = np.pi * (f * np.tan(alpha)) ** 2
    assert abs(v.silhouette.sum() - area) / area < 0.01


def test_render_deterministic():
    pose = CameraPose(20, 100)
    a = render(get_fixture("lumpy"), pose, 64)
    b = render(get_fixture("lumpy"), pose, 64)
    assert np.array_equal(a.image, b.image) and np.array_equal(a.silhouette, b.silhouette)


def test_normals_unit_and_outward():
    p = np.array([[0.4, 0, 0], [0, 0.4, 0], [0, 0, -0.4]])
    n = sdf_normals(Sphere(0.4), p)
    np.testing.assert_allclose(n, p / 0.4, atol=1e-6)


def test_fixture_set(sphere_views):
    assert len(sphere_views.images) == 6
    assert [p.azimuth_deg for p in sphere_views.poses] == [0, 60, 120, 180, 240, 300]
    rng = np.random.default_rng(7)
    _, cond = render_fixture_set(get_fixture("sphere"), True, rng, resolution=32)
    assert -20 <= cond.pose.elevation_deg <= 60
    views, none = render_fixture_set(get_fixture("sphere"), False, resolution=32)
    assert none is None


def test_dent_invisible_from_orbit(sphere_views, dented_views):
    views, cond = dented_views
    for a, b in zip(sphere_views.masks, views.masks):
        assert abs(int(a.sum()) - int(b.sum())) <= 0.005 * a.sum()
        assert (a ^ b).sum() <= 0.005 * a.sum()
    top_plain = render(get_fixture("sphere"), top_pose(), 320).silhouette
    assert cond.silhouette.sum() < top_plain.sum() * 0.99


def test_dented_sphere_geometry():
    s = DentedSphere(0.4)
    assert s(np.array([0, 0, 0.39])) > 0  # in the bore
    assert s(np.array([0.3, 0, 0])) < 0
    assert s(np.array([0, 0, 0])) > 0  # depth 1.0 bores straight through
    assert "dented_sphere" in FIXTURES
    with pytest.raises(KeyError):
        get_fixture("teapot")
