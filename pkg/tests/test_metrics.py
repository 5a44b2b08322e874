import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from mvrecon.errors import DomainError
from mvrecon.metrics import (
    THRESHOLDS,
    RigidTransform,
    brute_force_nn,
    chamfer,
    cloud_metrics,
    evaluate_pair,
    fscore,
    icp_align,
    kabsch,
    nearest,
)
from mvrecon.renderer import get_fixture
from mvrecon.surface import Mesh, PointCloud, marching_cubes, normalize_to_unit_sphere, sample_surface, sdf_grid_from_function


@pytest.fixture(scope="module")
def lumpy_points():
    m = marching_cubes(sdf_grid_from_function(get_fixture("lumpy"), 64))
    m, _, _ = normalize_to_unit_sphere(m)
    return sample_surface(m, 10000, np.random.default_rng(0)).points


def rigid(angle_deg, axis, t):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    return RigidTransform(Rotation.from_rotvec(np.radians(angle_deg) * axis).as_matrix(), np.asarray(t, float))


def test_chamfer_trivial_cases():
    a = np.random.default_rng(0).normal(size=(50, 3))
    assert chamfer(a, a) == 0.0
    assert chamfer(np.zeros((1, 3)), np.array([[0, 0, 0.7]])) == pytest.approx(0.7)
    with pytest.raises(DomainError):
        chamfer(np.zeros((0, 3)), a)
    assert chamfer(PointCloud(a), PointCloud(a + 1)) == pytest.approx(chamfer(a, a + 1))


def test_fscore_trivial_cases():
    a = np.random.default_rng(1).normal(size=(50, 3))
    assert fscore(a, a, 0.01)[0] == 1.0
    p, q = np.zeros((1, 3)), np.array([[0.3, 0, 0]])
    assert fscore(p, q, 0.2) == (0.0, 0.0, 0.0)
    assert fscore(p, q, 0.3)[0] == 1.0
    with pytest.raises(DomainError):
        fscore(p, q, 0.0)


def test_fscore_mixed_clusters():
    b = np.zeros((10, 3))
    a = np.concatenate([np.zeros((5, 3)), np.full((5, 3), 5.0)])
    f, p, r = fscore(a, b, 0.1)
    assert (p, r) == (0.5, 1.0)
    assert f == pytest.approx(2 / 3)


def test_kdtree_matches_brute_force():
    rng = np.random.default_rng(2)
    for n in (1, 17, 500, 2000):
        q, r = rng.normal(size=(n, 3)), rng.normal(size=(max(n // 2, 1), 3))
        d1, _ = nearest(q, r)
        d2, _ = brute_force_nn(q, r)
        assert np.abs(d1 - d2).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_symmetry_and_rigid_invariance(seed, tau):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 300, 3))
    assert chamfer(a, b) == pytest.approx(chamfer(b, a), abs=1e-15)
    T = rigid(rng.uniform(0, 180), rng.normal(size=3), rng.normal(size=3))
    assert chamfer(T.apply(a), T.apply(b)) == pytest.approx(chamfer(a, b), abs=1e-9)
    f = fscore(a, b, tau)[0]
    assert abs(fscore(T.apply(a), T.apply(b), tau)[0] - f) <= 1e-9
    assert fscore(a, b, tau * 1.5)[0] >= f


def test_rigid_transform_algebra():
    a, b = rigid(20, [1, 2, 3], [0.1, 0, 0]), rigid(-50, [0, 1, 0], [0, 0.3, 1])
    p = np.random.default_rng(3).normal(size=(10, 3))
    np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
    np.testing.assert_allclose(a.inverse().apply(a.apply(p)), p, atol=1e-12)
    assert a.angle_deg == pytest.approx(20)
    assert np.linalg.det(a.rotation) == pytest.approx(1.0, abs=1e-9)


def test_kabsch_exact():
    src = np.random.default_rng(4).normal(size=(30, 3))
    T = rigid(70, [1, -1, 2], [0.5, -0.2, 0.1])
    est = kabsch(src, T.apply(src))
    np.testing.assert_allclose(est.rotation, T.rotation, atol=1e-12)
    np.testing.assert_allclose(est.translation, T.translation, atol=1e-12)
    # a reflected target still yields a proper rotation
    assert np.linalg.det(kabsch(src, src * [1, 1, -1]).rotation) == pytest.approx(1.0)


def test_icp_identity(lumpy_points):
    T, aligned = icp_align(lumpy_points, lumpy_points)
    np.testing.assert_allclose(T.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(T.translation, 0, atol=1e-9)


@pytest.mark.parametrize("angle", [5, 15, 30])
@pytest.mark.parametrize("axis", [[0, 0, 1], [1, 1, 0], [0.3, -1, 0.5]])
def test_icp_recovers_known_transform(lumpy_points, angle, axis):
    P = rigid(angle, axis, [0.1, 0.05, -0.2])
    hist = []
    T, aligned = icp_align(P.apply(lumpy_points), lumpy_points, history=hist)
    inv = P.inverse()
    assert T.compose(P).angle_deg <= 1.0
    assert np.linalg.norm(T.translation - inv.translation) <= 0.01
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_icp_error_grows_with_perturbation(lumpy_points):
    errs = []
    for angle in (5, 15, 30):
        P = rigid(angle, [0.3, -1, 0.5], [0, 0, 0])
        T, _ = icp_align(P.apply(lumpy_points), lumpy_points, max_iters=3)
        errs.append(T.compose(P).angle_deg)
    assert errs[0] < errs[1] < errs[2]


def test_icp_translation_on_sphere(sphere_mesh64):
    pts = sample_surface(normalize_to_unit_sphere(sphere_mesh64)[0], 10000, np.random.default_rng(5)).points
    T, aligned = icp_align(pts + [0.2, -0.1, 0.05], pts)
    np.testing.assert_allclose(T.translation, [-0.2, 0.1, -0.05], atol=0.01)
    assert chamfer(aligned, pts) < 1e-6


def test_icp_rejects_collinear():
    line = np.outer(np.linspace(0, 1, 20), [1, 2, 3])
    with pytest.raises(DomainError):
        icp_align(line, np.random.default_rng(0).normal(size=(20, 3)))
    with pytest.raises(DomainError):
        icp_align(np.zeros((2, 3)), np.zeros((5, 3)))


def test_evaluate_self(sphere_mesh64):
    r = evaluate_pair(sphere_mesh64, sphere_mesh64)
    assert r.chamfer <= 1e-3 and r.fscore[0.1] == 1.0
    assert tuple(r.fscore) == THRESHOLDS
    # independent draws only differ by sampling noise
    rng = np.random.default_rng(1)
    assert evaluate_pair(sphere_mesh64, sphere_mesh64, seed=rng).chamfer <= 1e-3


def test_evaluate_against_analytic_sphere(sphere_mesh64):
    rng = np.random.default_rng(6)
    cloud = rng.normal(size=(10000, 3))
    cloud /= np.linalg.norm(cloud, axis=1, keepdims=True)  # analytic sphere, already unit-normalised
    pred = sample_surface(normalize_to_unit_sphere(sphere_mesh64)[0], 10000, rng).points
    r = cloud_metrics(pred, cloud)
    assert r.chamfer <= 2 * (2 / 63)


def test_evaluate_with_alignment_and_report(lumpy_points):
    m = marching_cubes(sdf_grid_from_function(get_fixture("lumpy"), 48))
    P = rigid(10, [0, 0, 1], [0.05, 0, 0])
    moved = Mesh(P.apply(m.vertices), m.faces)
    plain = evaluate_pair(moved, m, align=False, n=4000)
    aligned = evaluate_pair(moved, m, align=True, n=4000)
    assert aligned.icp_applied and aligned.chamfer < plain.chamfer
    assert 5 < aligned.icp_rotation_deg < 15
    d = aligned.to_dict()
    assert set(d["fscore"]) == {"0.1", "0.2", "0.5"}
    assert aligned.csv_row()[0] == aligned.chamfer
    bf = evaluate_pair(moved, m, n=1500, brute_force=True)
    kd = evaluate_pair(moved, m, n=1500)
    assert bf.chamfer == pytest.approx(kd.chamfer, abs=1e-12)
