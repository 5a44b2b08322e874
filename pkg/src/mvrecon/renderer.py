"""Analytic SDF fixtures and a sphere-tracing renderer on a white background."""
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraPose, generate_rays, orbit_poses, pose_to_matrices, sample_condition_pose
from .mvgrid import ViewSet

MARCH_EPS = 1e-4
MARCH_STEPS = 256
BOUND_RADIUS = 1.2
NORMAL_STEP = 1e-4
AMBIENT = 0.2
LIGHT_DIR = (0.4, -0.3, 0.866)


class AnalyticSdf:
    """Base class; subclasses implement ``__call__(points) -> distances``."""

    def __call__(self, p):
        raise NotImplementedError


@dataclass(frozen=True)
class Empty(AnalyticSdf):
    def __call__(self, p):
        return np.ones(np.shape(p)[:-1])


@dataclass(frozen=True)
class Sphere(AnalyticSdf):
    radius: float
    center: tuple = (0.0, 0.0, 0.0)

    def __call__(self, p):
        return np.linalg.norm(np.asarray(p) - self.center, axis=-1) - self.radius


@dataclass(frozen=True)
class Box(AnalyticSdf):
    half_extents: tuple
    center: tuple = (0.0, 0.0, 0.0)

    def __call__(self, p):
        q = np.abs(np.asarray(p) - self.center) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Torus(AnalyticSdf):
    """Ring in the xy-plane with major radius ``R`` and tube radius ``r``."""

    R: float
    r: float
    center: tuple = (0.0, 0.0, 0.0)

    def __call__(self, p):
        p = np.asarray(p) - self.center
        ring = np.hypot(p[..., 0], p[..., 1]) - self.R
        return np.hypot(ring, p[..., 2]) - self.r


@dataclass(frozen=True)
class DentedSphere(AnalyticSdf):
    """Sphere with a round-bottomed cylindrical dent drilled along ``dent_center_direction``.

    The dent starts at the surface point in that direction and reaches
    ``dent_depth`` inward; a depth of at least the diameter bores straight through.
    """

    radius: float
    dent_center_direction: tuple = (0.0, 0.0, 1.0)
    dent_radius: float = 0.08
    dent_depth: float = 1.0

    def __call__(self, p):
        p = np.asarray(p, dtype=np.float64)
        d = np.asarray(self.dent_center_direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        ball = np.linalg.norm(p, axis=-1) - self.radius
        # capsule from just outside the surface down to the dent floor
        a = d * (self.radius + self.dent_radius)
        b = d * (self.radius - self.dent_depth + self.dent_radius)
        ab = b - a
        h = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
        capsule = np.linalg.norm(p - a - h[..., None] * ab, axis=-1) - self.dent_radius
        return np.maximum(ball, -capsule)


@dataclass(frozen=True)
class Translate(AnalyticSdf):
    shape: AnalyticSdf
    offset: tuple

    def __call__(self, p):
        return self.shape(np.asarray(p) - self.offset)


@dataclass(frozen=True)
class Union(AnalyticSdf):
    shapes: tuple

    def __call__(self, p):
        return np.min([s(p) for s in self.shapes], axis=0)


@dataclass(frozen=True)
class Intersect(AnalyticSdf):
    shapes: tuple

    def __call__(self, p):
        return np.max([s(p) for s in self.shapes], axis=0)


@dataclass(frozen=True)
class Subtract(AnalyticSdf):
    """``base`` minus ``cutter``."""

    base: AnalyticSdf
    cutter: AnalyticSdf

    def __call__(self, p):
        return np.maximum(self.base(p), -self.cutter(p))


def eval_sdf(shape, p):
    return shape(np.asarray(p, dtype=np.float64))


FIXTURES = {
    "sphere": Sphere(0.4),
    "dented_sphere": DentedSphere(0.4, (0.0, 0.0, 1.0), 0.08, 1.0),
    "torus": Torus(0.35, 0.12),
    "box": Box((0.35, 0.25, 0.15)),
    "two_spheres": Union((Sphere(0.25, (-0.35, 0.0, 0.0)), Sphere(0.2, (0.35, 0.1, 0.0)))),
    "lumpy": Union((Box((0.3, 0.18, 0.12)), Sphere(0.16, (0.22, 0.15, 0.1)), Sphere(0.1, (-0.2, -0.1, 0.15)))),
}


def get_fixture(name):
    try:
        return FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None


# -- ray marching ----------------------------------------------------------


def _bound_interval(origins, dirs, radius):
    b = np.sum(origins * dirs, axis=-1)
    c = np.sum(origins * origins, axis=-1) - radius**2
    disc = b * b - c
    hit = disc >= 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    return np.maximum(-b - root, 0.0), -b + root, hit


def march_rays(origins, dirs, shape, max_steps=MARCH_STEPS, eps=MARCH_EPS, bound=BOUND_RADIUS):
    """Vectorized sphere tracing; returns ``(hit_mask, t)`` with ``t = inf`` on misses."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    t, t_exit, active = _bound_interval(origins, dirs, bound)
    hit = np.zeros(len(origins), dtype=bool)
    idx = np.flatnonzero(active)
    for _ in range(max_steps):
        if idx.size == 0:
            break
        d = shape(origins[idx] + t[idx, None] * dirs[idx])
        done = d < eps
        hit[idx[done]] = True
        t[idx] += np.where(done, 0.0, d)
        escaped = t[idx] > t_exit[idx]
        idx = idx[~done & ~escaped]
    t = np.where(hit, t, np.inf)
    return hit, t


def ray_march(origin, direction, shape, max_steps=MARCH_STEPS, eps=MARCH_EPS):
    """Single-ray form: ``(point, distance)`` of the first hit, or ``None``."""
    hit, t = march_rays(np.asarray(origin)[None], np.asarray(direction)[None], shape, max_steps, eps)
    if not hit[0]:
        return None
    return np.asarray(origin) + t[0] * np.asarray(direction), float(t[0])


def sdf_normals(shape, points, h=NORMAL_STEP):
    points = np.asarray(points, dtype=np.float64)
    grad = np.empty_like(points)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grad[..., k] = (shape(points + e) - shape(points - e)) / (2 * h)
    norm = np.linalg.norm(grad, axis=-1, keepdims=True)
    return grad / np.maximum(norm, 1e-12)


@dataclass(frozen=True)
class RenderedView:
    image: np.ndarray  # (H, W, 3) uint8
    silhouette: np.ndarray  # (H, W) bool
    pose: object
    depth: np.ndarray = field(default=None, repr=False)


def render(shape, pose, resolution=320, light_dir=LIGHT_DIR, albedo=(0.8, 0.75, 0.7)):
    """Lambertian render with one directional light plus ambient, white background."""
    mats = pose_to_matrices(pose, resolution, resolution)
    origins, dirs = generate_rays(mats)
    hit, t = march_rays(origins, dirs, shape)
    image = np.full((resolution * resolution, 3), 255, dtype=np.uint8)
    if hit.any():
        pts = origins.reshape(-1, 3)[hit] + t[hit, None] * dirs.reshape(-1, 3)[hit]
        normals = sdf_normals(shape, pts)
        light = np.asarray(light_dir, dtype=np.float64)
        light /= np.linalg.norm(light)
        shade = AMBIENT + (1.0 - AMBIENT) * np.clip(normals @ light, 0.0, None)
        rgb = shade[:, None] * np.asarray(albedo)[None]
        image[hit] = np.clip(np.rint(rgb * 255), 0, 255).astype(np.uint8)
    shape2 = (resolution, resolution)
    return RenderedView(image.reshape(shape2 + (3,)), hit.reshape(shape2), pose, t.reshape(shape2))


def render_fixture_set(shape, include_condition=False, rng=None, resolution=320, condition_pose=None):
    """Render the six orbit views and optionally one condition view.

    The condition pose is drawn from ``rng`` unless ``condition_pose`` is given.
    """
    views = [render(shape, pose, resolution) for pose in orbit_poses()]
    viewset = ViewSet(
        tuple(v.image for v in views),
        tuple(v.pose for v in views),
        tuple(v.silhouette for v in views),
    )
    condition = None
    if include_condition:
        if condition_pose is None:
            rng = np.random.default_rng() if rng is None else rng
            condition_pose = sample_condition_pose(rng)
        condition = render(shape, condition_pose, resolution)
    return viewset, condition


def top_pose(distance=1.5, fov_deg=47.9):
    """Straight-down camera used to expose top-pole detail."""
    return CameraPose(90.0, 0.0, distance, fov_deg)
