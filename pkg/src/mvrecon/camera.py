"""Orbit and condition cameras, pinhole matrices, rays and camera embeddings.

World frame is right-handed with +z up; azimuth is measured in the xy-plane
from +x toward +y. Camera frames follow the OpenCV convention (x right,
y down, z forward).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ORBIT_AZIMUTHS = (0.0, 60.0, 120.0, 180.0, 240.0, 300.0)
ORBIT_ELEVATION = 0.0
ORBIT_DISTANCE = 1.5
ORBIT_FOV = 47.9

# condition-camera sampling ranges (uniform, center +- half width)
COND_ELEVATION_RANGE = (-20.0, 60.0)
COND_FOV = (47.0, 0.01)
COND_DISTANCE = (1.5, 0.1)

EMBEDDING_DIM = 16


@dataclass(frozen=True)
class CameraPose:
    elevation_deg: float
    azimuth_deg: float
    distance: float = ORBIT_DISTANCE
    fov_deg: float = ORBIT_FOV

    def __post_init__(self):
        if not self.distance > 0:
            raise DomainError(f"distance must be positive, got {self.distance}")
        if not 0 < self.fov_deg < 180:
            raise DomainError(f"fov must lie in (0, 180), got {self.fov_deg}")
        object.__setattr__(self, "elevation_deg", float(self.elevation_deg))
        object.__setattr__(self, "azimuth_deg", float(self.azimuth_deg) % 360.0)
        object.__setattr__(self, "distance", float(self.distance))
        object.__setattr__(self, "fov_deg", float(self.fov_deg))

    @property
    def position(self):
        el = np.radians(self.elevation_deg)
        az = np.radians(self.azimuth_deg)
        return self.distance * np.array(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
        )

    def to_dict(self):
        return {
            "elevation_deg": self.elevation_deg,
            "azimuth_deg": self.azimuth_deg,
            "distance": self.distance,
            "fov_deg": self.fov_deg,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["elevation_deg"], d["azimuth_deg"], d["distance"], d["fov_deg"])


@dataclass(frozen=True)
class CameraMatrices:
    """``extrinsic`` maps world to camera; ``intrinsic`` maps camera to pixels.

    ``degenerate`` is set when the look-at fell back to +x as the up axis.
    """

    extrinsic: np.ndarray
    intrinsic: np.ndarray
    width: int
    height: int
    degenerate: bool = False

    @property
    def rotation(self):
        return self.extrinsic[:3, :3]

    @property
    def translation(self):
        return self.extrinsic[:3, 3]

    @property
    def center(self):
        return -self.rotation.T @ self.translation

    @property
    def forward(self):
        return self.rotation[2].copy()

    def project(self, points):
        """Project world points ``(..., 3)`` to pixel coordinates and depth.

        Pixel ``(u, v)`` has its center at ``(u + 0.5, v + 0.5)``.
        """
        points = np.asarray(points, dtype=np.float64)
        cam = points @ self.rotation.T + self.translation
        depth = cam[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uvw = cam @ self.intrinsic.T
            uv = uvw[..., :2] / uvw[..., 2:3]
        return uv, depth

    def unproject(self, uv, depth):
        """Inverse of :meth:`project` for points in front of the camera."""
        uv = np.asarray(uv, dtype=np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        k = self.intrinsic
        x = (uv[..., 0] - k[0, 2]) / k[0, 0]
        y = (uv[..., 1] - k[1, 2]) / k[1, 1]
        cam = np.stack([x * depth, y * depth, depth], axis=-1)
        return (cam - self.translation) @ self.rotation


def orbit_poses():
    """The six fixed generation cameras, in ascending azimuth."""
    return tuple(CameraPose(ORBIT_ELEVATION, az, ORBIT_DISTANCE, ORBIT_FOV) for az in ORBIT_AZIMUTHS)


def sample_condition_pose(rng):
    """Draw a condition-image camera from the training distribution."""
    lo, hi = COND_ELEVATION_RANGE
    elevation = rng.uniform(lo, hi)
    azimuth = rng.uniform(0.0, 360.0)
    fov = rng.uniform(COND_FOV[0] - COND_FOV[1], COND_FOV[0] + COND_FOV[1])
    distance = rng.uniform(COND_DISTANCE[0] - COND_DISTANCE[1], COND_DISTANCE[0] + COND_DISTANCE[1])
    return CameraPose(elevation, azimuth, distance, fov)


def intrinsic_matrix(fov_deg, width, height):
    """Square-pixel pinhole matrix; ``fov_deg`` is the vertical field of view."""
    if width <= 0 or height <= 0:
        raise DomainError(f"resolution must be positive, got {width}x{height}")
    f = 0.5 * height / np.tan(0.5 * np.radians(fov_deg))
    return np.array([[f, 0.0, 0.5 * width], [0.0, f, 0.5 * height], [0.0, 0.0, 1.0]])


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)):
    """World-to-camera ``(R, t, degenerate)`` for a camera at ``eye``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    degenerate = np.linalg.norm(right) < 1e-9
    if degenerate:
        right = np.cross(forward, (1.0, 0.0, 0.0))
    right /= np.linalg.norm(right)
    cam_up = np.cross(right, forward)
    rot = np.stack([right, -cam_up, forward])
    return rot, -rot @ eye, bool(degenerate)


def pose_to_matrices(pose, width, height):
    rot, trans, degenerate = look_at(pose.position)
    extrinsic = np.eye(4)
    extrinsic[:3, :3] = rot
    extrinsic[:3, 3] = trans
    return CameraMatrices(
        extrinsic=extrinsic,
        intrinsic=intrinsic_matrix(pose.fov_deg, width, height),
        width=int(width),
        height=int(height),
        degenerate=degenerate,
    )


def camera_embedding(pose=None, dim=EMBEDDING_DIM):
    """Sinusoidal pose features; ``None`` gives the all-zero uncalibrated embedding.

    Layout: ``[distance, fov_rad, sin(k el), cos(k el), sin(k az), cos(k az), ...]``
    for k = 1, 2, ... truncated to ``dim`` entries.
    """
    if pose is None:
        return np.zeros(dim)
    el = np.radians(pose.elevation_deg)
    az = np.radians(pose.azimuth_deg)
    feats = [pose.distance, np.radians(pose.fov_deg)]
    k = 1
    while len(feats) < dim:
        feats.extend([np.sin(k * el), np.cos(k * el), np.sin(k * az), np.cos(k * az)])
        k += 1
    return np.array(feats[:dim], dtype=np.float64)


def generate_rays(matrices, width=None, height=None):
    """One ray per pixel center: ``origins`` and unit ``directions``, both ``(H, W, 3)``."""
    width = matrices.width if width is None else width
    height = matrices.height if height is None else height
    k = matrices.intrinsic
    u = np.arange(width) + 0.5
    v = np.arange(height) + 0.5
    uu, vv = np.meshgrid(u, v)
    cam = np.stack([(uu - k[0, 2]) / k[0, 0], (vv - k[1, 2]) / k[1, 1], np.ones_like(uu)], axis=-1)
    dirs = cam @ matrices.rotation
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(matrices.center, dirs.shape).copy()
    return origins, dirs
