"""Triplane latents, linear unpatchify super-resolution and the SDF/colour decoder.

Planes are stored as one array ``(3, R, R, C)`` in the order XY, XZ, YZ; plane
``k`` is indexed ``[i, j]`` with ``i`` along its first coordinate and ``j``
along its second. Token ``i`` of a plane of resolution ``R`` is centred at
``-1 + (2 i + 1) / R``.
"""
from dataclasses import dataclass

import numpy as np

from . import binio
from .errors import DomainError, SizeError
from .surface import SdfGrid, grid_points

LOW_RES = 64
LOW_CHANNELS = 1024
UPSCALE = 4
HIGH_CHANNELS = 120

PLANE_AXES = ((0, 1), (0, 2), (1, 2))  # XY, XZ, YZ


@dataclass(frozen=True)
class Triplane:
    planes: np.ndarray  # (3, R, R, C)

    def __post_init__(self):
        p = np.asarray(self.planes)
        if p.ndim != 4 or p.shape[0] != 3:
            raise SizeError(f"triplane must be (3, H, W, C), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DomainError("triplane holds non-finite values")
        object.__setattr__(self, "planes", p)

    @property
    def resolution(self):
        return self.planes.shape[1]

    @property
    def channels(self):
        return self.planes.shape[3]


class TriplaneLow(Triplane):
    """Reconstruction-model output; 64 x 64 tokens with 1024 channels by default."""

    @classmethod
    def zeros(cls, resolution=LOW_RES, channels=LOW_CHANNELS, dtype=np.float64):
        return cls(np.zeros((3, resolution, resolution, channels), dtype=dtype))


class TriplaneHigh(Triplane):
    """Super-resolved planes; 4x the low resolution with 120 channels by default."""


@dataclass(frozen=True)
class UnpatchifyWeights:
    """Shared linear map from one low token to a ``scale x scale`` block of high tokens.

    ``matrix`` is ``(C_low, scale * scale * C_high)``; the output index runs
    over ``(row, col, channel)`` of the block in C order.
    """

    matrix: np.ndarray
    bias: np.ndarray
    scale: int = UPSCALE

    @property
    def in_channels(self):
        return self.matrix.shape[0]

    @property
    def out_channels(self):
        return self.matrix.shape[1] // (self.scale * self.scale)

    @classmethod
    def random(cls, seed=0, in_channels=LOW_CHANNELS, out_channels=HIGH_CHANNELS, scale=UPSCALE, dtype=np.float64):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((in_channels, scale * scale * out_channels)) / np.sqrt(in_channels)
        b = 0.01 * rng.standard_normal(scale * scale * out_channels)
        return cls(m.astype(dtype), b.astype(dtype), scale)


def unpatchify(low, weights):
    """Map every low token independently to a block of high-resolution tokens.

    Cost is one matrix product over all tokens, so it grows linearly with token count.
    Accepts rectangular planes ``(3, H, W, C)``.
    """
    planes = low.planes if isinstance(low, Triplane) else np.asarray(low)
    n, h, w, c = planes.shape
    if c != weights.in_channels:
        raise SizeError(f"low triplane has {c} channels, weights expect {weights.in_channels}")
    s, co = weights.scale, weights.out_channels
    out = planes.reshape(-1, c) @ weights.matrix
    out += weights.bias
    out = out.reshape(n, h, w, s, s, co).transpose(0, 1, 3, 2, 4, 5).reshape(n, h * s, w * s, co)
    return TriplaneHigh(out)


# -- sampling --------------------------------------------------------------


def _bilinear(plane, u, v):
    """Sample ``plane`` (R, R, C) at continuous coordinates in [-1, 1]."""
    r0, r1 = plane.shape[:2]
    fu = np.clip((u + 1.0) * 0.5 * r0 - 0.5, 0.0, r0 - 1)
    fv = np.clip((v + 1.0) * 0.5 * r1 - 0.5, 0.0, r1 - 1)
    i0 = np.minimum(np.floor(fu).astype(np.int64), r0 - 2) if r0 > 1 else np.zeros_like(fu, dtype=np.int64)
    j0 = np.minimum(np.floor(fv).astype(np.int64), r1 - 2) if r1 > 1 else np.zeros_like(fv, dtype=np.int64)
    i1 = np.minimum(i0 + 1, r0 - 1)
    j1 = np.minimum(j0 + 1, r1 - 1)
    a = (fu - i0)[:, None]
    b = (fv - j0)[:, None]
    return (
        plane[i0, j0] * (1 - a) * (1 - b)
        + plane[i1, j0] * a * (1 - b)
        + plane[i0, j1] * (1 - a) * b
        + plane[i1, j1] * a * b
    )


def sample(high, points, return_clamped=False):
    """Sum of bilinear samples from the three planes at ``points`` ``(N, 3)`` or ``(3,)``.

    Points outside ``[-1, 1]^3`` are clamped onto the cube; ``return_clamped``
    additionally returns the per-point flag.
    """
    planes = high.planes if isinstance(high, Triplane) else np.asarray(high)
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise DomainError("sample points must be finite")
    clamped = np.any(np.abs(pts) > 1.0, axis=1)
    pts = np.clip(pts, -1.0, 1.0)
    feat = sum(_bilinear(planes[k], pts[:, a], pts[:, b]) for k, (a, b) in enumerate(PLANE_AXES))
    if single:
        feat, clamped = feat[0], clamped[0]
    return (feat, clamped) if return_clamped else feat


# -- decoder ---------------------------------------------------------------


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class SdfDecoder:
    """Two hidden softplus layers; output row 0 is the SDF, rows 1-3 the colour logits."""

    weights: tuple  # (W1, W2, W3) with shapes (in, h), (h, h), (h, 4)
    biases: tuple

    @classmethod
    def random(cls, seed=0, in_channels=HIGH_CHANNELS, hidden=64, out_scale=1.0):
        rng = np.random.default_rng(seed)
        dims = (in_channels, hidden, hidden, 4)
        ws, bs = [], []
        for k, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            w = rng.standard_normal((a, b)) / np.sqrt(a)
            if k == len(dims) - 2:
                w = w * out_scale
            ws.append(w)
            bs.append(np.zeros(b))
        return cls(tuple(ws), tuple(bs))

    @classmethod
    def zeros(cls, in_channels=HIGH_CHANNELS, hidden=64, out_bias=(0.0, 0.0, 0.0, 0.0)):
        dims = (in_channels, hidden, hidden, 4)
        ws = tuple(np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:]))
        bs = (np.zeros(hidden), np.zeros(hidden), np.asarray(out_bias, dtype=np.float64))
        return cls(ws, bs)

    def lipschitz_bound(self):
        """Upper bound on the SDF output's Lipschitz constant (softplus is 1-Lipschitz)."""
        w1, w2, w3 = self.weights
        return np.linalg.norm(w1, 2) * np.linalg.norm(w2, 2) * np.linalg.norm(w3[:, 0])


def decode(features, decoder):
    """``(sdf, rgb)`` for one feature vector or a batch ``(N, C)``."""
    f = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise DomainError("features must be finite")
    (w1, w2, w3), (b1, b2, b3) = decoder.weights, decoder.biases
    h = softplus(f @ w1 + b1)
    h = softplus(h @ w2 + b2)
    out = h @ w3 + b3
    return out[..., 0], sigmoid(out[..., 1:])


def field_from_triplane(high, decoder, resolution=64, bounds=((-1.0,) * 3, (1.0,) * 3),
                        sphere_prior=None, chunk=65536):
    """Dense SDF grid from the decoded triplane.

    ``sphere_prior`` adds ``|p| - radius`` to the decoded value, the usual
    sphere initialisation for SDF networks; ``None`` leaves the raw decoder output.
    """
    if resolution < 8:
        raise DomainError(f"resolution must be >= 8, got {resolution}")
    pts = grid_points(resolution, bounds).reshape(-1, 3)
    values = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        values[s:s + chunk], _ = decode(sample(high, p), decoder)
    if sphere_prior is not None:
        values += np.linalg.norm(pts, axis=1) - sphere_prior
    return SdfGrid(values.reshape((resolution,) * 3), bounds)


# -- persistence -----------------------------------------------------------


def save_triplane(path, tri):
    kind = "triplane_high" if isinstance(tri, TriplaneHigh) else "triplane_low"
    binio.save_tensors(path, {"planes": tri.planes}, meta={"kind": kind, "shape": list(tri.planes.shape)})


def load_triplane(path):
    tensors, meta = binio.load_tensors(path)
    cls = {"triplane_low": TriplaneLow, "triplane_high": TriplaneHigh}.get(meta.get("kind"))
    if cls is None:
        raise ValueError(f"{path}: not a triplane file")
    return cls(tensors["planes"])


def save_unpatchify(path, weights):
    binio.save_tensors(
        path,
        {"matrix": weights.matrix, "bias": weights.bias},
        meta={"kind": "unpatchify", "scale": weights.scale, "in": weights.in_channels, "out": weights.out_channels},
    )


def load_unpatchify(path):
    tensors, meta = binio.load_tensors(path)
    if meta.get("kind") != "unpatchify":
        raise ValueError(f"{path}: not unpatchify weights")
    return UnpatchifyWeights(tensors["matrix"], tensors["bias"], int(meta["scale"]))


def save_decoder(path, decoder):
    tensors = {f"w{k}": w for k, w in enumerate(decoder.weights)}
    tensors.update({f"b{k}": b for k, b in enumerate(decoder.biases)})
    binio.save_tensors(path, tensors, meta={"kind": "sdf_decoder"})


def load_decoder(path):
    tensors, meta = binio.load_tensors(path)
    if meta.get("kind") != "sdf_decoder":
        raise ValueError(f"{path}: not decoder weights")
    ws = tuple(tensors[f"w{k}"].astype(np.float64) for k in range(3))
    bs = tuple(tensors[f"b{k}"].astype(np.float64) for k in range(3))
    return SdfDecoder(ws, bs)
