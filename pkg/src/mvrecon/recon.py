"""Sparse-view reconstruction: a seeded cross-attention model and a space-carving oracle.

The learned backend mixes calibrated views, whose tokens carry their camera
embedding, with an uncalibrated condition image whose tokens carry the
all-zero embedding and a separate branch tag. The carving backend fuses
silhouettes into a visual hull and converts it to a truncated SDF.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from . import binio
from .camera import EMBEDDING_DIM, camera_embedding, pose_to_matrices
from .errors import DomainError, EmptyHullError, SizeError
from .mvgrid import resize_image, silhouette_from_image
from .surface import SdfGrid, grid_points
from .triplane import LOW_CHANNELS, LOW_RES, TriplaneLow, field_from_triplane, unpatchify

CALIBRATED = 0
CONDITION = 1


@dataclass(frozen=True)
class ReconConfig:
    patch: int = 16
    width: int = 64
    heads: int = 4
    blocks: int = 2
    plane_res: int = LOW_RES
    low_channels: int = LOW_CHANNELS
    embed_dim: int = EMBEDDING_DIM
    mlp_ratio: int = 2

    def __post_init__(self):
        if self.width % self.heads:
            raise DomainError("token width must be divisible by the number of heads")


@dataclass(frozen=True)
class TokenSequence:
    """Per-token features ``(N, D)``, camera embeddings, branch tags and source views.

    Features already include the projected camera embedding, a branch
    embedding and the in-image patch position.
    """

    features: np.ndarray
    embeddings: np.ndarray
    branch: np.ndarray
    view_index: np.ndarray

    def __len__(self):
        return len(self.features)


@dataclass(frozen=True)
class ReconModel:
    config: ReconConfig
    seed: int
    params: dict = field(repr=False)

    @classmethod
    def create(cls, seed=0, config=None):
        """Deterministic pseudo-random initialisation from ``seed``."""
        cfg = ReconConfig() if config is None else config
        rng = np.random.default_rng(seed)
        d, p = cfg.width, cfg.patch
        n_patch_dim = 3 * p * p

        def dense(a, b, gain=1.0):
            return gain * rng.standard_normal((a, b)) / np.sqrt(a)

        params = {
            "patch_w": dense(n_patch_dim, d),
            "patch_b": np.zeros(d),
            "cam_w": dense(cfg.embed_dim, d),
            "branch": 0.1 * rng.standard_normal((2, d)),
            "queries": rng.standard_normal((3 * cfg.plane_res * cfg.plane_res, d)),
            "out_w": dense(d, cfg.low_channels),
            "out_b": np.zeros(cfg.low_channels),
        }
        for b in range(cfg.blocks):
            params[f"b{b}.wq"] = dense(d, d)
            params[f"b{b}.wk"] = dense(d, d)
            params[f"b{b}.wv"] = dense(d, d)
            params[f"b{b}.wo"] = dense(d, d, 0.5)
            params[f"b{b}.mlp1"] = dense(d, cfg.mlp_ratio * d)
            params[f"b{b}.mlp2"] = dense(cfg.mlp_ratio * d, d, 0.5)
        return cls(cfg, int(seed), params)

    def pos_embedding(self, grid):
        """Fixed sinusoidal position code for a ``grid x grid`` patch layout, ``(grid^2, D)``."""
        d = self.config.width
        ii, jj = np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij")
        freqs = 1.0 / (100.0 ** (np.arange(d // 4) / max(d // 4, 1)))
        parts = []
        for coord in (ii.reshape(-1), jj.reshape(-1)):
            ang = coord[:, None] * freqs[None]
            parts.extend([np.sin(ang), np.cos(ang)])
        return 0.1 * np.concatenate(parts, axis=1)[:, :d]


def _as_float_image(img):
    img = np.asarray(img)
    if np.issubdtype(img.dtype, np.integer):
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def _patchify(img, p):
    h, w, c = img.shape
    g = h // p
    return img.reshape(g, p, g, p, c).transpose(0, 2, 1, 3, 4).reshape(g * g, p * p * c), g


def tokenize_views(model, views, condition=None, poses=None):
    """Patch-embed every view; calibrated tokens get their pose embedding, the
    condition image gets the zero embedding and the condition branch tag.

    ``views`` is a :class:`~mvrecon.mvgrid.ViewSet` or a sequence of images
    (then ``poses`` must be given). The condition image is resized to the view
    resolution when needed.
    """
    cfg, prm = model.config, model.params
    images = getattr(views, "images", views)
    poses = getattr(views, "poses", poses)
    if poses is None or len(poses) != len(images):
        raise SizeError("every calibrated view needs a pose")
    res = np.shape(images[0])[0]
    for img in images:
        if np.shape(img)[:2] != (res, res):
            raise SizeError(f"views must be square and equal-sized, got {np.shape(img)[:2]}")
    if res % cfg.patch:
        raise SizeError(f"view size {res} is not a multiple of patch {cfg.patch}")

    feats, embs, branches, index = [], [], [], []

    def _add(img, emb, tag, view_id):
        tokens, g = _patchify(_as_float_image(img)[..., :3], cfg.patch)
        x = tokens @ prm["patch_w"] + prm["patch_b"] + model.pos_embedding(g)
        x = x + emb @ prm["cam_w"] + prm["branch"][tag]
        feats.append(x)
        embs.append(np.broadcast_to(emb, (len(x), len(emb))))
        branches.append(np.full(len(x), tag, dtype=np.int64))
        index.append(np.full(len(x), view_id, dtype=np.int64))

    for i, (img, pose) in enumerate(zip(images, poses)):
        _add(img, camera_embedding(pose, cfg.embed_dim), CALIBRATED, i)
    if condition is not None:
        cond = np.asarray(condition)
        if cond.shape[0] != cond.shape[1]:
            raise SizeError(f"condition image must be square, got {cond.shape[:2]}")
        if cond.shape[0] != res:
            cond = resize_image(cond, res)
        _add(cond, camera_embedding(None, cfg.embed_dim), CONDITION, len(images))

    return TokenSequence(
        np.concatenate(feats),
        np.concatenate(embs).copy(),
        np.concatenate(branches),
        np.concatenate(index),
    )


def _layer_norm(x, eps=1e-6):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3)))


def _softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model, tokens, stats=None, chunk=2048):
    """Triplane queries cross-attend to all tokens and are projected to a :class:`TriplaneLow`.

    When ``stats`` is a dict it receives ``attn_rowsum_err``: the largest
    deviation of any attention row sum from 1, per block.
    """
    cfg, prm = model.config, model.params
    if len(tokens) == 0:
        raise DomainError("cannot reconstruct from an empty token sequence")
    if tokens.features.shape[1] != cfg.width:
        raise SizeError(f"token width {tokens.features.shape[1]} != model width {cfg.width}")
    kv = _layer_norm(tokens.features)
    q_all = prm["queries"].copy()
    nh, hd = cfg.heads, cfg.width // cfg.heads
    errs = []
    for b in range(cfg.blocks):
        k = (kv @ prm[f"b{b}.wk"]).reshape(-1, nh, hd).transpose(1, 0, 2)
        v = (kv @ prm[f"b{b}.wv"]).reshape(-1, nh, hd).transpose(1, 0, 2)
        err = 0.0
        for s in range(0, len(q_all), chunk):
            x = q_all[s:s + chunk]
            q = (_layer_norm(x) @ prm[f"b{b}.wq"]).reshape(-1, nh, hd).transpose(1, 0, 2)
            attn = _softmax(q @ k.transpose(0, 2, 1) / np.sqrt(hd))
            err = max(err, float(np.abs(attn.sum(axis=-1) - 1.0).max()))
            o = (attn @ v).transpose(1, 0, 2).reshape(len(x), cfg.width)
            x = x + o @ prm[f"b{b}.wo"]
            x = x + _gelu(_layer_norm(x) @ prm[f"b{b}.mlp1"]) @ prm[f"b{b}.mlp2"]
            q_all[s:s + chunk] = x
        errs.append(err)
    if stats is not None:
        stats["attn_rowsum_err"] = errs
    out = _layer_norm(q_all) @ prm["out_w"] + prm["out_b"]
    r = cfg.plane_res
    return TriplaneLow(out.reshape(3, r, r, cfg.low_channels))


def reconstruct_learned(views, condition, model, unpatchify_weights, decoder, resolution=64, sphere_prior=None):
    """tokenize -> forward -> unpatchify -> dense SDF grid."""
    tokens = tokenize_views(model, views, condition)
    high = unpatchify(forward(model, tokens), unpatchify_weights)
    return field_from_triplane(high, decoder, resolution, sphere_prior=sphere_prior)


def save_model(path, model):
    meta = {"kind": "recon_model", "seed": model.seed, "config": model.config.__dict__}
    binio.save_tensors(path, model.params, meta=meta)


def load_model(path):
    tensors, meta = binio.load_tensors(path)
    if meta.get("kind") != "recon_model":
        raise ValueError(f"{path}: not a reconstruction model")
    params = {k: v.astype(np.float64) for k, v in tensors.items()}
    return ReconModel(ReconConfig(**meta["config"]), int(meta["seed"]), params)


# -- space carving ---------------------------------------------------------


@dataclass(frozen=True)
class CarveConfig:
    resolution: int = 96
    threshold: float = 0.5
    truncation: float = 4.0  # in voxel widths
    bounds: tuple = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))

    def __post_init__(self):
        if self.resolution < 16:
            raise DomainError(f"resolution must be >= 16, got {self.resolution}")
        if not 0 < self.threshold < 1:
            raise DomainError(f"threshold must lie in (0, 1), got {self.threshold}")


def _mask_values(mask):
    m = np.asarray(mask)
    if m.dtype == bool:
        return m.astype(np.float64)
    if np.issubdtype(m.dtype, np.integer):
        return m.astype(np.float64) / 255.0
    return m.astype(np.float64)


def view_occupancy(points, mask, pose, threshold=0.5):
    """Which ``points`` ``(N, 3)`` project inside the silhouette ``mask`` seen from ``pose``."""
    m = _mask_values(mask)
    h, w = m.shape
    mats = pose_to_matrices(pose, w, h)
    uv, depth = mats.project(points)
    u = np.floor(uv[:, 0])
    v = np.floor(uv[:, 1])
    ok = (depth > 0) & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    inside = np.zeros(len(points), dtype=bool)
    ui, vi = u[ok].astype(np.int64), v[ok].astype(np.int64)
    inside[ok] = m[vi, ui] > threshold
    return inside


def carve_occupancy(masks, poses, cfg=None):
    """Visual hull on the voxel lattice: occupied iff inside every silhouette."""
    cfg = CarveConfig() if cfg is None else cfg
    pts = grid_points(cfg.resolution, cfg.bounds)
    shape = pts.shape[:3]
    pts = pts.reshape(-1, 3)
    occ = np.ones(len(pts), dtype=bool)
    for mask, pose in zip(masks, poses):
        idx = np.flatnonzero(occ)
        occ[idx] = view_occupancy(pts[idx], mask, pose, cfg.threshold)
    return occ.reshape(shape)


def occupancy_to_sdf(occ, spacing, truncation):
    """Signed distance from a binary occupancy via exact Euclidean distance transforms.

    Negative inside; the zero crossing falls midway between boundary voxels.
    """
    outside = distance_transform_edt(~occ, sampling=spacing)
    inside = distance_transform_edt(occ, sampling=spacing)
    sdf = outside - inside
    limit = truncation * float(np.max(spacing))
    return np.clip(sdf, -limit, limit)


def carve(views, condition=None, cfg=None):
    """Carve silhouettes into an :class:`SdfGrid`.

    ``views`` is a ViewSet (its masks, or masks derived from its images on the
    white background). ``condition`` is an optional ``(mask_or_image, pose)`` pair.
    """
    cfg = CarveConfig() if cfg is None else cfg
    masks = views.masks if views.masks is not None else tuple(silhouette_from_image(i) for i in views.images)
    masks, poses = list(masks), list(views.poses)
    if condition is not None:
        cmask, cpose = condition
        cmask = np.asarray(cmask)
        if cmask.ndim == 3:
            cmask = silhouette_from_image(cmask)
        masks.append(cmask)
        poses.append(cpose)
    occ = carve_occupancy(masks, poses, cfg)
    if not occ.any():
        raise EmptyHullError("no voxel survived carving")
    spacing = (np.array(cfg.bounds[1]) - np.array(cfg.bounds[0])) / (cfg.resolution - 1)
    return SdfGrid(occupancy_to_sdf(occ, spacing, cfg.truncation), cfg.bounds)
