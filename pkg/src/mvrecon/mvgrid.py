"""3x2 tiled multi-view grid codec, resampling and PNG I/O.

Tiles are laid out row-major in ascending azimuth::

    row 0:   0deg   60deg
    row 1: 120deg  180deg
    row 2: 240deg  300deg
"""
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .camera import orbit_poses
from .errors import LayoutError, SizeError

ROWS, COLS = 3, 2
VARIANT_TILES = {"lite": 320, "std": 512}


def tile_slot(index):
    """Grid ``(row, col)`` of view ``index`` in orbit order."""
    return divmod(index, COLS)


@dataclass(frozen=True)
class ViewSet:
    """Six square RGB views with their orbit poses and optional silhouettes."""

    images: tuple
    poses: tuple = field(default_factory=orbit_poses)
    masks: tuple = None

    def __post_init__(self):
        if len(self.images) != ROWS * COLS or len(self.poses) != ROWS * COLS:
            raise SizeError(f"a view set holds exactly {ROWS * COLS} views")
        shapes = {np.shape(img) for img in self.images}
        if len(shapes) != 1:
            raise SizeError(f"views differ in size: {sorted(shapes)}")
        h, w = next(iter(shapes))[:2]
        if h != w:
            raise SizeError(f"views must be square, got {h}x{w}")
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "poses", tuple(self.poses))
        if self.masks is not None:
            object.__setattr__(self, "masks", tuple(self.masks))

    @property
    def resolution(self):
        return self.images[0].shape[0]


@dataclass(frozen=True)
class ViewGrid:
    pixels: np.ndarray
    tile: int

    def __post_init__(self):
        h, w = self.pixels.shape[:2]
        if h != ROWS * self.tile or w != COLS * self.tile:
            raise LayoutError(f"grid {h}x{w} does not match tile {self.tile}")


def assemble(views):
    """Tile a :class:`ViewSet` into a ``(3 tile) x (2 tile)`` image."""
    t = views.resolution
    first = views.images[0]
    pixels = np.empty((ROWS * t, COLS * t) + first.shape[2:], dtype=first.dtype)
    for i, img in enumerate(views.images):
        r, c = tile_slot(i)
        pixels[r * t:(r + 1) * t, c * t:(c + 1) * t] = img
    return ViewGrid(pixels, t)


def split(grid):
    """Inverse of :func:`assemble`; accepts a :class:`ViewGrid` or a bare image."""
    pixels = grid.pixels if isinstance(grid, ViewGrid) else np.asarray(grid)
    h, w = pixels.shape[:2]
    if h % ROWS or w % COLS or h // ROWS != w // COLS:
        raise LayoutError(f"{h}x{w} image is not a 3x2 grid of square tiles")
    t = h // ROWS
    images = []
    for i in range(ROWS * COLS):
        r, c = tile_slot(i)
        images.append(pixels[r * t:(r + 1) * t, c * t:(c + 1) * t].copy())
    return ViewSet(tuple(images), orbit_poses())


def resize_image(img, target):
    """Bilinear resize to ``target`` (int for square, or ``(h, w)``) with edge clamping.

    Sample positions use pixel centers. Integer inputs are rounded back to their dtype.
    """
    img = np.asarray(img)
    th, tw = (target, target) if np.isscalar(target) else target
    h, w = img.shape[:2]
    if (th, tw) == (h, w):
        return img.copy()
    if th <= 0 or tw <= 0:
        raise SizeError(f"target size must be positive, got {th}x{tw}")
    src = img.astype(np.float64)

    def _axis(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        i0 = np.floor(pos).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    y0, y1, fy = _axis(th, h)
    x0, x1, fx = _axis(tw, w)
    fy = fy.reshape((-1, 1) + (1,) * (src.ndim - 2))
    fx = fx.reshape((1, -1) + (1,) * (src.ndim - 2))
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(img.dtype)


def silhouette_from_image(img, white_level=250):
    """Foreground mask of an image on a white background."""
    img = np.asarray(img)
    if img.ndim == 2:
        return img < white_level
    return np.any(img[..., :3] < white_level, axis=-1)


def write_png(path, img):
    img = np.asarray(img)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(path)


def read_png(path):
    with Image.open(path) as im:
        if im.mode not in ("RGB", "L"):
            im = im.convert("RGB")
        return np.asarray(im).copy()
