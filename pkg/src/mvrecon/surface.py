"""Scalar grids, marching-cubes extraction, mesh hygiene and surface sampling."""
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _mc_table, binio
from .errors import DomainError, SizeError

DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class SdfGrid:
    """Signed distances sampled on a regular lattice.

    Sample ``(i, j, k)`` sits at ``lo + (i, j, k) * spacing`` with
    ``spacing = (hi - lo) / (n - 1)``, so the outermost samples lie on the bounds.
    """

    values: np.ndarray
    bounds: tuple = ((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 2:
            raise SizeError(f"grid needs >= 2 samples per axis, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("grid values must be finite")
        lo, hi = (tuple(float(x) for x in b) for b in self.bounds)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", (lo, hi))

    @property
    def resolution(self):
        return self.values.shape

    @property
    def spacing(self):
        lo, hi = np.array(self.bounds)
        return (hi - lo) / (np.array(self.values.shape) - 1)

    def axes(self):
        lo, hi = self.bounds
        return [np.linspace(lo[k], hi[k], self.values.shape[k]) for k in range(3)]

    def points(self):
        """All sample positions, shape ``values.shape + (3,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)


def grid_points(resolution, bounds=((-1.0,) * 3, (1.0,) * 3)):
    n = (resolution,) * 3 if np.isscalar(resolution) else tuple(resolution)
    lo, hi = bounds
    axes = [np.linspace(lo[k], hi[k], n[k]) for k in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def sdf_grid_from_function(fn, resolution, bounds=((-1.0,) * 3, (1.0,) * 3)):
    pts = grid_points(resolution, bounds)
    return SdfGrid(np.asarray(fn(pts.reshape(-1, 3))).reshape(pts.shape[:3]), bounds)


def save_grid(path, grid):
    binio.save_tensors(path, {"values": grid.values}, meta={"kind": "sdf_grid", "bounds": grid.bounds})


def load_grid(path):
    tensors, meta = binio.load_tensors(path)
    if meta.get("kind") != "sdf_grid":
        raise ValueError(f"{path}: not an SDF grid")
    return SdfGrid(tensors["values"].astype(np.float64), tuple(tuple(b) for b in meta["bounds"]))


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise DomainError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def is_empty(self):
        return len(self.faces) == 0

    def face_areas(self):
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def signed_volume(self):
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise DomainError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


# -- marching cubes --------------------------------------------------------

_CORNERS = np.array(_mc_table.CORNERS, dtype=np.int64)
_EDGE_CORNERS = np.array(_mc_table.EDGES, dtype=np.int64)
# the stored table winds triangles with normals pointing toward the inside; reverse them
_TRI_TABLE = np.full((256, 16), -1, dtype=np.int64)
for _k, _row in enumerate(_mc_table.TRIANGLES):
    _tris = np.array(_row, dtype=np.int64).reshape(-1, 3)[:, ::-1]
    _TRI_TABLE[_k, : _tris.size] = _tris.reshape(-1)
_N_TRIS = (_TRI_TABLE >= 0).sum(axis=1) // 3


def _edge_keys():
    """Per local edge: (lower corner offset, axis) so global ids can be formed."""
    lower = []
    axis = []
    for a, b in _EDGE_CORNERS:
        ca, cb = _CORNERS[a], _CORNERS[b]
        lower.append(np.minimum(ca, cb))
        axis.append(int(np.flatnonzero(ca != cb)[0]))
    return np.array(lower), np.array(axis)


_EDGE_LOWER, _EDGE_AXIS = _edge_keys()


def marching_cubes(grid, iso=0.0):
    """Extract the ``iso`` level set as a triangle mesh in world coordinates.

    Samples with value ``<= iso`` count as inside. Triangles are wound so their
    normals point toward increasing values (outward for an SDF). Vertices on
    shared cell edges are welded, so closed surfaces come out watertight.
    """
    v = grid.values
    nx, ny, nz = v.shape
    inside = v <= iso
    cube = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for bit, (dx, dy, dz) in enumerate(_CORNERS):
        cube |= inside[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int64) << bit
    cells = np.argwhere((cube != 0) & (cube != 255))
    if len(cells) == 0:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    codes = cube[cells[:, 0], cells[:, 1], cells[:, 2]]

    counts = _N_TRIS[codes]
    cell_of_tri = np.repeat(np.arange(len(cells)), counts)
    slot = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    rows = _TRI_TABLE[codes[cell_of_tri]]
    local = np.stack([rows[np.arange(len(slot)), 3 * slot + k] for k in range(3)], axis=1)

    # global edge id = 3 * flat index of the lower lattice point + axis
    base = cells[cell_of_tri][:, None, :] + _EDGE_LOWER[local]
    flat = np.ravel_multi_index((base[..., 0], base[..., 1], base[..., 2]), v.shape)
    edge_id = 3 * flat + _EDGE_AXIS[local]

    uniq, inverse = np.unique(edge_id.reshape(-1), return_inverse=True)
    p_idx = np.array(np.unravel_index(uniq // 3, v.shape)).T
    axis = uniq % 3
    q_idx = p_idx.copy()
    q_idx[np.arange(len(q_idx)), axis] += 1
    va = v[p_idx[:, 0], p_idx[:, 1], p_idx[:, 2]]
    vb = v[q_idx[:, 0], q_idx[:, 1], q_idx[:, 2]]
    t = (iso - va) / (vb - va)

    lo = np.array(grid.bounds[0])
    h = grid.spacing
    pos = lo + p_idx * h
    pos[np.arange(len(pos)), axis] += t * h[axis]
    faces = inverse.reshape(-1, 3)
    return _clean(pos, faces)


def _clean(vertices, faces):
    """Weld coincident vertices, drop degenerate triangles and unused vertices."""
    uniq, inv = np.unique(vertices, axis=0, return_inverse=True)
    faces = inv.reshape(-1)[faces]
    keep = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[keep]
    if len(faces):
        areas = Mesh(uniq, faces).face_areas()
        faces = faces[areas >= DEGENERATE_AREA]
    used, remap = np.unique(faces.reshape(-1), return_inverse=True)
    return Mesh(uniq[used], remap.reshape(-1, 3))


# -- hygiene ---------------------------------------------------------------


def _undirected_edges(faces):
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.sort(e, axis=1)


def count_components(mesh):
    """Connected components of the face graph (faces sharing a vertex)."""
    if mesh.is_empty:
        return 0
    f = mesh.faces
    nf, nv = len(f), len(mesh.vertices)
    rows = np.repeat(np.arange(nf), 3)
    incidence = coo_matrix((np.ones(3 * nf), (rows, f.reshape(-1))), shape=(nf, nv)).tocsr()
    adjacency = incidence @ incidence.T
    n, _ = connected_components(adjacency, directed=False)
    return int(n)


def is_watertight(mesh):
    """True iff every undirected edge is used by exactly two triangles.

    Returns ``(ok, diagnostics)``.
    """
    if mesh.is_empty:
        return False, {"edges": 0, "boundary_edges": 0, "nonmanifold_edges": 0, "components": 0}
    _, counts = np.unique(_undirected_edges(mesh.faces), axis=0, return_counts=True)
    diag = {
        "edges": int(len(counts)),
        "boundary_edges": int((counts == 1).sum()),
        "nonmanifold_edges": int((counts > 2).sum()),
        "components": count_components(mesh),
    }
    return bool(np.all(counts == 2)), diag


def normalize_to_unit_sphere(mesh):
    """Center on the vertex centroid and scale so the farthest vertex has radius 1.

    Returns ``(mesh, scale, center)`` with ``normalized = (v - center) * scale``.
    """
    if len(mesh.vertices) == 0:
        raise DomainError("cannot normalize an empty mesh")
    center = mesh.vertices.mean(axis=0)
    shifted = mesh.vertices - center
    radius = np.linalg.norm(shifted, axis=1).max()
    if radius == 0:
        raise DomainError("mesh collapses to a point")
    scale = 1.0 / radius
    return Mesh(shifted * scale, mesh.faces), scale, center


def sample_surface(mesh, n=10000, rng=None):
    """Area-weighted uniform samples on the mesh surface, with face normals."""
    rng = np.random.default_rng() if rng is None else rng
    if mesh.is_empty:
        raise DomainError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise DomainError("mesh has zero surface area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.faces[tri, k]] for k in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    normals = np.cross(b - a, c - a)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts, normals)


# -- OBJ -------------------------------------------------------------------


def write_obj(path, mesh):
    with open(path, "w", encoding="ascii") as f:
        for x, y, z in mesh.vertices:
            f.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.faces + 1:
            f.write(f"f {a} {b} {c}\n")


def read_obj(path):
    """Read vertices and faces; polygons are fan-triangulated, texture/normal refs ignored."""
    verts, faces = [], []
    with open(path, encoding="ascii") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return Mesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
