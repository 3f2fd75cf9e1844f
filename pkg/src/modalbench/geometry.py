"""Random convex shapes, Delaunay meshing and occupancy rasterization.

All coordinates live in the unit square (meters). Shapes are counter-clockwise
convex polygons; meshes triangulate the polygon's boundary vertices plus
uniformly sampled interior points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.spatial

from .errors import InvalidArgumentError

GEOM_TOL = 1e-12
GRID_SIZE = 64


def cross2(a, b):
    """z-component of the cross product of stacked 2D vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class ConvexShape:
    """Counter-clockwise convex polygon inside [0, 1]^2."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise InvalidArgumentError("need at least 3 (x, y) vertices")
        if v.min() < -GEOM_TOL or v.max() > 1.0 + GEOM_TOL:
            raise InvalidArgumentError("vertices must lie inside the unit square")
        edges = np.roll(v, -1, axis=0) - v
        cross = cross2(edges, np.roll(edges, -1, axis=0))
        if np.any(cross < -GEOM_TOL):
            raise InvalidArgumentError("vertices are not counter-clockwise convex")
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        if d2.min() <= (1e-9) ** 2:
            raise InvalidArgumentError("duplicate vertices (pairwise distance <= 1e-9)")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def area(self) -> float:
        return shoelace_area(self.vertices)

    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = cross.sum() / 2.0
        return ((v + w) * cross[:, None]).sum(axis=0) / (6.0 * a)


def shoelace_area(vertices) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    w = np.roll(v, -1, axis=0)
    return float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]) / 2.0)


def contains(shape: ConvexShape, point, tol: float = GEOM_TOL) -> bool:
    """Half-plane test against every edge; boundary counts as inside."""
    return bool(contains_many(shape, np.asarray(point, dtype=np.float64)[None, :], tol)[0])


def contains_many(shape: ConvexShape, points, tol: float = GEOM_TOL) -> np.ndarray:
    v = shape.vertices
    e = np.roll(v, -1, axis=0) - v
    d = np.asarray(points, dtype=np.float64)[:, None, :] - v[None, :, :]
    cross = e[None, :, 0] * d[:, :, 1] - e[None, :, 1] * d[:, :, 0]
    return np.all(cross >= -tol, axis=1)


def gen_convex_shape(n_boundary: int, seed: int) -> ConvexShape:
    """Random convex polygon with n_boundary vertices (Valtr's construction).

    Scaled and centered, aspect ratio preserved, to fit [0.05, 0.95]^2.
    Deterministic for a fixed (n_boundary, seed).
    """
    if n_boundary < 3:
        raise InvalidArgumentError(f"n_boundary must be >= 3, got {n_boundary}")
    rng = np.random.default_rng(seed)
    while True:
        verts = _valtr(n_boundary, rng)
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        scale = 0.9 / max(hi - lo)
        verts = (verts - (lo + hi) / 2.0) * scale + 0.5
        d2 = np.sum((verts[:, None, :] - verts[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        if d2.min() > (1e-9) ** 2:
            return ConvexShape(verts)


def _valtr(n: int, rng) -> np.ndarray:
    """One draw of Valtr's random convex polygon from n uniform x/y values."""
    def deltas(vals):
        vals = np.sort(vals)
        mid = vals[1:-1]
        side = rng.random(n - 2) < 0.5
        up = np.concatenate([[vals[0]], mid[side], [vals[-1]]])
        down = np.concatenate([[vals[0]], mid[~side], [vals[-1]]])
        return np.concatenate([np.diff(up), -np.diff(down)])

    dx = deltas(rng.random(n))
    dy = deltas(rng.random(n))
    rng.shuffle(dy)
    order = np.argsort(np.arctan2(dy, dx))
    return np.cumsum(np.stack([dx[order], dy[order]], axis=1), axis=0)


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh with consistently CCW-oriented faces."""

    V: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=np.float64)
        F = np.asarray(self.F, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 2:
            raise InvalidArgumentError("V must be (n, 2)")
        if F.ndim != 2 or F.shape[1] != 3:
            raise InvalidArgumentError("F must be (m, 3)")
        if F.min() < 0 or F.max() >= V.shape[0]:
            raise InvalidArgumentError("face index out of range")
        if np.any(triangle_areas(V, F) <= 0):
            raise InvalidArgumentError("every triangle must have positive signed area")
        V.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "F", F)

    @property
    def n_vertices(self) -> int:
        return self.V.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.F.shape[0]

    @property
    def edges(self) -> np.ndarray:
        e = np.concatenate([self.F[:, [0, 1]], self.F[:, [1, 2]], self.F[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def areas(self) -> np.ndarray:
        return triangle_areas(self.V, self.F)


def triangle_areas(V, F) -> np.ndarray:
    p = V[F]
    return 0.5 * cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def delaunay(points) -> TriMesh:
    """Delaunay triangulation of a 2D point set, faces oriented CCW."""
    points = np.asarray(points, dtype=np.float64)
    tri = scipy.spatial.Delaunay(points)
    F = tri.simplices.astype(np.int64)
    areas = triangle_areas(points, F)
    flip = areas < 0
    F[flip] = F[flip][:, [0, 2, 1]]
    return TriMesh(points, F)


def triangulate(shape: ConvexShape, target_triangles: int, seed: int) -> TriMesh:
    """Delaunay mesh over the polygon's vertices plus random interior points.

    Interior point count is chosen so the triangle count 2i + h - 2 lands as
    close to the target as parity allows.
    """
    if not 4 <= target_triangles <= 4096:
        raise InvalidArgumentError(f"target_triangles must be in [4, 4096], got {target_triangles}")
    h = shape.n_vertices
    n_interior = max(0, round((target_triangles - h + 2) / 2))
    rng = np.random.default_rng(seed)
    points = [shape.vertices]
    if n_interior:
        lo, hi = shape.vertices.min(axis=0), shape.vertices.max(axis=0)
        got = 0
        while got < n_interior:
            cand = lo + (hi - lo) * rng.random((4 * (n_interior - got) + 16, 2))
            keep = contains_many(shape, cand, tol=-1e-9)  # strictly inside
            cand = cand[keep][: n_interior - got]
            if len(cand):
                points.append(cand)
                got += len(cand)
    return delaunay(np.concatenate(points, axis=0))


@dataclass(frozen=True)
class OccupancyGrid:
    """64x64 occupancy raster; cells[iy, ix] with row 0 at y-min."""

    cells: np.ndarray
    resolution: float = 1.0 / GRID_SIZE

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != (GRID_SIZE, GRID_SIZE):
            raise InvalidArgumentError(f"grid must be {GRID_SIZE}x{GRID_SIZE}")
        if not cells.any():
            raise InvalidArgumentError("grid must contain at least one true cell")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def pack(self) -> bytes:
        """Row-major bit-packed blob (512 bytes), MSB-first within each byte."""
        return np.packbits(self.cells, bitorder="big").tobytes()

    @classmethod
    def unpack(cls, blob: bytes) -> "OccupancyGrid":
        if len(blob) != GRID_SIZE * GRID_SIZE // 8:
            raise InvalidArgumentError("occupancy blob must be 512 bytes")
        bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8), bitorder="big")
        return cls(bits.reshape(GRID_SIZE, GRID_SIZE).astype(bool))


def rasterize(shape: ConvexShape) -> OccupancyGrid:
    """Center-point sampling on the 64x64 grid.

    If no cell center falls inside (sub-cell shapes), the single cell whose
    center is nearest the centroid is set, so the grid is never empty.
    """
    centers = (np.arange(GRID_SIZE) + 0.5) / GRID_SIZE
    xx, yy = np.meshgrid(centers, centers)  # rows indexed by y
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    cells = contains_many(shape, pts).reshape(GRID_SIZE, GRID_SIZE)
    if not cells.any():
        d2 = np.sum((pts - shape.centroid()) ** 2, axis=1)
        cells = cells.copy()
        cells.ravel()[np.argmin(d2)] = True
    return OccupancyGrid(cells)


def shape_to_dict(shape: ConvexShape, seed: int | None = None, n_boundary: int | None = None) -> dict:
    return {
        "vertices": [[float(x), float(y)] for x, y in shape.vertices],
        "seed": -1 if seed is None else int(seed),
        "n_boundary": shape.n_vertices if n_boundary is None else int(n_boundary),
    }


def shape_from_dict(d: dict) -> ConvexShape:
    return ConvexShape(np.asarray(d["vertices"], dtype=np.float64))


def save_shape(path, shape: ConvexShape, seed: int | None = None) -> None:
    with open(path, "w") as f:
        json.dump(shape_to_dict(shape, seed), f)


def load_shape(path) -> ConvexShape:
    with open(path) as f:
        return shape_from_dict(json.load(f))


def mesh_to_dict(mesh: TriMesh) -> dict:
    return {
        "V": [[float(x), float(y)] for x, y in mesh.V],
        "F": [[int(i) for i in face] for face in mesh.F],
    }


def mesh_from_dict(d: dict) -> TriMesh:
    return TriMesh(np.asarray(d["V"], dtype=np.float64), np.asarray(d["F"], dtype=np.int64))
