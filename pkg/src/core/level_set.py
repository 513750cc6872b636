"""
Module for building a signed distance field of the body surface on a Cartesian grid
and thickening it to contain the garment
"""
import logging
import time
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.sparse as spsparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from src.core.errors import OpenMeshError, OutOfBoundsError
from src.core.geometry import TriangleMesh, closest_points_on_triangles

logger = logging.getLogger(__name__)

# Number of nearest triangle centroids checked before falling back to brute force
NEAREST_CANDIDATES = 16
# Work size (node x triangle pairs) per vectorized brute-force chunk
BRUTE_FORCE_CHUNK = 2_000_000
PARITY_TIE_TOLERANCE = 1e-10
MAX_JITTER_ATTEMPTS = 6
JITTER_DIRECTION = np.array([0.6180339887498949, 0.4142135623730951])


@dataclass(frozen=True)
class ScalarGrid:
    """Node-sampled scalar field on a regular grid; values are signed distances (cm, negative inside)"""

    origin: np.ndarray
    dx: float
    dims: Tuple[int, int, int]
    values: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        dims = tuple(int(d) for d in self.dims)
        values = np.asarray(self.values, dtype=np.float64).reshape(dims)
        if any(d < 2 for d in dims):
            raise ValueError(f"Grid needs at least 2 nodes per axis, got {dims}")
        if not self.dx > 0:
            raise ValueError(f"Grid spacing must be positive, got {self.dx}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + (np.array(self.dims) - 1) * self.dx

    def node_positions(self) -> np.ndarray:
        axes = [self.origin[a] + np.arange(self.dims[a]) * self.dx for a in range(3)]
        xx, yy, zz = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])


def _triangle_components(mesh: TriangleMesh) -> np.ndarray:
    """Connected component label per triangle"""
    tris = mesh.triangles
    n = mesh.n_vertices
    rows = np.concatenate([tris[:, 0], tris[:, 1], tris[:, 2]])
    cols = np.concatenate([tris[:, 1], tris[:, 2], tris[:, 0]])
    adjacency = spsparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, vertex_labels = csgraph.connected_components(adjacency, directed=False)
    return vertex_labels[tris[:, 0]]


def _brute_force_nearest(points: np.ndarray, corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_tri = len(corners)
    chunk = max(1, BRUTE_FORCE_CHUNK // n_tri)
    dist = np.empty(len(points))
    tri = np.empty(len(points), dtype=np.int64)
    bary = np.empty((len(points), 3))
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        paired_points = np.repeat(block, n_tri, axis=0)
        paired_tris = np.tile(corners, (len(block), 1, 1))
        closest, weights = closest_points_on_triangles(paired_points, paired_tris)
        d = np.linalg.norm(paired_points - closest, axis=1).reshape(len(block), n_tri)
        best = np.argmin(d, axis=1)
        rows = np.arange(len(block))
        dist[start:start + chunk] = d[rows, best]
        tri[start:start + chunk] = best
        bary[start:start + chunk] = weights.reshape(len(block), n_tri, 3)[rows, best]
    return dist, tri, bary


def nearest_triangles(points: np.ndarray, corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact closest triangle of a triangle soup for every point

    Checks the nearest triangle centroids first and certifies the result with the
    largest centroid-to-corner radius; uncertified points fall back to a brute-force scan.

    Returns:
        (distances (N,), triangle ids (N,), barycentric weights of the closest point (N, 3))
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    corners = np.asarray(corners, dtype=np.float64)
    k = min(NEAREST_CANDIDATES, len(corners))
    if k == len(corners):
        return _brute_force_nearest(points, corners)

    centroids = corners.mean(axis=1)
    radius = np.linalg.norm(corners - centroids[:, None, :], axis=2).max()
    tree = cKDTree(centroids)
    centroid_dist, idx = tree.query(points, k=k)
    paired_points = np.repeat(points, k, axis=0)
    closest, weights = closest_points_on_triangles(paired_points, corners[idx.ravel()])
    d = np.linalg.norm(paired_points - closest, axis=1).reshape(len(points), k)
    best = np.argmin(d, axis=1)
    rows = np.arange(len(points))
    dist = d[rows, best]
    tri = idx[rows, best]
    bary = weights.reshape(len(points), k, 3)[rows, best]

    uncertified = centroid_dist[:, -1] - radius < dist
    if np.any(uncertified):
        dist[uncertified], tri[uncertified], bary[uncertified] = _brute_force_nearest(points[uncertified], corners)
    return dist, tri, bary


def unsigned_distance(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Exact distance from points to a triangle soup"""
    return nearest_triangles(points, corners)[0]


def _line_crossings(lines_yz: np.ndarray, corners: np.ndarray):
    """
    Intersections of +x lines with triangles projected onto the yz plane

    Returns:
        (hit x per (line, triangle) or NaN, tie mask per line)
    """
    a = corners[:, 0, 1:]
    b = corners[:, 1, 1:]
    c = corners[:, 2, 1:]
    ab = b - a
    ac = c - a
    det = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
    usable = np.abs(det) > 1e-14

    q = lines_yz[:, None, :] - a[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = (q[..., 0] * ac[:, 1] - q[..., 1] * ac[:, 0]) / det
        l2 = (ab[:, 0] * q[..., 1] - ab[:, 1] * q[..., 0]) / det
    l0 = 1.0 - l1 - l2
    weights_min = np.minimum(np.minimum(l0, l1), l2)
    weights_min = np.where(usable[None, :], weights_min, -np.inf)

    inside = weights_min > PARITY_TIE_TOLERANCE
    ties = np.any(np.abs(weights_min) <= PARITY_TIE_TOLERANCE, axis=1)
    x = l0 * corners[:, 0, 0] + l1 * corners[:, 1, 0] + l2 * corners[:, 2, 0]
    hits = np.where(inside, x, np.nan)
    return hits, ties


def _chunked_crossings(lines_yz: np.ndarray, corners: np.ndarray):
    step = max(1, BRUTE_FORCE_CHUNK // len(corners))
    parts = [_line_crossings(lines_yz[s:s + step], corners) for s in range(0, len(lines_yz), step)]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _inside_mask(grid_origin: np.ndarray, dx: float, dims, corners: np.ndarray) -> np.ndarray:
    """Inside/outside classification of grid nodes by ray-crossing parity along +x"""
    nx, ny, nz = dims
    ys = grid_origin[1] + np.arange(ny) * dx
    zs = grid_origin[2] + np.arange(nz) * dx
    yy, zz = np.meshgrid(ys, zs, indexing="ij")
    base = np.column_stack([yy.ravel(), zz.ravel()])
    xs = grid_origin[0] + np.arange(nx) * dx

    hits, ties = _chunked_crossings(base, corners)
    attempt = 1
    while np.any(ties):
        if attempt > MAX_JITTER_ATTEMPTS:
            raise OpenMeshError(f"Could not resolve ray/edge ties on {int(ties.sum())} grid lines")
        tied = np.nonzero(ties)[0]
        jittered = base[tied] + JITTER_DIRECTION * dx * 1e-6 * attempt
        new_hits, new_ties = _chunked_crossings(jittered, corners)
        hits[tied] = new_hits
        ties[tied] = new_ties
        attempt += 1

    inside = np.zeros((nx, ny * nz), dtype=bool)
    for line in range(len(base)):
        line_hits = np.sort(hits[line][~np.isnan(hits[line])])
        if len(line_hits) % 2 == 1:
            raise OpenMeshError("Odd number of surface crossings; body mesh is not closed")
        if len(line_hits) == 0:
            continue
        beyond = len(line_hits) - np.searchsorted(line_hits, xs, side="right")
        inside[:, line] = beyond % 2 == 1
    return inside.reshape(nx, ny, nz)


def build_level_set(body: TriangleMesh, dx: float, padding: float) -> ScalarGrid:
    """
    Signed distance field of a closed body surface

    Each connected component of the body mesh is treated as a closed solid and the
    field is their union (pointwise minimum), so overlapping limbs are handled.

    Args:
        body: Closed, consistently oriented triangle mesh (may have several components)
        dx: Grid spacing (cm)
        padding: Margin added around the body bounding box (cm)

    Returns:
        ScalarGrid with exact point-triangle distances signed by ray parity

    Raises:
        OpenMeshError: if sign determination is inconsistent
    """
    start = time.perf_counter()
    lower = body.vertices.min(axis=0) - padding
    upper = body.vertices.max(axis=0) + padding
    dims = tuple(int(np.ceil((upper[a] - lower[a]) / dx)) + 1 for a in range(3))
    grid_shape = ScalarGrid(origin=lower, dx=dx, dims=dims, values=np.zeros(dims))
    nodes = grid_shape.node_positions()

    labels = _triangle_components(body)
    phi = np.full(len(nodes), np.inf)
    for component in np.unique(labels):
        corners = body.vertices[body.triangles[labels == component]]
        dist = unsigned_distance(nodes, corners)
        inside = _inside_mask(lower, dx, dims, corners).ravel()
        phi = np.minimum(phi, np.where(inside, -dist, dist))

    logger.info(
        f"Level set built: dims={dims}, dx={dx}, components={len(np.unique(labels))}, "
        f"inside nodes={int((phi < 0).sum())} ({time.perf_counter() - start:.2f}s)"
    )
    return ScalarGrid(origin=lower, dx=dx, dims=dims, values=phi.reshape(dims))


def thicken(grid: ScalarGrid, c: float) -> ScalarGrid:
    """Shift the zero isocontour outward by c: values' = values - c"""
    if c < 0:
        raise ValueError(f"Thickening constant must be non-negative, got {c}")
    return ScalarGrid(origin=grid.origin, dx=grid.dx, dims=grid.dims, values=grid.values - c)


def sample_many(grid: ScalarGrid, points: np.ndarray) -> np.ndarray:
    """
    Trilinear interpolation of node values

    Raises:
        OutOfBoundsError: if any point lies outside the grid
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    local = (points - grid.origin) / grid.dx
    dims = np.array(grid.dims)
    tol = 1e-9
    if np.any(local < -tol) or np.any(local > dims - 1 + tol):
        raise OutOfBoundsError("Sample point outside grid bounds")
    local = np.clip(local, 0.0, dims - 1)
    cell = np.minimum(np.floor(local).astype(np.int64), dims - 2)
    f = local - cell
    i, j, k = cell[:, 0], cell[:, 1], cell[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    v = grid.values
    c00 = v[i, j, k] * (1 - fx) + v[i + 1, j, k] * fx
    c10 = v[i, j + 1, k] * (1 - fx) + v[i + 1, j + 1, k] * fx
    c01 = v[i, j, k + 1] * (1 - fx) + v[i + 1, j, k + 1] * fx
    c11 = v[i, j + 1, k + 1] * (1 - fx) + v[i + 1, j + 1, k + 1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def sample(grid: ScalarGrid, p: np.ndarray) -> float:
    return float(sample_many(grid, np.asarray(p).reshape(1, 3))[0])
