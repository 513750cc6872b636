"""
Module with the foundational geometric types and primitives:
barycentric coordinates, tetrahedron volumes, closed-mesh volume and mesh adjacency.

All lengths are in centimeters.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.core.errors import DegenerateTetError, OpenMeshError, ShapeMismatchError

logger = logging.getLogger(__name__)

# Volumes (cm^3) below this are treated as degenerate
DEGENERACY_FLOOR = 1e-12

FRONT = 0
BACK = 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle mesh with optional per-vertex UV coordinates and front/back side labels"""

    vertices: np.ndarray
    triangles: np.ndarray
    uv: Optional[np.ndarray] = None
    sides: Optional[np.ndarray] = None

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise ValueError("Mesh vertices must be finite")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("Triangle indices out of range")
        object.__setattr__(self, "vertices", _frozen(vertices))
        object.__setattr__(self, "triangles", _frozen(triangles))

        if self.uv is not None:
            uv = np.array(self.uv, dtype=np.float64).reshape(-1, 2)
            if len(uv) != len(vertices):
                raise ShapeMismatchError(f"uv count {len(uv)} != vertex count {len(vertices)}")
            object.__setattr__(self, "uv", _frozen(uv))
        if self.sides is not None:
            sides = np.array(self.sides, dtype=np.int8).reshape(-1)
            if len(sides) != len(vertices):
                raise ShapeMismatchError(f"side label count {len(sides)} != vertex count {len(vertices)}")
            object.__setattr__(self, "sides", _frozen(sides))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same topology and UV atlas, new positions"""
        return TriangleMesh(vertices=vertices, triangles=self.triangles, uv=self.uv, sides=self.sides)

    def edges(self) -> np.ndarray:
        return edge_list(self)


def signed_tet_volume(tet_vertices: np.ndarray) -> float:
    """
    Signed volume of a tetrahedron

    Args:
        tet_vertices: (4, 3) vertex positions

    Returns:
        det([v1-v0, v2-v0, v3-v0]) / 6, positive for positive orientation
    """
    v = np.asarray(tet_vertices, dtype=np.float64)
    return float(np.linalg.det(np.stack([v[1] - v[0], v[2] - v[0], v[3] - v[0]])) / 6.0)


def signed_tet_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Vectorized signed volumes for an (M, 4) index array"""
    v = np.asarray(vertices, dtype=np.float64)[np.asarray(tets)]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    e3 = v[:, 3] - v[:, 0]
    return np.einsum("ij,ij->i", e1, np.cross(e2, e3)) / 6.0


def _finish_weights(partial: np.ndarray) -> np.ndarray:
    # Last weight closes the partition of unity
    partial = np.atleast_2d(partial)
    s = partial[:, 0] + partial[:, 1] + partial[:, 2]
    return np.column_stack([partial, 1.0 - s])


def barycentric_coords(p: np.ndarray, tet_vertices: np.ndarray) -> np.ndarray:
    """
    Barycentric coordinates of a point with respect to a tetrahedron

    Solves the 3x3 system of the affine map spanned by the edges to the last vertex;
    the last weight is 1 minus the sum of the first three, so the weights sum to one
    as constructed. Weights may be negative when the point lies outside.

    Args:
        p: (3,) query point
        tet_vertices: (4, 3) tetrahedron vertices

    Returns:
        (4,) weights

    Raises:
        DegenerateTetError: if |signed volume| is below DEGENERACY_FLOOR
    """
    v = np.asarray(tet_vertices, dtype=np.float64)
    volume = signed_tet_volume(v)
    if abs(volume) <= DEGENERACY_FLOOR:
        raise DegenerateTetError(f"Tetrahedron volume {volume:.3e} below degeneracy floor")
    edges = np.column_stack([v[0] - v[3], v[1] - v[3], v[2] - v[3]])
    partial = np.linalg.solve(edges, np.asarray(p, dtype=np.float64) - v[3])
    return _finish_weights(partial)[0]


def point_from_barycentric(weights: np.ndarray, tet_vertices: np.ndarray) -> np.ndarray:
    """Reconstruct sum_k weights_k * v_k"""
    return np.asarray(weights, dtype=np.float64) @ np.asarray(tet_vertices, dtype=np.float64)


def tet_inverse_matrices(vertices: np.ndarray, tets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Precompute per-tet inverse edge matrices for batched barycentric evaluation

    Returns:
        (inverses (M, 3, 3), valid mask (M,)) where degenerate tets get identity inverses
        and valid=False
    """
    v = np.asarray(vertices, dtype=np.float64)[np.asarray(tets)]
    edges = np.stack([v[:, 0] - v[:, 3], v[:, 1] - v[:, 3], v[:, 2] - v[:, 3]], axis=2)
    volumes = np.linalg.det(edges) / 6.0
    valid = np.abs(volumes) > DEGENERACY_FLOOR
    safe = edges.copy()
    safe[~valid] = np.eye(3)
    return np.linalg.inv(safe), valid


def barycentric_batch(points: np.ndarray, inverses: np.ndarray, last_vertices: np.ndarray) -> np.ndarray:
    """Barycentric weights for paired (point, tet) rows using precomputed inverses"""
    partial = np.einsum("nij,nj->ni", inverses, np.asarray(points) - last_vertices)
    return _finish_weights(partial)


def triangle_normals(vertices: np.ndarray, triangles: np.ndarray, normalize: bool = True) -> np.ndarray:
    v = np.asarray(vertices)[np.asarray(triangles)]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    if normalize:
        lengths = np.linalg.norm(n, axis=1, keepdims=True)
        n = n / np.where(lengths > 0, lengths, 1.0)
    return n


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted unit vertex normals"""
    vertices = np.asarray(vertices, dtype=np.float64)
    face_n = triangle_normals(vertices, triangles, normalize=False)
    normals = np.zeros_like(vertices)
    for corner in range(3):
        np.add.at(normals, np.asarray(triangles)[:, corner], face_n)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(lengths > 0, lengths, 1.0)


def edge_list(mesh) -> np.ndarray:
    """
    Undirected edges of a triangle mesh, each exactly once

    Args:
        mesh: TriangleMesh or (F, 3) triangle index array

    Returns:
        (E, 2) array with i < j per row, rows sorted lexicographically
    """
    triangles = mesh.triangles if isinstance(mesh, TriangleMesh) else np.asarray(mesh, dtype=np.int64)
    if len(triangles) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    pairs = np.sort(pairs, axis=1)
    return np.unique(pairs, axis=0)


def boundary_loops(triangles: np.ndarray) -> List[np.ndarray]:
    """
    Ordered boundary loops, each following the direction its edges have in the triangles

    Raises:
        OpenMeshError: if boundary edges do not chain into closed cycles
    """
    triangles = np.asarray(triangles, dtype=np.int64)
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    boundary = directed[counts[inverse.reshape(-1)] == 1]
    if len(boundary) == 0:
        return []

    successor = {}
    for a, b in boundary.tolist():
        if a in successor:
            raise OpenMeshError(f"Non-manifold boundary at vertex {a}")
        successor[a] = b

    loops = []
    visited = set()
    for start in sorted(successor):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        current = successor[start]
        while current != start:
            if current not in successor or current in visited:
                raise OpenMeshError(f"Boundary starting at vertex {start} does not close into a cycle")
            loop.append(current)
            visited.add(current)
            current = successor[current]
        if len(loop) < 3:
            raise OpenMeshError(f"Degenerate boundary loop of length {len(loop)}")
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def cap_boundary_loops(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Close every boundary loop with a fan around its centroid, keeping orientation"""
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    new_vertices = [vertices]
    new_triangles = [triangles]
    next_index = len(vertices)
    for loop in boundary_loops(triangles):
        new_vertices.append(vertices[loop].mean(axis=0, keepdims=True))
        nxt = np.roll(loop, -1)
        # Loop edge a->b is used by the garment, so the cap walks it b->a
        fan = np.column_stack([nxt, loop, np.full(len(loop), next_index)])
        new_triangles.append(fan)
        next_index += 1
    return np.concatenate(new_vertices), np.concatenate(new_triangles)


def mesh_volume(vertices: np.ndarray, triangles: np.ndarray) -> float:
    """Divergence-theorem volume of a closed, consistently oriented mesh"""
    v = np.asarray(vertices, dtype=np.float64)[np.asarray(triangles)]
    return float(np.einsum("ij,ij->", v[:, 0], np.cross(v[:, 1], v[:, 2])) / 6.0)


def capped_mesh_volume(mesh: TriangleMesh, boundary_loops_capped: bool = True) -> float:
    """
    Enclosed volume of a garment after capping its boundary loops

    Args:
        mesh: Triangle mesh, possibly with boundary loops (neck, sleeves, hem)
        boundary_loops_capped: Fan-triangulate open loops before integrating

    Returns:
        Volume in cm^3

    Raises:
        OpenMeshError: if a boundary loop cannot be closed into a cycle
    """
    if not boundary_loops_capped:
        return mesh_volume(mesh.vertices, mesh.triangles)
    vertices, triangles = cap_boundary_loops(mesh.vertices, mesh.triangles)
    return mesh_volume(vertices, triangles)


def closest_points_on_triangles(points: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closest point on each triangle to the paired query point (Ericson's region tests)

    Args:
        points: (N, 3) query points
        triangles: (N, 3, 3) triangle corners paired with the points

    Returns:
        (closest points (N, 3), barycentric weights (N, 3))
    """
    p = np.asarray(points, dtype=np.float64)
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c

    def dot(x, y):
        return np.einsum("ij,ij->i", x, y)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_face = vb * denom
        w_face = vc * denom

    conditions = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    zeros = np.zeros(len(p))
    ones = np.ones(len(p))
    bary_v = np.select(conditions, [zeros, ones, v_ab, zeros, zeros, 1.0 - w_bc], default=v_face)
    bary_w = np.select(conditions, [zeros, zeros, zeros, ones, w_ac, w_bc], default=w_face)
    bary = np.column_stack([1.0 - bary_v - bary_w, bary_v, bary_w])
    closest = a + ab * bary_v[:, None] + ac * bary_w[:, None]
    return closest, bary
