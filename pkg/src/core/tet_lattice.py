"""
Module for generating the tetrahedral parameterization of the air volume around the body:
BCC lattice clipped by the thickened level set, plus single-level 1:8 red refinement
"""
import logging
import time
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from src.core.errors import EmptyMeshError
from src.core.geometry import signed_tet_volumes
from src.core.level_set import ScalarGrid, sample_many

logger = logging.getLogger(__name__)

# Corner offsets (b, c) walking around a square face of a cell
_FACE_CYCLE = [(0, 0), (1, 0), (1, 1), (0, 1)]


@dataclass(frozen=True)
class TetMesh:
    """
    Material-space (T-pose) tetrahedral mesh

    Attributes:
        rest_vertices: (N, 3) rest positions v^m
        tets: (M, 4) vertex indices, positively oriented at rest
        skin_weights: per-vertex skinning weights, attached by the skinning module
    """

    rest_vertices: np.ndarray
    tets: np.ndarray
    skin_weights: Optional[Any] = None

    def __post_init__(self):
        vertices = np.asarray(self.rest_vertices, dtype=np.float64).reshape(-1, 3)
        tets = np.asarray(self.tets, dtype=np.int64).reshape(-1, 4)
        vertices.setflags(write=False)
        tets.setflags(write=False)
        object.__setattr__(self, "rest_vertices", vertices)
        object.__setattr__(self, "tets", tets)

    @property
    def n_vertices(self) -> int:
        return len(self.rest_vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def with_weights(self, skin_weights) -> "TetMesh":
        return replace(self, skin_weights=skin_weights)

    def rest_volumes(self) -> np.ndarray:
        return signed_tet_volumes(self.rest_vertices, self.tets)


def _orient_positive(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    tets = tets.copy()
    negative = signed_tet_volumes(vertices, tets) < 0
    tets[negative] = tets[negative][:, [0, 1, 3, 2]]
    return tets


def bcc_lattice(origin: np.ndarray, h: float, cells: Tuple[int, int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Full BCC lattice over a block of cells

    Vertices are the cell corners followed by the cell centers. Every tetrahedron joins
    the centers of two face-adjacent cells with one edge of their shared face.
    The tets cover the box spanned by the outermost cell centers; points in the half
    cells outside it may have no tet, so callers pad the grid with lattice_padding.

    Returns:
        (vertices (N, 3), positively oriented tets (M, 4))
    """
    nx, ny, nz = cells
    counts = np.array(cells)
    corner_dims = counts + 1

    ci, cj, ck = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    corners = np.column_stack([ci.ravel(), cj.ravel(), ck.ravel()]) * h
    mi, mj, mk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    centers = (np.column_stack([mi.ravel(), mj.ravel(), mk.ravel()]) + 0.5) * h
    vertices = np.asarray(origin, dtype=np.float64) + np.concatenate([corners, centers])
    n_corners = len(corners)

    def corner_id(idx):
        return (idx[0] * corner_dims[1] + idx[1]) * corner_dims[2] + idx[2]

    def center_id(idx):
        return n_corners + (idx[0] * counts[1] + idx[1]) * counts[2] + idx[2]

    blocks = []
    for a in range(3):
        if counts[a] < 2:
            continue
        b, c = (a + 1) % 3, (a + 2) % 3
        ranges = [np.arange(counts[0]), np.arange(counts[1]), np.arange(counts[2])]
        ranges[a] = np.arange(counts[a] - 1)
        grids = np.meshgrid(*ranges, indexing="ij")
        cell = [g.ravel() for g in grids]
        upper = list(cell)
        upper[a] = cell[a] + 1
        lo = center_id(cell)
        hi = center_id(upper)
        face = []
        for db, dc in _FACE_CYCLE:
            idx = list(upper)
            idx[b] = cell[b] + db
            idx[c] = cell[c] + dc
            face.append(corner_id(idx))
        for e in range(4):
            blocks.append(np.column_stack([lo, hi, face[e], face[(e + 1) % 4]]))

    if not blocks:
        return vertices, np.zeros((0, 4), dtype=np.int64)
    # Interleave so tets of one face stay together in a stable order
    ordered = []
    for start in range(0, len(blocks), 4):
        ordered.append(np.stack(blocks[start:start + 4], axis=1).reshape(-1, 4))
    tets = np.concatenate(ordered)
    return vertices, _orient_positive(vertices, tets)


def lattice_padding(thickening: float, h: float, dx: float) -> float:
    """
    Level set padding that keeps the whole thickened region inside the lattice

    Only the box between the outermost cell centers is sure to be covered: half a cell
    along the low grid faces and up to one and a half cells along the high faces may
    have no tet. One more grid spacing covers the interpolation of the sampled distance.
    """
    return float(thickening) + 1.5 * float(h) + float(dx)


def build_lattice(phi_thick: ScalarGrid, h: Optional[float] = None) -> TetMesh:
    """
    KDSM tetrahedral mesh from the thickened level set

    A BCC tetrahedron is kept iff any of its 4 vertices or its centroid samples
    phi_thick < 0. Unreferenced vertices are dropped and indices compacted.

    Args:
        phi_thick: Thickened signed distance grid
        h: Lattice cell size (defaults to the grid spacing)

    Returns:
        TetMesh with positively oriented tets and no skin weights yet

    Raises:
        EmptyMeshError: if no tetrahedron is kept
    """
    start = time.perf_counter()
    h = float(h if h is not None else phi_thick.dx)
    if h <= 0:
        raise ValueError(f"Lattice spacing must be positive, got {h}")
    extent = (np.array(phi_thick.dims) - 1) * phi_thick.dx
    cells = tuple(int(np.floor(extent[a] / h + 1e-9)) for a in range(3))
    if min(cells) < 1:
        raise EmptyMeshError(f"Grid extent {extent} smaller than one lattice cell of size {h}")

    vertices, tets = bcc_lattice(phi_thick.origin, h, cells)
    vertex_phi = sample_many(phi_thick, vertices)
    centroid_phi = sample_many(phi_thick, vertices[tets].mean(axis=1))
    keep = np.any(vertex_phi[tets] < 0, axis=1) | (centroid_phi < 0)
    if not np.any(keep):
        raise EmptyMeshError("Thickened level set has no interior; no tetrahedron kept")

    kept = tets[keep]
    used, compact = np.unique(kept, return_inverse=True)
    mesh = TetMesh(rest_vertices=vertices[used], tets=compact.reshape(-1, 4))
    logger.info(
        f"Lattice built: cells={cells}, h={h}, tets={mesh.n_tets}/{len(tets)}, "
        f"vertices={mesh.n_vertices} ({time.perf_counter() - start:.2f}s)"
    )
    return mesh


def red_refine(mesh: TetMesh, marked: Iterable[int]) -> TetMesh:
    """
    Single-level 1:8 red subdivision of the marked tetrahedra

    Shared edge midpoints are created once. No green closure is applied, so hanging
    nodes remain on faces shared with unrefined neighbors. Skin weights are not
    carried over and must be reassigned.

    Args:
        mesh: Input mesh
        marked: Tet ids to refine

    Returns:
        Refined TetMesh; unmarked tets keep their relative order
    """
    marked_ids = sorted(set(int(t) for t in marked))
    if not marked_ids:
        return mesh
    if marked_ids[0] < 0 or marked_ids[-1] >= mesh.n_tets:
        raise IndexError("Marked tet id out of range")
    if mesh.skin_weights is not None:
        logger.warning("Red refinement drops skin weights; reassign them on the refined mesh")

    vertices = [mesh.rest_vertices]
    midpoint_ids: Dict[Tuple[int, int], int] = {}
    new_points = []
    next_id = mesh.n_vertices

    def midpoint(i: int, j: int) -> int:
        nonlocal next_id
        key = (i, j) if i < j else (j, i)
        if key not in midpoint_ids:
            midpoint_ids[key] = next_id
            new_points.append(0.5 * (mesh.rest_vertices[i] + mesh.rest_vertices[j]))
            next_id += 1
        return midpoint_ids[key]

    marked_set = set(marked_ids)
    out = []
    for t, (v0, v1, v2, v3) in enumerate(mesh.tets.tolist()):
        if t not in marked_set:
            out.append([v0, v1, v2, v3])
            continue
        m01, m02, m03 = midpoint(v0, v1), midpoint(v0, v2), midpoint(v0, v3)
        m12, m13, m23 = midpoint(v1, v2), midpoint(v1, v3), midpoint(v2, v3)
        out.extend([
            [v0, m01, m02, m03],
            [m01, v1, m12, m13],
            [m02, m12, v2, m23],
            [m03, m13, m23, v3],
            # octahedron split along the m02-m13 diagonal
            [m01, m02, m03, m13],
            [m01, m02, m12, m13],
            [m02, m03, m13, m23],
            [m02, m12, m13, m23],
        ])

    if new_points:
        vertices.append(np.array(new_points))
    all_vertices = np.concatenate(vertices)
    tets = _orient_positive(all_vertices, np.array(out, dtype=np.int64))
    logger.info(f"Red refinement: {len(marked_ids)} tets refined, {len(new_points)} midpoints added")
    return TetMesh(rest_vertices=all_vertices, tets=tets)


def refinement_band(mesh: TetMesh, phi_body: ScalarGrid, band: float) -> np.ndarray:
    """Tet ids whose centroid lies within `band` cm of the body surface"""
    centroids = mesh.rest_vertices[mesh.tets].mean(axis=1)
    inside_grid = np.all((centroids >= phi_body.origin) & (centroids <= phi_body.upper), axis=1)
    ids = np.nonzero(inside_grid)[0]
    values = sample_many(phi_body, centroids[ids])
    return ids[np.abs(values) < band]
