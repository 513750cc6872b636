"""
Module for embedding cloth in the KDSM and generating plastic displacement labels:
rest embedding, skinned evaluation, ground truth back-mapping, Method 1, Method 2 (UVN offsets)
and the hybrid method with Poisson morphing
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.core.errors import DegenerateFrameError, NoParentError, ShapeMismatchError
from src.core.geometry import DEGENERACY_FLOOR, TriangleMesh, edge_list
from src.core.level_set import nearest_triangles
from src.core.point_location import (
    DEFAULT_EPS,
    CandidateSet,
    TetLocator,
    prune_all,
)
from src.core.poisson_morph import build_laplacian, poisson_morph
from src.core.skinning import Pose

logger = logging.getLogger(__name__)

HYBRID_TAU = 1.0
NEAREST_TETS = 8
CLAMP_DISTANCE = 5.0


@dataclass(frozen=True)
class Embedding:
    """Parent tet and barycentric weights per embedded point"""

    parents: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1, 4)
        if len(parents) != len(weights):
            raise ShapeMismatchError(f"{len(parents)} parents for {len(weights)} weight rows")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.parents)


@dataclass(frozen=True)
class DisplacementField:
    """Material-space plastic displacement d(theta) per cloth vertex (cm)"""

    pose_id: int
    displacements: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.displacements, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(d)):
            raise ValueError(f"Displacement field of pose {self.pose_id} has non-finite values")
        object.__setattr__(self, "displacements", d)

    def __len__(self) -> int:
        return len(self.displacements)

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.displacements, axis=1).max()) if len(self) else 0.0

    @classmethod
    def zeros(cls, pose_id: int, n_vertices: int) -> "DisplacementField":
        return cls(pose_id=pose_id, displacements=np.zeros((n_vertices, 3)))


@dataclass(frozen=True)
class GroundTruthFrame:
    """World-space cloth positions u^GT for one pose"""

    pose: Pose
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))


@dataclass(frozen=True)
class LabelResult:
    """
    A displacement label together with how it reconstructs the frame

    parents/weights give the exact embedding behind u^m where one is known (a back-mapped
    candidate); parents == -1 marks vertices that must be re-embedded in the rest mesh.
    """

    displacement: DisplacementField
    parents: np.ndarray
    weights: np.ndarray
    stats: dict = field(default_factory=dict)

    def material_points(self, cloth_rest: np.ndarray) -> np.ndarray:
        return np.asarray(cloth_rest) + self.displacement.displacements


def _check_bound(d: DisplacementField, thickening: Optional[float]):
    if thickening and d.max_norm() >= 4.0 * thickening:
        logger.warning(
            f"Pose {d.pose_id}: max displacement {d.max_norm():.2f} cm exceeds 4x thickening ({4.0 * thickening:.2f} cm)"
        )


def embed_rest(cloth_rest: np.ndarray, rest_locator: TetLocator, eps: float = DEFAULT_EPS) -> Embedding:
    """
    Embed rest cloth vertices in the rest KDSM, parent = best candidate (max min weight)

    Args:
        cloth_rest: (N, 3) u^{m_o}
        rest_locator: Locator over the rest KDSM vertices
        eps: Barycentric tolerance

    Raises:
        NoParentError: if a vertex lies outside the lattice
    """
    candidates = rest_locator.locate(cloth_rest, eps)
    counts = candidates.counts()
    missing = np.nonzero(counts == 0)[0]
    if len(missing):
        logger.error(f"{len(missing)} cloth vertices outside the rest lattice; increase the thickening")
        raise NoParentError(missing)
    first = candidates.offsets[:-1]
    emb = Embedding(parents=candidates.tet_ids[first], weights=candidates.weights[first])
    logger.info(f"Rest embedding: {len(emb)} vertices, min weight {candidates.min_weights[first].min():.2e}")
    return emb


def skin_embedded(emb: Embedding, deformed_vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """u_i = sum_k lambda_ik v_k over the parent tet's deformed vertices"""
    corners = np.asarray(deformed_vertices, dtype=np.float64)[np.asarray(tets)[emb.parents]]
    return np.einsum("nk,nkj->nj", emb.weights, corners)


def parent_vertex_ids(emb: Embedding, tets: np.ndarray) -> np.ndarray:
    """KDSM vertices that have to be skinned to evaluate the embedding"""
    return np.unique(np.asarray(tets)[emb.parents])


def _project_to_simplex(weights: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex"""
    w = np.asarray(weights, dtype=np.float64)
    u = -np.sort(-w, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, w.shape[1] + 1)
    cond = u - css / idx > 0
    rho = w.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(w)), rho] / (rho + 1)
    return np.maximum(w - theta[:, None], 0.0)


def reembed(points: np.ndarray, rest_locator: TetLocator, eps: float = DEFAULT_EPS,
            clamp_distance: float = CLAMP_DISTANCE) -> Tuple[Embedding, np.ndarray]:
    """
    Embed material-space points in the rest KDSM, clamping escaped points

    A point with no candidate is clamped into the best of its nearest tets by projecting
    its barycentric weights onto the simplex.

    Returns:
        (Embedding, ids of points whose clamp moved them more than clamp_distance)
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    candidates = rest_locator.locate(points, eps)
    counts = candidates.counts()
    parents = np.zeros(len(points), dtype=np.int64)
    weights = np.zeros((len(points), 4))
    found = counts > 0
    first = candidates.offsets[:-1][found]
    parents[found] = candidates.tet_ids[first]
    weights[found] = candidates.weights[first]

    unresolved = np.zeros(0, dtype=np.int64)
    missing = np.nonzero(~found)[0]
    if len(missing):
        tet_ids, raw = rest_locator.nearest(points[missing], k=NEAREST_TETS)
        clamped = _project_to_simplex(raw)
        corners = rest_locator.vertices[rest_locator.tets[tet_ids]]
        moved = np.linalg.norm(np.einsum("nk,nkj->nj", clamped, corners) - points[missing], axis=1)
        parents[missing] = tet_ids
        weights[missing] = clamped
        unresolved = missing[moved > clamp_distance]
        logger.warning(
            f"Clamped {len(missing)} points into the lattice (max move {moved.max():.3f} cm), "
            f"{len(unresolved)} beyond {clamp_distance} cm"
        )
    return Embedding(parents=parents, weights=weights), unresolved


@dataclass(frozen=True)
class BackmapResult:
    """
    Pruned candidates of every GT vertex mapped to material space

    Attributes:
        candidates: Pruned CandidateSet against the posed KDSM
        material_points: (K, 3) sum lambda^GT v^m per candidate entry
        cloth_rest: (N, 3) u^{m_o}
        no_parent: ids of vertices without any candidate
        fallback_tets / fallback_weights: nearest-tet embedding of the no-parent vertices
    """

    pose_id: int
    candidates: CandidateSet
    material_points: np.ndarray
    cloth_rest: np.ndarray
    no_parent: np.ndarray
    fallback_tets: np.ndarray
    fallback_weights: np.ndarray
    fallback_points: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.cloth_rest)

    def counts(self) -> np.ndarray:
        return self.candidates.counts()

    def candidate_points(self, i: int) -> np.ndarray:
        a, b = self.candidates.offsets[i], self.candidates.offsets[i + 1]
        return self.material_points[a:b]


def backmap_ground_truth(frame: GroundTruthFrame, posed_locator: TetLocator, rest_vertices: np.ndarray,
                         cloth_rest: np.ndarray, eps: float = DEFAULT_EPS) -> BackmapResult:
    """
    Map each GT cloth vertex back to material space through every pruned candidate tet

    Args:
        frame: Ground truth cloth positions for one pose
        posed_locator: Locator over the posed KDSM v(theta)
        rest_vertices: v^m
        cloth_rest: u^{m_o}
        eps: Barycentric tolerance

    Returns:
        BackmapResult; vertices with no candidate are recorded, not raised
    """
    cloth_rest = np.asarray(cloth_rest, dtype=np.float64)
    if len(frame.positions) != len(cloth_rest):
        raise ShapeMismatchError(f"GT frame has {len(frame.positions)} vertices, rest cloth {len(cloth_rest)}")
    tets = posed_locator.tets
    rest_vertices = np.asarray(rest_vertices, dtype=np.float64)
    candidates = prune_all(posed_locator.locate(frame.positions, eps), tets)
    material = np.einsum("nk,nkj->nj", candidates.weights, rest_vertices[tets[candidates.tet_ids]])

    no_parent = np.nonzero(candidates.counts() == 0)[0]
    if len(no_parent):
        fb_tets, fb_weights = posed_locator.nearest(frame.positions[no_parent], k=NEAREST_TETS)
        fb_points = np.einsum("nk,nkj->nj", fb_weights, rest_vertices[tets[fb_tets]])
        logger.warning(f"Pose {frame.pose.pose_id}: {len(no_parent)} GT vertices escaped the KDSM")
    else:
        fb_tets = np.zeros(0, dtype=np.int64)
        fb_weights = np.zeros((0, 4))
        fb_points = np.zeros((0, 3))

    counts = candidates.counts()
    logger.debug(
        f"Pose {frame.pose.pose_id} back-map: single={int((counts == 1).sum())}, "
        f"multi={int((counts > 1).sum())}, none={len(no_parent)}"
    )
    return BackmapResult(
        pose_id=frame.pose.pose_id, candidates=candidates, material_points=material, cloth_rest=cloth_rest,
        no_parent=no_parent, fallback_tets=fb_tets, fallback_weights=fb_weights, fallback_points=fb_points,
    )


def method1(backmap: BackmapResult, seed: int, strict: bool = False,
            thickening: Optional[float] = None) -> LabelResult:
    """
    Plastic displacement from a uniformly random pruned candidate per vertex

    One uniform draw is consumed per vertex in vertex order, so vertices with a single
    candidate do not depend on the seed.

    Args:
        backmap: Back-mapped candidates of the frame
        seed: RNG seed
        strict: Raise NoParentError for escaped vertices instead of using the nearest tet

    Raises:
        NoParentError: strict mode only
    """
    if strict and len(backmap.no_parent):
        raise NoParentError(backmap.no_parent)
    rng = np.random.default_rng(seed)
    draws = rng.random(backmap.n_vertices)
    counts = backmap.counts()
    offsets = backmap.candidates.offsets
    has = counts > 0
    choice = offsets[:-1] + np.minimum((draws * counts).astype(np.int64), np.maximum(counts - 1, 0))

    material = np.empty((backmap.n_vertices, 3))
    parents = np.full(backmap.n_vertices, -1, dtype=np.int64)
    weights = np.zeros((backmap.n_vertices, 4))
    material[has] = backmap.material_points[choice[has]]
    parents[has] = backmap.candidates.tet_ids[choice[has]]
    weights[has] = backmap.candidates.weights[choice[has]]
    if len(backmap.no_parent):
        material[backmap.no_parent] = backmap.fallback_points
        parents[backmap.no_parent] = backmap.fallback_tets
        weights[backmap.no_parent] = backmap.fallback_weights

    d = DisplacementField(pose_id=backmap.pose_id, displacements=material - backmap.cloth_rest)
    _check_bound(d, thickening)
    stats = {"ambiguous": int((counts > 1).sum()), "no_parent": int(len(backmap.no_parent))}
    return LabelResult(displacement=d, parents=parents, weights=weights, stats=stats)


@dataclass(frozen=True)
class BodyAnchors:
    """
    Fixed T-pose correspondence of cloth vertices to body-surface points

    Attributes:
        triangles: (N,) body triangle per cloth vertex
        bary: (N, 3) barycentric position of the anchor on that triangle
        rest_points: (N, 3) anchor positions in the T-pose
        rest_frames: (N, 3, 3) UVN frames in the T-pose, columns (tangent, bitangent, normal)
    """

    triangles: np.ndarray
    bary: np.ndarray
    rest_points: np.ndarray
    rest_frames: np.ndarray

    def __len__(self) -> int:
        return len(self.triangles)


def uvn_frames(vertices: np.ndarray, triangles: np.ndarray, uv: np.ndarray,
               subset: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Orthonormal per-triangle frames from the UV parameterization and the surface normal

    The tangent follows the direction of increasing u, orthogonalized against the normal.

    Raises:
        DegenerateFrameError: for triangles with zero area or collapsed UVs
    """
    tri = np.asarray(triangles)
    if subset is not None:
        tri = tri[subset]
    ids = np.arange(len(tri)) if subset is None else np.asarray(subset)
    p = np.asarray(vertices, dtype=np.float64)[tri]
    t = np.asarray(uv, dtype=np.float64)[tri]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    du1, dv1 = t[:, 1, 0] - t[:, 0, 0], t[:, 1, 1] - t[:, 0, 1]
    du2, dv2 = t[:, 2, 0] - t[:, 0, 0], t[:, 2, 1] - t[:, 0, 1]
    det = du1 * dv2 - du2 * dv1
    normal = np.cross(e1, e2)
    n_len = np.linalg.norm(normal, axis=1)

    bad = (np.abs(det) < DEGENERACY_FLOOR) | (n_len < DEGENERACY_FLOOR)
    safe_det = np.where(bad, 1.0, det)
    tangent = (e1 * dv2[:, None] - e2 * dv1[:, None]) / safe_det[:, None]
    normal = normal / np.where(n_len > 0, n_len, 1.0)[:, None]
    tangent = tangent - np.einsum("ij,ij->i", tangent, normal)[:, None] * normal
    t_len = np.linalg.norm(tangent, axis=1)
    bad |= t_len < 1e-9
    if np.any(bad):
        raise DegenerateFrameError(ids[bad])
    tangent = tangent / t_len[:, None]
    bitangent = np.cross(normal, tangent)
    return np.stack([tangent, bitangent, normal], axis=2)


def build_anchors(body_rest: TriangleMesh, cloth_rest: np.ndarray) -> BodyAnchors:
    """Closest body-surface point and its UVN frame for every rest cloth vertex"""
    if body_rest.uv is None:
        raise ValueError("Body mesh needs UV coordinates for UVN frames")
    corners = body_rest.vertices[body_rest.triangles]
    _, tri_ids, bary = nearest_triangles(cloth_rest, corners)
    rest_points = np.einsum("nk,nkj->nj", bary, corners[tri_ids])
    frames = uvn_frames(body_rest.vertices, body_rest.triangles, body_rest.uv, subset=tri_ids)
    logger.info(f"Body anchors: {len(tri_ids)} cloth vertices on {len(np.unique(tri_ids))} body triangles")
    return BodyAnchors(triangles=tri_ids, bary=bary, rest_points=rest_points, rest_frames=frames)


def posed_anchors(anchors: BodyAnchors, body: TriangleMesh, body_vertices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Anchor points and UVN frames on a posed body (same topology and UV as the rest body)"""
    body_vertices = np.asarray(body_vertices, dtype=np.float64)
    corners = body_vertices[body.triangles[anchors.triangles]]
    points = np.einsum("nk,nkj->nj", anchors.bary, corners)
    frames = uvn_frames(body_vertices, body.triangles, body.uv, subset=anchors.triangles)
    return points, frames


def uvn_offsets(anchors: BodyAnchors, body: TriangleMesh, body_vertices: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Offsets o = F^-1 (u - anchor) in the posed body frames"""
    anchor_points, frames = posed_anchors(anchors, body, body_vertices)
    return np.einsum("nji,nj->ni", frames, np.asarray(points) - anchor_points)


def apply_uvn_offsets(anchors: BodyAnchors, body: TriangleMesh, body_vertices: np.ndarray,
                      offsets: np.ndarray) -> np.ndarray:
    """Inverse of uvn_offsets: anchor + F o"""
    anchor_points, frames = posed_anchors(anchors, body, body_vertices)
    return anchor_points + np.einsum("nij,nj->ni", frames, offsets)


def method2(frame: GroundTruthFrame, body: TriangleMesh, body_posed_vertices: np.ndarray,
            anchors: BodyAnchors, cloth_rest: np.ndarray, thickening: Optional[float] = None) -> LabelResult:
    """
    Plastic displacement from UVN offsets to the skinned body surface

    Offsets measured in the posed anchor frames are re-applied in the T-pose frames.

    Raises:
        DegenerateFrameError: if a posed anchor frame is rank-deficient
    """
    offsets = uvn_offsets(anchors, body, body_posed_vertices, frame.positions)
    material = anchors.rest_points + np.einsum("nij,nj->ni", anchors.rest_frames, offsets)
    d = DisplacementField(pose_id=frame.pose.pose_id, displacements=material - np.asarray(cloth_rest))
    _check_bound(d, thickening)
    n = len(d)
    return LabelResult(displacement=d, parents=np.full(n, -1, dtype=np.int64), weights=np.zeros((n, 4)))


def hybrid(backmap: BackmapResult, method2_label: LabelResult, cloth: TriangleMesh, tau: float = HYBRID_TAU,
           thickening: Optional[float] = None, solver: str = "auto") -> LabelResult:
    """
    Hybrid label: back-mapped candidates validated against Method 2, Poisson morph for the rest

    Single-candidate vertices are valid as is. Among several candidates the one closest
    to Method 2's material point is taken, valid if closer than tau. Remaining vertices
    are morphed from the Method 2 field with the valid ones as Dirichlet constraints;
    morphed vertices within tau of Method 2 become valid and the morph repeats until no
    vertex validates. Components without any valid vertex keep the Method 2 values.

    Raises:
        MorphSolveFailure: from the Poisson solve
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    n = backmap.n_vertices
    d2 = method2_label.displacement.displacements
    target = backmap.cloth_rest + d2
    counts = backmap.counts()
    offsets = backmap.candidates.offsets

    values = np.zeros((n, 3))
    parents = np.full(n, -1, dtype=np.int64)
    weights = np.zeros((n, 4))
    valid = np.zeros(n, dtype=bool)

    has = counts > 0
    if np.any(has):
        entry_vertex = np.repeat(np.arange(n), counts)
        dist = np.linalg.norm(backmap.material_points - target[entry_vertex], axis=1)
        rank = np.lexsort((np.arange(len(dist)), dist, entry_vertex))
        best = rank[offsets[:-1][has]]
        values[has] = backmap.material_points[best] - backmap.cloth_rest[has]
        parents[has] = backmap.candidates.tet_ids[best]
        weights[has] = backmap.candidates.weights[best]
        valid[has] = (counts[has] == 1) | (dist[best] < tau)
    parents[~valid] = -1

    single = int((counts == 1).sum())
    multi_valid = int(np.sum(valid & (counts > 1)))
    stats = {
        "single": single,
        "multi_validated": multi_valid,
        "multi_rejected": int(np.sum(~valid & (counts > 1))),
        "no_parent": int(len(backmap.no_parent)),
        "morph_validated": [],
        "final_morphed": 0,
        "rounds": 0,
        "unconstrained_components": 0,
    }

    if not np.all(valid):
        laplacian = build_laplacian(edge_list(cloth), cloth.n_vertices)
        fixed = valid.copy()
        # Components with nothing valid fall back to the Method 2 field
        comp_valid = np.zeros(laplacian.n_components, dtype=bool)
        comp_valid[laplacian.components[valid]] = True
        orphan = ~comp_valid[laplacian.components]
        if np.any(orphan):
            values[orphan] = d2[orphan]
            fixed |= orphan
            stats["unconstrained_components"] = int((~comp_valid).sum())

        pending = ~fixed
        morphed = values
        while np.any(pending):
            ids = np.nonzero(fixed)[0]
            morphed = poisson_morph(laplacian, d2, (ids, values[ids]), solver=solver)
            stats["rounds"] += 1
            newly = pending & (np.linalg.norm(morphed - d2, axis=1) < tau)
            stats["morph_validated"].append(int(newly.sum()))
            if not np.any(newly):
                break
            values[newly] = morphed[newly]
            fixed |= newly
            pending &= ~newly
        if np.any(pending):
            values[pending] = morphed[pending]
            stats["final_morphed"] = int(pending.sum())
        logger.debug(f"Pose {backmap.pose_id} hybrid: {stats}")

    d = DisplacementField(pose_id=backmap.pose_id, displacements=values)
    _check_bound(d, thickening)
    return LabelResult(displacement=d, parents=parents, weights=weights, stats=stats)


def fixed_label(pose_id: int, n_vertices: int) -> LabelResult:
    """Zero displacement: the rest embedding simply skinned"""
    return LabelResult(
        displacement=DisplacementField.zeros(pose_id, n_vertices),
        parents=np.full(n_vertices, -1, dtype=np.int64),
        weights=np.zeros((n_vertices, 4)),
    )


def reconstruct(label: LabelResult, cloth_rest: np.ndarray, rest_locator: TetLocator,
                deformed_vertices: np.ndarray, eps: float = DEFAULT_EPS,
                clamp_distance: float = CLAMP_DISTANCE) -> Tuple[np.ndarray, np.ndarray]:
    """
    World-space cloth from a label: u^{m_o} + d re-embedded in the rest KDSM and skinned

    Vertices whose label carries its back-mapped embedding reuse it directly.

    Returns:
        (positions (N, 3), ids of unresolved vertices)
    """
    points = label.material_points(cloth_rest)
    parents = label.parents.copy()
    weights = label.weights.copy()
    unresolved = np.zeros(0, dtype=np.int64)
    open_ids = np.nonzero(parents < 0)[0]
    if len(open_ids):
        emb, bad = reembed(points[open_ids], rest_locator, eps, clamp_distance)
        parents[open_ids] = emb.parents
        weights[open_ids] = emb.weights
        unresolved = open_ids[bad]
    positions = skin_embedded(Embedding(parents=parents, weights=weights), deformed_vertices, rest_locator.tets)
    return positions, unresolved
