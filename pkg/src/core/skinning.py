"""
Module for linear blend skinning of arbitrary vertex sets (KDSM lattice, body surface, cloth)
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from src.core.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

MAX_INFLUENCES = 4
# Distance below which a vertex counts as lying on a bone
ON_BONE_TOLERANCE = 1e-9


def to_homogeneous(transform: np.ndarray) -> np.ndarray:
    """(..., 3, 4) affine -> (..., 4, 4)"""
    transform = np.asarray(transform, dtype=np.float64)
    out = np.zeros(transform.shape[:-2] + (4, 4))
    out[..., :3, :] = transform
    out[..., 3, 3] = 1.0
    return out


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int
    rest_transform: np.ndarray  # (3, 4) world-from-joint at rest, cm

    def __post_init__(self):
        rest = np.asarray(self.rest_transform, dtype=np.float64).reshape(3, 4)
        object.__setattr__(self, "rest_transform", rest)


@dataclass(frozen=True)
class Skeleton:
    """Topologically sorted joint hierarchy"""

    joints: List[Joint]

    def __post_init__(self):
        for index, joint in enumerate(self.joints):
            if joint.parent >= index:
                raise ValueError(f"Joint {joint.name} has parent {joint.parent} >= its own id {index}")
            if index > 0 and joint.parent < 0:
                raise ValueError(f"Only the first joint may be a root, got {joint.name}")
            if abs(np.linalg.det(joint.rest_transform[:, :3])) < 1e-12:
                raise ValueError(f"Rest transform of joint {joint.name} is not invertible")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def names(self) -> List[str]:
        return [j.name for j in self.joints]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def rest_matrices(self) -> np.ndarray:
        return to_homogeneous(np.stack([j.rest_transform for j in self.joints]))


@dataclass(frozen=True)
class Pose:
    """
    One skeleton configuration theta

    Attributes:
        pose_id: Identifier used for file names and seeding
        angles: (J, 3) local joint rotations as rotation vectors (radians)
        translation: (3,) root translation (cm)
    """

    pose_id: int
    angles: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=np.float64).reshape(-1, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        angles.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls, skeleton: Skeleton, pose_id: int = 0) -> "Pose":
        return cls(pose_id=pose_id, angles=np.zeros((skeleton.n_joints, 3)))

    def bend_angles(self) -> np.ndarray:
        """Rotation angle per joint (radians)"""
        return np.linalg.norm(self.angles, axis=1)

    def local_rotations(self) -> np.ndarray:
        return Rotation.from_rotvec(np.array(self.angles)).as_matrix()


def world_transforms(pose: Pose, skeleton: Skeleton) -> np.ndarray:
    """
    Posed world transforms T_j(theta) composed parent-to-child

    T_j maps joint-local coordinates to posed world coordinates; at the rest pose it
    equals the joint's rest transform.

    Returns:
        (J, 4, 4) homogeneous matrices
    """
    if len(pose.angles) != skeleton.n_joints:
        raise ShapeMismatchError(f"Pose has {len(pose.angles)} joints, skeleton has {skeleton.n_joints}")
    rest = skeleton.rest_matrices()
    local_rot = to_homogeneous(np.concatenate([pose.local_rotations(), np.zeros((skeleton.n_joints, 3, 1))], axis=2))
    world = np.zeros_like(rest)
    for j, joint in enumerate(skeleton.joints):
        if joint.parent < 0:
            root_shift = np.eye(4)
            root_shift[:3, 3] = pose.translation
            world[j] = root_shift @ rest[j] @ local_rot[j]
        else:
            offset = np.linalg.inv(rest[joint.parent]) @ rest[j]
            world[j] = world[joint.parent] @ offset @ local_rot[j]
    return world


def skinning_matrices(pose: Pose, skeleton: Skeleton) -> np.ndarray:
    """T_j(theta) composed with the inverse rest transform, (J, 3, 4)"""
    world = world_transforms(pose, skeleton)
    return (world @ np.linalg.inv(skeleton.rest_matrices()))[:, :3, :]


@dataclass(frozen=True)
class Bone:
    """Line segment that attracts skinning weight to its joint"""

    joint: int
    start: np.ndarray
    end: np.ndarray


@dataclass(frozen=True)
class SkinWeights:
    """
    Sparse per-vertex weights stored as fixed-width influence lists

    Attributes:
        joints: (N, 4) joint ids (unused slots hold 0 with weight 0)
        weights: (N, 4) non-negative weights summing to 1 per row
    """

    joints: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if joints.shape != weights.shape or joints.ndim != 2 or joints.shape[1] > MAX_INFLUENCES:
            raise ShapeMismatchError(f"Weight arrays must be (N, <={MAX_INFLUENCES}), got {joints.shape} and {weights.shape}")
        if np.any(weights < 0):
            raise ValueError("Skinning weights must be non-negative")
        if len(weights) and np.max(np.abs(weights.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("Skinning weights must sum to 1 per vertex")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.joints)

    def subset(self, indices: np.ndarray) -> "SkinWeights":
        return SkinWeights(joints=self.joints[indices], weights=self.weights[indices])

    def dense(self, n_joints: int) -> np.ndarray:
        out = np.zeros((len(self.joints), n_joints))
        np.add.at(out, (np.repeat(np.arange(len(self.joints)), self.joints.shape[1]), self.joints.ravel()), self.weights.ravel())
        return out

    @classmethod
    def from_dense(cls, dense: np.ndarray, max_influences: int = MAX_INFLUENCES) -> "SkinWeights":
        """Keep the largest influences per row and renormalize"""
        dense = np.asarray(dense, dtype=np.float64)
        k = min(max_influences, dense.shape[1])
        order = np.argsort(-dense, axis=1, kind="stable")[:, :k]
        weights = np.take_along_axis(dense, order, axis=1)
        weights = np.clip(weights, 0.0, None)
        weights = weights / weights.sum(axis=1, keepdims=True)
        return cls(joints=order, weights=weights)


def point_segment_distance(points: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    segment = np.asarray(end, dtype=np.float64) - np.asarray(start, dtype=np.float64)
    length_sq = float(segment @ segment)
    rel = np.asarray(points, dtype=np.float64) - start
    if length_sq == 0.0:
        return np.linalg.norm(rel, axis=1)
    t = np.clip(rel @ segment / length_sq, 0.0, 1.0)
    return np.linalg.norm(rel - t[:, None] * segment, axis=1)


def hierarchy_bones(skeleton: Skeleton) -> List[Bone]:
    """Segments from each joint to each of its children; leaf joints get a point bone"""
    origins = skeleton.rest_matrices()[:, :3, 3]
    bones = []
    for j, joint in enumerate(skeleton.joints):
        children = [c for c, other in enumerate(skeleton.joints) if other.parent == j]
        for c in children or [j]:
            bones.append(Bone(joint=j, start=origins[j].copy(), end=origins[c].copy()))
    return bones


def assign_weights(vertices: np.ndarray, skeleton: Skeleton, bones: Sequence[Bone]) -> SkinWeights:
    """
    Inverse-square distance weights to the nearest 4 joints (via their bone segments)

    A vertex lying on a bone segment gets its whole weight from the joints it touches.

    Args:
        vertices: (N, 3) positions
        skeleton: Joint hierarchy
        bones: Segments, each owned by one joint (at least one)

    Returns:
        SkinWeights with at most 4 influences per vertex
    """
    if not bones:
        raise ValueError("At least one bone is required")
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    joint_dist = np.full((len(vertices), skeleton.n_joints), np.inf)
    for bone in bones:
        d = point_segment_distance(vertices, bone.start, bone.end)
        joint_dist[:, bone.joint] = np.minimum(joint_dist[:, bone.joint], d)

    n_boned = int(np.sum(np.isfinite(joint_dist[0]))) if len(vertices) else 0
    k = max(1, min(MAX_INFLUENCES, n_boned))
    order = np.argsort(joint_dist, axis=1, kind="stable")[:, :k]
    dist = np.take_along_axis(joint_dist, order, axis=1)

    on_bone = dist < ON_BONE_TOLERANCE
    with np.errstate(divide="ignore"):
        weights = np.where(on_bone.any(axis=1, keepdims=True), on_bone.astype(np.float64), 1.0 / dist ** 2)
    weights = weights / weights.sum(axis=1, keepdims=True)

    if k < MAX_INFLUENCES:
        pad = MAX_INFLUENCES - k
        order = np.pad(order, ((0, 0), (0, pad)))
        weights = np.pad(weights, ((0, 0), (0, pad)))
    return SkinWeights(joints=order, weights=weights)


def smooth_weights(weights: SkinWeights, edges: np.ndarray, n_joints: int,
                   iterations: int = 10, alpha: float = 0.5) -> SkinWeights:
    """Diffuse weights along mesh edges (Jacobi averaging with the neighbor mean)"""
    dense = weights.dense(n_joints)
    n = len(dense)
    edges = np.asarray(edges, dtype=np.int64)
    degree = np.bincount(edges.ravel(), minlength=n).astype(np.float64)
    for _ in range(iterations):
        neighbor_sum = np.zeros_like(dense)
        np.add.at(neighbor_sum, edges[:, 0], dense[edges[:, 1]])
        np.add.at(neighbor_sum, edges[:, 1], dense[edges[:, 0]])
        has_neighbors = degree > 0
        mean = np.where(has_neighbors[:, None], neighbor_sum / np.maximum(degree, 1.0)[:, None], dense)
        dense = (1.0 - alpha) * dense + alpha * mean
    return SkinWeights.from_dense(dense)


def blend_matrices(weights: SkinWeights, matrices: np.ndarray) -> np.ndarray:
    """Per-vertex blended affine transforms sum_j w_kj M_j, (N, 3, 4)"""
    return np.einsum("nk,nkij->nij", weights.weights, matrices[weights.joints])


def skin_vertices(rest: np.ndarray, weights: SkinWeights, pose: Pose, skeleton: Skeleton,
                  matrices: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Linear blend skinning v_k(theta) = sum_j w_kj T_j(theta) v_k^j

    The joint-local rest positions v_k^j are folded into the per-joint skinning
    matrices T_j(theta) B_j^-1.

    Args:
        rest: (N, 3) rest positions
        weights: SkinWeights covering every vertex
        pose: Skeleton configuration
        skeleton: Joint hierarchy
        matrices: Optional precomputed skinning matrices for the pose

    Returns:
        (N, 3) posed positions
    """
    rest = np.asarray(rest, dtype=np.float64).reshape(-1, 3)
    if len(weights) != len(rest):
        raise ShapeMismatchError(f"{len(weights)} weight rows for {len(rest)} vertices")
    if matrices is None:
        matrices = skinning_matrices(pose, skeleton)
    blended = blend_matrices(weights, matrices)
    return np.einsum("nij,nj->ni", blended[:, :, :3], rest) + blended[:, :, 3]
