"""
Module for synthetic ground truth: seeded pose sampling and skinned cloth with pose-dependent wrinkles
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from src.core.embedding import GroundTruthFrame
from src.core.geometry import TriangleMesh, vertex_normals
from src.core.skinning import Bone, Pose, Skeleton, SkinWeights, assign_weights, skin_vertices, smooth_weights

logger = logging.getLogger(__name__)

# Rotation-vector ranges (radians) per joint and axis; unlisted joints stay at rest
POSE_RANGES: Dict[str, Tuple[Tuple[float, float], Tuple[float, float], Tuple[float, float]]] = {
    "pelvis": ((-0.1, 0.1), (-0.2, 0.2), (-0.1, 0.1)),
    "spine": ((-0.2, 0.2), (-0.2, 0.2), (-0.15, 0.15)),
    "chest": ((-0.15, 0.15), (-0.2, 0.2), (-0.1, 0.1)),
    "neck": ((-0.2, 0.2), (-0.2, 0.2), (-0.2, 0.2)),
    "head": ((-0.3, 0.3), (-0.3, 0.3), (-0.2, 0.2)),
    "l_clavicle": ((0.0, 0.0), (-0.1, 0.1), (-0.15, 0.15)),
    "r_clavicle": ((0.0, 0.0), (-0.1, 0.1), (-0.15, 0.15)),
    # Shoulders reach down to the torso, which makes arm and torso tets overlap
    "l_shoulder": ((-0.5, 0.5), (-0.5, 0.5), (-1.2, 0.3)),
    "r_shoulder": ((-0.5, 0.5), (-0.5, 0.5), (-0.3, 1.2)),
    "l_elbow": ((0.0, 0.0), (-1.6, 0.0), (0.0, 0.0)),
    "r_elbow": ((0.0, 0.0), (0.0, 1.6), (0.0, 0.0)),
    "l_wrist": ((-0.3, 0.3), (-0.3, 0.3), (-0.3, 0.3)),
    "r_wrist": ((-0.3, 0.3), (-0.3, 0.3), (-0.3, 0.3)),
    "l_hip": ((-0.5, 0.3), (-0.1, 0.1), (-0.2, 0.2)),
    "r_hip": ((-0.5, 0.3), (-0.1, 0.1), (-0.2, 0.2)),
}

WRINKLE_AMPLITUDE = 1.0
WRINKLE_FREQUENCY = 10.0
WEIGHT_SMOOTHING_ITERATIONS = 20


def sample_poses(skeleton: Skeleton, count: int, seed: int, first_id: int = 0) -> List[Pose]:
    """Per-joint rotation vectors drawn uniformly from POSE_RANGES"""
    rng = np.random.default_rng(seed)
    lo = np.zeros((skeleton.n_joints, 3))
    hi = np.zeros((skeleton.n_joints, 3))
    for j, name in enumerate(skeleton.names):
        if name in POSE_RANGES:
            ranges = np.array(POSE_RANGES[name])
            lo[j], hi[j] = ranges[:, 0], ranges[:, 1]
    poses = []
    for k in range(count):
        angles = lo + (hi - lo) * rng.random((skeleton.n_joints, 3))
        poses.append(Pose(pose_id=first_id + k, angles=angles))
    return poses


def cloth_rig_weights(cloth: TriangleMesh, skeleton: Skeleton, bones: List[Bone],
                      iterations: int = WEIGHT_SMOOTHING_ITERATIONS) -> SkinWeights:
    """Nearest-bone weights of the cloth, diffused along its edges"""
    weights = assign_weights(cloth.vertices, skeleton, bones)
    return smooth_weights(weights, cloth.edges(), skeleton.n_joints, iterations=iterations)


@dataclass(frozen=True)
class WrinklePattern:
    """Seeded per-joint wave directions and phases in the cloth UV atlas"""

    directions: np.ndarray
    phases: np.ndarray

    @classmethod
    def from_seed(cls, n_joints: int, seed: int) -> "WrinklePattern":
        rng = np.random.default_rng(seed)
        angle = rng.uniform(0.0, 2 * np.pi, n_joints)
        phases = rng.uniform(0.0, 2 * np.pi, n_joints)
        return cls(directions=np.column_stack([np.cos(angle), np.sin(angle)]), phases=phases)


def wrinkle_offsets(pose: Pose, uv: np.ndarray, dense_weights: np.ndarray, pattern: WrinklePattern,
                    amplitude: float = WRINKLE_AMPLITUDE, frequency: float = WRINKLE_FREQUENCY) -> np.ndarray:
    """
    Scalar normal offset per vertex: sum_b A (bend_b / (pi/2)) w_ib sin(k uv.q_b + phi_b)

    Returns:
        (N,) offsets along the posed normal (cm); all zero when no joint bends
    """
    bend = pose.bend_angles() / (np.pi / 2)
    waves = np.sin(2 * np.pi * frequency * (uv @ pattern.directions.T) + pattern.phases[None, :])
    return amplitude * np.einsum("nb,nb,b->n", dense_weights, waves, bend)


def gen_synthetic_gt(pose: Pose, cloth: TriangleMesh, cloth_weights: SkinWeights, skeleton: Skeleton,
                     seed: int, amplitude: float = WRINKLE_AMPLITUDE) -> GroundTruthFrame:
    """
    Ground truth cloth for one pose: skinned cloth plus bend-driven wrinkles along the normals

    Args:
        pose: Target pose
        cloth: Rest cloth with atlas uv
        cloth_weights: Diffused cloth skinning weights
        skeleton: Joint hierarchy
        seed: Wrinkle pattern seed (shared by all frames of a dataset)

    Returns:
        GroundTruthFrame, deterministic per (pose, seed); the rest pose yields the rest cloth
    """
    if cloth.uv is None:
        raise ValueError("Cloth needs atlas uv coordinates for wrinkle synthesis")
    skinned = skin_vertices(cloth.vertices, cloth_weights, pose, skeleton)
    pattern = WrinklePattern.from_seed(skeleton.n_joints, seed)
    offsets = wrinkle_offsets(pose, cloth.uv, cloth_weights.dense(skeleton.n_joints), pattern, amplitude)
    if not np.any(offsets):
        return GroundTruthFrame(pose=pose, positions=skinned)
    normals = vertex_normals(skinned, cloth.triangles)
    positions = skinned + offsets[:, None] * normals
    logger.debug(f"Pose {pose.pose_id}: wrinkle RMS {np.sqrt(np.mean(offsets ** 2)):.3f} cm")
    return GroundTruthFrame(pose=pose, positions=positions)
