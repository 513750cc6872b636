"""
Module for dataset and network error metrics: vertex errors, displacement variation, capped volume errors
"""
import logging
from typing import Sequence, Tuple

import numpy as np

from src.core.errors import ShapeMismatchError
from src.core.geometry import TriangleMesh, capped_mesh_volume

logger = logging.getLogger(__name__)


def delta_d_stats(displacements: np.ndarray, edges: np.ndarray) -> Tuple[float, float]:
    """
    Change of the displacement field across mesh edges

    Args:
        displacements: (N, 3) per-vertex field
        edges: (E, 2) undirected edges

    Returns:
        (max, mean) of |d_a - d_b| over the edges; (0, 0) without edges
    """
    d = np.asarray(displacements, dtype=np.float64).reshape(-1, 3)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if not len(edges):
        return 0.0, 0.0
    norms = np.linalg.norm(d[edges[:, 0]] - d[edges[:, 1]], axis=1)
    return float(norms.max()), float(norms.mean())


def vertex_distances(predicted: np.ndarray, gt: np.ndarray) -> np.ndarray:
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if predicted.shape != gt.shape:
        raise ShapeMismatchError(f"Predicted {predicted.shape} vs ground truth {gt.shape}")
    return np.linalg.norm(predicted - gt, axis=1)


def vertex_error(predicted: np.ndarray, gt: np.ndarray) -> Tuple[float, float]:
    """
    Returns:
        (max, mean) Euclidean vertex error (cm)

    Raises:
        ShapeMismatchError: on different vertex counts
    """
    distances = vertex_distances(predicted, gt)
    if not len(distances):
        return 0.0, 0.0
    return float(distances.max()), float(distances.mean())


def volume_error(predicted: np.ndarray, gt: np.ndarray, cloth: TriangleMesh) -> float:
    """
    |capped volume(predicted) - capped volume(gt)| on the cloth topology (cm^3)

    Raises:
        OpenMeshError: if a boundary loop cannot be capped
    """
    if len(predicted) != cloth.n_vertices or len(gt) != cloth.n_vertices:
        raise ShapeMismatchError("Volume error needs positions for every cloth vertex")
    return abs(capped_mesh_volume(cloth.with_vertices(predicted)) - capped_mesh_volume(cloth.with_vertices(gt)))


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Population mean and standard deviation; (0, 0) for an empty sequence"""
    values = np.asarray(values, dtype=np.float64)
    if not values.size:
        return 0.0, 0.0
    return float(values.mean()), float(values.std())
