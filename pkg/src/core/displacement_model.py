"""
Module for the pixel-image representation of displacement fields and the pose -> image regressors
"""
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from src.core.embedding import reembed, skin_embedded
from src.core.errors import ShapeMismatchError
from src.core.geometry import BACK, FRONT, TriangleMesh, vertex_normals
from src.core.skinning import Pose

logger = logging.getLogger(__name__)

IMAGE_SIZE = 128
CHANNELS = 6
LAMBDA_REG = 1e-3
ATLAS_MARGIN = 0.04
MASK_THRESHOLD = 1e-12


@dataclass(frozen=True)
class ClothImage:
    """
    Front/back displacement image

    Attributes:
        pixels: (S, S, 6) channels 0-2 front side, 3-5 back side (cm)
        mask: (S, S, 2) covered pixels per side; uncovered pixels are exactly 0
    """

    pixels: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if pixels.ndim != 3 or pixels.shape[2] != CHANNELS or pixels.shape[0] != pixels.shape[1]:
            raise ShapeMismatchError(f"Cloth image must be (S, S, {CHANNELS}), got {pixels.shape}")
        if mask.shape != pixels.shape[:2] + (2,):
            raise ShapeMismatchError(f"Mask shape {mask.shape} does not match image {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("Cloth image has non-finite pixels")
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "mask", mask)

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    def channel_mask(self) -> np.ndarray:
        """(S, S, 6) mask broadcast to the channels"""
        return np.repeat(self.mask, 3, axis=2)

    def masked_vector(self) -> np.ndarray:
        return self.pixels[self.channel_mask()]

    @classmethod
    def from_vector(cls, vector: np.ndarray, mask: np.ndarray) -> "ClothImage":
        mask = np.asarray(mask, dtype=bool)
        pixels = np.zeros(mask.shape[:2] + (CHANNELS,))
        pixels[np.repeat(mask, 3, axis=2)] = vector
        return cls(pixels=pixels, mask=mask)


def orthographic_atlas(cloth_rest: TriangleMesh, margin: float = ATLAS_MARGIN) -> Tuple[np.ndarray, np.ndarray]:
    """
    Front/back UV atlas by orthographic projection along z

    Both sides share one normalized xy frame; a vertex is on the front when its rest
    normal points towards +z.

    Returns:
        (uv (N, 2) in [margin, 1 - margin], side labels (N,))
    """
    xy = cloth_rest.vertices[:, :2]
    lo = xy.min(axis=0)
    extent = float((xy.max(axis=0) - lo).max())
    if extent <= 0:
        raise ValueError("Cloth has no extent in the projection plane")
    uv = margin + (1.0 - 2.0 * margin) * (xy - lo) / extent
    # v grows downwards in the image
    uv[:, 1] = 1.0 - uv[:, 1]
    normals = vertex_normals(cloth_rest.vertices, cloth_rest.triangles)
    sides = np.where(normals[:, 2] >= 0.0, FRONT, BACK).astype(np.int8)
    return uv, sides


def _bilinear_taps(uv: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Four (row, col, weight) taps per uv; pixel centers sit at integer multiples of 1/size"""
    pos = np.clip(np.asarray(uv, dtype=np.float64) * size, 0.0, size - 1)
    base = np.minimum(np.floor(pos).astype(np.int64), size - 2)
    f = pos - base
    cols = np.stack([base[:, 0], base[:, 0] + 1, base[:, 0], base[:, 0] + 1], axis=1)
    rows = np.stack([base[:, 1], base[:, 1], base[:, 1] + 1, base[:, 1] + 1], axis=1)
    fx, fy = f[:, 0], f[:, 1]
    weights = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1)
    return rows, cols, weights


def _check_atlas(values: np.ndarray, uv: np.ndarray, sides: np.ndarray):
    if len(values) != len(uv) or len(uv) != len(sides):
        raise ShapeMismatchError(f"{len(values)} values, {len(uv)} uvs and {len(sides)} side labels")


def rasterize(values: np.ndarray, uv: np.ndarray, sides: np.ndarray, size: int = IMAGE_SIZE) -> ClothImage:
    """
    Scatter per-vertex 3-vectors into the front/back image

    Each vertex writes into the 4 bilinear pixels of its uv on its side; accumulated
    values are normalized by the accumulated weights.

    Args:
        values: (N, 3) displacement (or any 3-vector field)
        uv: (N, 2) atlas coordinates in [0, 1]^2
        sides: (N,) FRONT/BACK labels
        size: Image resolution
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1, 3)
    sides = np.asarray(sides)
    _check_atlas(values, uv, sides)
    rows, cols, weights = _bilinear_taps(uv, size)
    acc = np.zeros((size, size, 2, 3))
    wsum = np.zeros((size, size, 2))
    side_idx = np.repeat(sides[:, None], 4, axis=1)
    np.add.at(wsum, (rows, cols, side_idx), weights)
    np.add.at(acc, (rows.ravel(), cols.ravel(), side_idx.ravel()),
              (weights[:, :, None] * values[:, None, :]).reshape(-1, 3))
    mask = wsum > MASK_THRESHOLD
    pixels = np.where(mask[..., None], acc / np.where(mask, wsum, 1.0)[..., None], 0.0)
    return ClothImage(pixels=pixels.reshape(size, size, CHANNELS), mask=mask)


def gather(image: ClothImage, uv: np.ndarray, sides: np.ndarray) -> np.ndarray:
    """
    Bilinear sampling of each vertex's side at its uv, restricted to covered pixels

    Returns:
        (N, 3) per-vertex values; vertices with no covered tap get 0
    """
    sides = np.asarray(sides)
    uv = np.asarray(uv, dtype=np.float64)
    if len(uv) != len(sides):
        raise ShapeMismatchError(f"{len(uv)} uvs and {len(sides)} side labels")
    rows, cols, weights = _bilinear_taps(uv, image.size)
    side_idx = np.repeat(sides[:, None], 4, axis=1)
    covered = image.mask[rows, cols, side_idx]
    weights = np.where(covered, weights, 0.0)
    pixels = image.pixels.reshape(image.size, image.size, 2, 3)[rows, cols, side_idx]
    total = weights.sum(axis=1, keepdims=True)
    out = np.einsum("nk,nkc->nc", weights, pixels) / np.where(total > 0, total, 1.0)
    return np.where(total > 0, out, 0.0)


def pose_feature(pose: Pose) -> np.ndarray:
    """First two columns of every local joint rotation, flattened (J * 6 values)"""
    return pose.local_rotations()[:, :, :2].transpose(0, 2, 1).reshape(-1)


def pose_features(poses: Sequence[Pose]) -> np.ndarray:
    return np.stack([pose_feature(p) for p in poses])


class Regressor:
    """Pose feature -> masked cloth image"""

    kind = "base"

    def __init__(self):
        self.mask: Optional[np.ndarray] = None
        self.n_features: Optional[int] = None

    def _check_training(self, features: np.ndarray, images: Sequence[ClothImage]) -> Tuple[np.ndarray, np.ndarray]:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or len(features) != len(images):
            raise ShapeMismatchError(f"{len(features)} feature rows for {len(images)} images")
        if len(images) < 1:
            raise ShapeMismatchError("Training set is empty")
        mask = images[0].mask
        for image in images[1:]:
            if image.mask.shape != mask.shape or not np.array_equal(image.mask, mask):
                raise ShapeMismatchError("Training images do not share one mask")
        self.mask = mask
        self.n_features = features.shape[1]
        targets = np.stack([image.masked_vector() for image in images])
        return features, targets

    def _check_features(self, features: np.ndarray) -> np.ndarray:
        if self.mask is None:
            raise RuntimeError(f"{type(self).__name__} is not trained")
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.n_features:
            raise ShapeMismatchError(f"Expected {self.n_features} features, got {features.shape[1]}")
        return features

    def fit(self, features: np.ndarray, images: Sequence[ClothImage]) -> "Regressor":
        raise NotImplementedError

    def predict_vectors(self, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, feature: np.ndarray) -> ClothImage:
        return ClothImage.from_vector(self.predict_vectors(feature)[0], self.mask)

    def predict_many(self, features: np.ndarray) -> List[ClothImage]:
        return [ClothImage.from_vector(v, self.mask) for v in self.predict_vectors(features)]

    def training_loss(self, features: np.ndarray, images: Sequence[ClothImage]) -> float:
        """Mean squared error over masked pixel channels"""
        predicted = self.predict_vectors(features)
        targets = np.stack([image.masked_vector() for image in images])
        return float(np.mean((predicted - targets) ** 2))

    def _arrays(self) -> Dict[str, np.ndarray]:
        return {}

    def _restore(self, arrays: Dict[str, np.ndarray]):
        pass

    def save(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            np.savez(handle, kind=np.array(self.kind), mask=self.mask, n_features=np.array(self.n_features),
                     **self._arrays())
        logger.info(f"Saved {self.kind} regressor to {path}")


class MeanRegressor(Regressor):
    """Predicts the training mean image for every pose"""

    kind = "mean"

    def fit(self, features, images) -> "MeanRegressor":
        _, targets = self._check_training(features, images)
        self.mean = targets.mean(axis=0)
        return self

    def predict_vectors(self, features: np.ndarray) -> np.ndarray:
        features = self._check_features(features)
        return np.repeat(self.mean[None, :], len(features), axis=0)

    def _arrays(self):
        return {"mean": self.mean}

    def _restore(self, arrays):
        self.mean = arrays["mean"]


class RidgeRegressor(Regressor):
    """
    Closed-form multi-output ridge regression on standardized pose features

    Solves min ||X w - y||^2 + lambda_reg ||w||^2 for every masked pixel channel at once,
    with an unpenalized intercept.
    """

    kind = "ridge"

    def __init__(self, lambda_reg: float = LAMBDA_REG):
        super().__init__()
        if lambda_reg < 0:
            raise ValueError(f"lambda_reg must be non-negative, got {lambda_reg}")
        self.lambda_reg = float(lambda_reg)

    def fit(self, features, images) -> "RidgeRegressor":
        start = time.perf_counter()
        X, Y = self._check_training(features, images)
        if len(X) < 2:
            logger.warning("Ridge regression trained on a single example predicts that example")
        self.feature_mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.feature_std = np.where(std > 1e-12, std, 1.0)
        self.target_mean = Y.mean(axis=0)
        Xs = (X - self.feature_mean) / self.feature_std
        Yc = Y - self.target_mean

        gram = Xs.T @ Xs + self.lambda_reg * np.eye(Xs.shape[1])
        rhs = Xs.T @ Yc
        try:
            self.coef = scipy.linalg.solve(gram, rhs, assume_a="pos")
        except np.linalg.LinAlgError:
            # Zero-variance features with lambda_reg == 0 make the Gram matrix singular
            self.coef = scipy.linalg.lstsq(gram, rhs)[0]
        logger.info(
            f"Ridge fit: {X.shape[0]} examples, {X.shape[1]} features, {Y.shape[1]} outputs, "
            f"lambda={self.lambda_reg} ({time.perf_counter() - start:.2f}s)"
        )
        return self

    def predict_vectors(self, features: np.ndarray) -> np.ndarray:
        features = self._check_features(features)
        Xs = (features - self.feature_mean) / self.feature_std
        return Xs @ self.coef + self.target_mean

    def _arrays(self):
        return {
            "lambda_reg": np.array(self.lambda_reg),
            "feature_mean": self.feature_mean,
            "feature_std": self.feature_std,
            "target_mean": self.target_mean,
            "coef": self.coef,
        }

    def _restore(self, arrays):
        self.lambda_reg = float(arrays["lambda_reg"])
        self.feature_mean = arrays["feature_mean"]
        self.feature_std = arrays["feature_std"]
        self.target_mean = arrays["target_mean"]
        self.coef = arrays["coef"]


REGRESSORS = {cls.kind: cls for cls in (MeanRegressor, RidgeRegressor)}


def train(features: np.ndarray, images: Sequence[ClothImage], lambda_reg: float = LAMBDA_REG,
          kind: str = "ridge") -> Regressor:
    """Fit a regressor of the given kind on (pose feature, cloth image) pairs"""
    if kind not in REGRESSORS:
        raise ValueError(f"Unknown regressor kind: {kind}")
    model = RidgeRegressor(lambda_reg) if kind == "ridge" else REGRESSORS[kind]()
    return model.fit(features, images)


def load_regressor(path: Union[str, Path]) -> Regressor:
    with np.load(Path(path), allow_pickle=False) as data:
        arrays = {key: data[key] for key in data.files}
    kind = str(arrays.pop("kind"))
    if kind not in REGRESSORS:
        raise ValueError(f"Unknown regressor kind in {path}: {kind}")
    model = REGRESSORS[kind]()
    model.mask = arrays.pop("mask").astype(bool)
    model.n_features = int(arrays.pop("n_features"))
    model._restore(arrays)
    return model


@dataclass(frozen=True)
class InferenceResult:
    image: ClothImage
    displacements: np.ndarray
    positions: np.ndarray
    unresolved: np.ndarray


def infer(model: Regressor, pose: Pose, cloth: TriangleMesh, rest_locator, deformed_vertices: np.ndarray,
          eps: float = 1e-4, clamp_distance: float = 5.0) -> InferenceResult:
    """
    Predict d(theta), then embed u^{m_o} + d in the rest KDSM and skin it to the pose

    Args:
        model: Trained regressor
        pose: Target pose
        cloth: Rest cloth with atlas uv and side labels
        rest_locator: Locator over the rest KDSM
        deformed_vertices: KDSM vertices skinned to the pose

    Returns:
        InferenceResult with the world-space cloth and the ids of unresolved vertices
    """
    image = model.predict(pose_feature(pose))
    displacements = gather(image, cloth.uv, cloth.sides)
    emb, unresolved = reembed(cloth.vertices + displacements, rest_locator, eps, clamp_distance)
    positions = skin_embedded(emb, deformed_vertices, rest_locator.tets)
    if len(unresolved):
        logger.warning(f"Pose {pose.pose_id}: {len(unresolved)} vertices could not be clamped into the lattice")
    return InferenceResult(image=image, displacements=displacements, positions=positions, unresolved=unresolved)
