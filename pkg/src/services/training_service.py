"""
Training service: rasterize labels, fit one regressor per label kind, infer cloth for new poses
"""
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.displacement_model import (
    ClothImage,
    Regressor,
    gather,
    infer,
    load_regressor,
    pose_feature,
    pose_features,
    rasterize,
    train,
)
from src.core.embedding import apply_uvn_offsets, fixed_label, reconstruct
from src.core.skinning import Pose
from src.services.rig_service import Rig, RigService
from src.storage.dataset_store import FrameRecord
from src.storage.models import KDSM_KINDS, PipelineConfig

logger = logging.getLogger(__name__)

MEAN_BASELINE = "mean"
# Label kind the predict-the-training-mean baseline averages
MEAN_BASELINE_SOURCE = "hybrid"
TRAINABLE_KINDS = KDSM_KINDS + ("body_offset",)


class TrainingService:
    """Service training and applying pose-to-image regressors"""

    def __init__(self, rig_service: RigService, rig: Rig, models_dir: Path,
                 config: Optional[PipelineConfig] = None):
        """
        Args:
            rig_service: Service posing the rig
            rig: Built rig
            models_dir: Directory for model files (<kind>.npz)
            config: Pipeline configuration
        """
        self.rig_service = rig_service
        self.rig = rig
        self.models_dir = Path(models_dir)
        self.models_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or rig_service.config
        self.models: Dict[str, Regressor] = {}

    def images(self, frames: Sequence[FrameRecord], kind: str) -> List[ClothImage]:
        cloth = self.rig.cloth
        size = self.config.model.image_size
        return [rasterize(f.labels[kind], cloth.uv, cloth.sides, size) for f in frames]

    def model_path(self, kind: str) -> Path:
        return self.models_dir / f"{kind}.npz"

    def train_kind(self, frames: Sequence[FrameRecord], kind: str, regressor: str = "ridge") -> Regressor:
        """
        Fit a regressor on the frames' labels of one kind and save it

        Raises:
            ShapeMismatchError: with fewer than 2 frames or inconsistent shapes
        """
        start = time.perf_counter()
        features = pose_features([f.pose for f in frames])
        images = self.images(frames, kind)
        model = train(features, images, self.config.model.lambda_reg, kind=regressor)
        name = MEAN_BASELINE if regressor == MEAN_BASELINE else kind
        model.save(self.model_path(name))
        self.models[name] = model
        logger.info(
            f"Trained {regressor} model '{name}' on {len(frames)} frames: "
            f"loss {model.training_loss(features, images):.4e} ({time.perf_counter() - start:.1f}s)"
        )
        return model

    def train_all(self, frames: Sequence[FrameRecord], kinds: Sequence[str]) -> Dict[str, Regressor]:
        """Train every trainable kind in kinds plus the mean baseline"""
        for kind in kinds:
            if kind in TRAINABLE_KINDS:
                self.train_kind(frames, kind)
        self.train_kind(frames, MEAN_BASELINE_SOURCE, regressor=MEAN_BASELINE)
        return dict(self.models)

    def load_models(self) -> Dict[str, Regressor]:
        for path in sorted(self.models_dir.glob("*.npz")):
            self.models[path.stem] = load_regressor(path)
        logger.info(f"Loaded models: {sorted(self.models)}")
        return dict(self.models)

    def predict(self, kind: str, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
        """
        World-space cloth for a pose from the model trained on one label kind

        "fixed" needs no model: the rest embedding is skinned without displacement.

        Returns:
            (positions (N, 3), ids of unresolved vertices)

        Raises:
            KeyError: if no model of that kind is trained or loaded
        """
        rig, cfg = self.rig, self.config
        posed = self.rig_service.pose(rig, pose)
        if kind == "fixed":
            return reconstruct(fixed_label(pose.pose_id, rig.cloth.n_vertices), rig.cloth.vertices,
                               rig.rest_locator, posed.vertices, cfg.point_location.eps,
                               cfg.embedding.clamp_distance)
        if kind not in self.models:
            raise KeyError(f"No trained model for label kind '{kind}'")
        model = self.models[kind]
        if kind == "body_offset":
            offsets = gather(model.predict(pose_feature(pose)), rig.cloth.uv, rig.cloth.sides)
            body_posed = self.rig_service.pose_body(rig, pose)
            return apply_uvn_offsets(rig.anchors, rig.body, body_posed, offsets), np.zeros(0, dtype=np.int64)
        result = infer(model, pose, rig.cloth, rig.rest_locator, posed.vertices,
                       cfg.point_location.eps, cfg.embedding.clamp_distance)
        return result.positions, result.unresolved
