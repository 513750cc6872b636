"""
Pydantic models for pipeline configuration, reports and API requests
"""
import hashlib
import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, field_validator

from src.config import settings

LabelKind = Literal["method1", "method2", "hybrid", "body_offset", "fixed"]
KDSM_KINDS = ("method1", "method2", "hybrid")
ALL_KINDS = ("method1", "method2", "hybrid", "body_offset", "fixed")


class LevelSetConfig(BaseModel):
    """Level set of the body and its thickening"""
    dx: float = Field(default=settings.LEVEL_SET_DX, gt=0)
    padding: float = Field(default=settings.LEVEL_SET_PADDING, ge=0)
    thickening: float = Field(default=settings.THICKENING, gt=0)


class LatticeConfig(BaseModel):
    """BCC lattice of the thickened body"""
    h: float = Field(default=settings.LATTICE_H, gt=0)
    refine_band: float = Field(default=settings.REFINE_BAND, ge=0)


class PointLocationConfig(BaseModel):
    eps: float = Field(default=settings.BARY_EPS, gt=0)
    eps_box: float = Field(default=settings.BOX_EPS, ge=0)
    fallback_neighbors: int = Field(default=settings.FALLBACK_NEIGHBORS, ge=1)


class EmbeddingConfig(BaseModel):
    tau: float = Field(default=settings.HYBRID_TAU, gt=0)
    seed: int = settings.METHOD1_SEED
    clamp_distance: float = Field(default=settings.CLAMP_DISTANCE, gt=0)


class MorphConfig(BaseModel):
    solver: Literal["auto", "direct", "cg"] = settings.MORPH_SOLVER
    tol: float = Field(default=settings.MORPH_TOL, gt=0)
    direct_max_vertices: int = Field(default=settings.MORPH_DIRECT_MAX_VERTICES, ge=1)


class ModelConfig(BaseModel):
    image_size: int = Field(default=settings.IMAGE_SIZE, ge=4)
    lambda_reg: float = Field(default=settings.LAMBDA_REG, ge=0)


class DatasetConfig(BaseModel):
    num_poses: int = Field(default=settings.NUM_POSES, ge=3)
    seed: int = settings.DATASET_SEED
    split: Tuple[float, float, float] = settings.SPLIT
    workers: int = Field(default=settings.WORKERS, ge=1)

    @field_validator("split")
    @classmethod
    def split_sums_to_one(cls, value):
        if abs(sum(value) - 1.0) > 1e-9 or min(value) < 0:
            raise ValueError(f"Split fractions must be non-negative and sum to 1, got {value}")
        return value


class MannequinConfig(BaseModel):
    """Procedural body and shirt; ignored when mesh paths are given"""
    resolution: int = Field(default=24, ge=6)
    shirt_columns: int = Field(default=64, ge=16)
    shirt_rows: int = Field(default=30, ge=8)
    sleeve_rings: int = Field(default=14, ge=2)
    offset: float = Field(default=2.0, gt=0)


class PipelineConfig(BaseModel):
    """Everything run_pipeline needs; defaults come from config.yaml"""
    name: str = "default"
    output_dir: str = str(settings.ARTIFACTS_DIR)
    body_mesh: Optional[str] = None
    cloth_mesh: Optional[str] = None
    skeleton: Optional[str] = None
    methods: List[LabelKind] = Field(default_factory=lambda: list(ALL_KINDS))
    level_set: LevelSetConfig = Field(default_factory=LevelSetConfig)
    lattice: LatticeConfig = Field(default_factory=LatticeConfig)
    point_location: PointLocationConfig = Field(default_factory=PointLocationConfig)
    embedding: EmbeddingConfig = Field(default_factory=EmbeddingConfig)
    morph: MorphConfig = Field(default_factory=MorphConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    mannequin: MannequinConfig = Field(default_factory=lambda: MannequinConfig(**settings.MANNEQUIN_SETTINGS))

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        """Load from a JSON or YAML file; missing keys keep their defaults"""
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.model_validate(data or {})

    def config_hash(self) -> str:
        payload = self.model_dump_json(exclude={"output_dir"})
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class DatasetMetadata(BaseModel):
    """Manifest header of a dataset"""
    name: str
    num_frames: int = 0
    seed: int = 0
    wrinkle_seed: int = 0
    n_cloth_vertices: int = 0
    thresholds: Dict[str, float] = Field(default_factory=dict)
    mesh_hashes: Dict[str, str] = Field(default_factory=dict)
    label_kinds: List[str] = Field(default_factory=list)
    split: Dict[str, List[int]] = Field(default_factory=dict)


class MethodStatistics(BaseModel):
    """Dataset generation analysis of one label kind: reconstruction errors and smoothness of d"""
    kind: str
    max_vertex_error: float
    avg_vertex_error: float
    max_delta_d: float
    avg_delta_d: float
    avg_vertex_error_std: float = 0.0
    per_example_avg_vertex_error: List[float] = Field(default_factory=list)
    per_example_avg_delta_d: List[float] = Field(default_factory=list)


class NetworkStatistics(BaseModel):
    """Test split errors of a regressor trained on one label kind"""
    kind: str
    avg_vertex_error_mean: float
    avg_vertex_error_std: float
    max_vertex_error: float
    volume_error_mean: float
    volume_error_std: float
    unresolved_vertices: int = 0
    per_example_avg_vertex_error: List[float] = Field(default_factory=list)
    per_example_volume_error: List[float] = Field(default_factory=list)


class MetricsReport(BaseModel):
    """Complete report of one pipeline run"""
    config_hash: str
    dataset: DatasetMetadata
    methods: Dict[str, MethodStatistics] = Field(default_factory=dict)
    networks: Dict[str, NetworkStatistics] = Field(default_factory=dict)
    candidate_stats: Dict[str, float] = Field(default_factory=dict)
    hybrid_stats: Dict[str, float] = Field(default_factory=dict)
    mean_baseline: Optional[NetworkStatistics] = None


class InferRequest(BaseModel):
    """Inference request: per-joint rotation vectors (radians)"""
    angles: List[List[float]] = Field(..., description="Rotation vector per joint")
    translation: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    kind: LabelKind = Field(default="hybrid", description="Label kind the model was trained on")
    pose_id: int = 0


class InferResponse(BaseModel):
    """World-space cloth vertices"""
    pose_id: int
    kind: str
    vertices: List[List[float]]
    unresolved: List[int]
    infer_time_ms: float


class StatusResponse(BaseModel):
    """System status response model"""
    status: str
    workspace: str
    dataset_frames: int
    cloth_vertices: int
    lattice_tets: int
    trained_models: List[str]
