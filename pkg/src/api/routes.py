"""
FastAPI routes for REST API
"""
import json
import logging
import time
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from src.config.settings import APP_NAME, APP_VERSION
from src.core.errors import KdsmError, ShapeMismatchError
from src.core.skinning import Pose
from src.services.pipeline_service import PipelineService
from src.services.training_service import TrainingService
from src.storage.dataset_store import DatasetStore
from src.storage.models import InferRequest, InferResponse, MetricsReport, PipelineConfig, StatusResponse
from src.utils.logger import initialize_logging

# Initialize logging
initialize_logging()

logger = logging.getLogger(__name__)

# Create FastAPI application
app = FastAPI(
    title=f"{APP_NAME} API",
    version=APP_VERSION,
    description="API for KDSM cloth inference over a built pipeline workspace"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Global objects (initialized on startup)
pipeline: Optional[PipelineService] = None
training_service: Optional[TrainingService] = None


def init_services(service: PipelineService):
    """Build the rig of a pipeline workspace and load its trained models"""
    global pipeline, training_service
    rig = service.build_rig()
    training = TrainingService(service.rig_service, rig, service.models_dir, service.config)
    training.load_models()
    pipeline, training_service = service, training
    logger.info(f"Services initialized for workspace {service.workspace}")


@app.on_event("startup")
async def startup_event():
    """Initialize services on startup"""
    if pipeline is not None:
        return
    try:
        logger.info("Initializing services...")
        init_services(PipelineService(PipelineConfig()))
    except Exception as e:
        logger.error(f"Error during initialization: {e}", exc_info=True)
        raise


@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": f"{APP_NAME} API",
        "version": APP_VERSION,
        "status": "running"
    }


@app.get("/health")
async def health_check():
    """Health check"""
    if pipeline is None or pipeline.rig is None:
        return {"status": "error", "message": "Rig not initialized"}
    return {
        "status": "healthy",
        "rig": {
            "lattice_tets": pipeline.rig.kdsm.n_tets,
            "cloth_vertices": pipeline.rig.cloth.n_vertices
        }
    }


@app.get("/status", response_model=StatusResponse)
async def get_status():
    """Get system status"""
    if pipeline is None or training_service is None:
        raise HTTPException(status_code=503, detail="Services not initialized")
    try:
        frames_dir = pipeline.datasets_dir
        frames = DatasetStore(str(frames_dir), "frames").count() if frames_dir.exists() else 0
        return StatusResponse(
            status="running",
            workspace=str(pipeline.workspace),
            dataset_frames=frames,
            cloth_vertices=pipeline.rig.cloth.n_vertices,
            lattice_tets=pipeline.rig.kdsm.n_tets,
            trained_models=sorted(training_service.models)
        )
    except Exception as e:
        logger.error(f"Error getting status: {e}")
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/infer", response_model=InferResponse)
async def infer_cloth(request: InferRequest):
    """World-space cloth for a pose from the model of the requested label kind"""
    if pipeline is None or training_service is None:
        raise HTTPException(status_code=503, detail="Services not initialized")
    start = time.perf_counter()
    try:
        angles = np.asarray(request.angles, dtype=np.float64)
        n_joints = pipeline.rig.skeleton.n_joints
        if angles.shape != (n_joints, 3):
            raise ShapeMismatchError(f"Expected {n_joints} x 3 joint angles, got {angles.shape}")
        pose = Pose(pose_id=request.pose_id, angles=angles, translation=np.asarray(request.translation))
        positions, unresolved = training_service.predict(request.kind, pose)
    except KeyError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except ShapeMismatchError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except KdsmError as e:
        logger.warning(f"Inference rejected: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Inference error: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=str(e))
    return InferResponse(
        pose_id=request.pose_id,
        kind=request.kind,
        vertices=positions.tolist(),
        unresolved=[int(i) for i in unresolved],
        infer_time_ms=(time.perf_counter() - start) * 1000.0
    )


@app.get("/report", response_model=MetricsReport)
async def get_report():
    """Last metrics report of the workspace"""
    if pipeline is None:
        raise HTTPException(status_code=503, detail="Services not initialized")
    path = pipeline.reports_dir / "metrics.json"
    if not path.exists():
        raise HTTPException(status_code=404, detail="No metrics report yet; run the pipeline first")
    with open(path, "r", encoding="utf-8") as f:
        return MetricsReport.model_validate(json.load(f))
