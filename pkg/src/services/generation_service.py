"""
Dataset generation service: synthetic ground truth and training labels of every method per pose
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core.embedding import (
    GroundTruthFrame,
    LabelResult,
    backmap_ground_truth,
    fixed_label,
    hybrid,
    method1,
    method2,
    reconstruct,
    uvn_offsets,
)
from src.core.geometry import edge_list
from src.core.metrics import delta_d_stats, vertex_error
from src.core.skinning import Pose
from src.core.synthetic import gen_synthetic_gt, sample_poses
from src.services.rig_service import Rig, RigService
from src.storage.dataset_store import DatasetStore, FrameRecord
from src.storage.models import KDSM_KINDS, PipelineConfig

logger = logging.getLogger(__name__)

# Offset added to the dataset seed for the wrinkle pattern
WRINKLE_SEED_OFFSET = 1


class GenerationService:
    """Service generating ground truth frames and their labels"""

    def __init__(self, rig_service: RigService, rig: Rig, config: Optional[PipelineConfig] = None):
        """
        Args:
            rig_service: Service posing the rig
            rig: Built rig
            config: Pipeline configuration
        """
        self.rig_service = rig_service
        self.rig = rig
        self.config = config or rig_service.config
        self.edges = edge_list(rig.cloth)

    @property
    def wrinkle_seed(self) -> int:
        return self.config.dataset.seed + WRINKLE_SEED_OFFSET

    def sample_poses(self, count: Optional[int] = None, first_id: int = 0) -> List[Pose]:
        count = self.config.dataset.num_poses if count is None else count
        return sample_poses(self.rig.skeleton, count, self.config.dataset.seed, first_id)

    def labels_for_frame(self, pose: Pose, positions: Optional[np.ndarray] = None) -> FrameRecord:
        """
        Ground truth and labels of one pose

        Args:
            pose: Pose
            positions: Ground-truth cloth; synthesized when None

        Returns:
            FrameRecord with labels method1, method2, hybrid (plastic displacements) and
            body_offset (UVN offsets), and per-kind reconstruction statistics
        """
        rig, cfg = self.rig, self.config
        if positions is None:
            frame = gen_synthetic_gt(pose, rig.cloth, rig.cloth_weights, rig.skeleton, self.wrinkle_seed)
        else:
            frame = GroundTruthFrame(pose=pose, positions=positions)

        posed = self.rig_service.pose(rig, pose)
        body_posed = self.rig_service.pose_body(rig, pose)
        thickening = cfg.level_set.thickening

        backmap = backmap_ground_truth(frame, posed.locator, rig.kdsm.rest_vertices, rig.cloth.vertices,
                                       cfg.point_location.eps)
        results: Dict[str, LabelResult] = {}
        results["method1"] = method1(backmap, seed=cfg.embedding.seed + pose.pose_id, thickening=thickening)
        results["method2"] = method2(frame, rig.body, body_posed, rig.anchors, rig.cloth.vertices, thickening)
        results["hybrid"] = hybrid(backmap, results["method2"], rig.cloth, cfg.embedding.tau, thickening,
                                   cfg.morph.solver)
        results["fixed"] = fixed_label(pose.pose_id, rig.cloth.n_vertices)

        label_stats = {}
        for kind, label in results.items():
            positions_hat, unresolved = reconstruct(label, rig.cloth.vertices, rig.rest_locator, posed.vertices,
                                                    cfg.point_location.eps, cfg.embedding.clamp_distance)
            max_err, avg_err = vertex_error(positions_hat, frame.positions)
            max_dd, avg_dd = delta_d_stats(label.displacement.displacements, self.edges)
            label_stats[kind] = {
                "max_vertex_error": max_err,
                "avg_vertex_error": avg_err,
                "max_delta_d": max_dd,
                "avg_delta_d": avg_dd,
                "unresolved": int(len(unresolved)),
            }

        counts = backmap.counts()
        stats = {
            "labels": label_stats,
            "hybrid": results["hybrid"].stats,
            "candidates": {"multi": int((counts > 1).sum()), "none": int(len(backmap.no_parent))},
            "inverted_tets": posed.inverted_tets,
        }
        labels = {kind: results[kind].displacement.displacements for kind in KDSM_KINDS}
        labels["body_offset"] = uvn_offsets(rig.anchors, rig.body, body_posed, frame.positions)
        return FrameRecord(pose=pose, positions=frame.positions, labels=labels, stats=stats)

    def generate(self, poses: Sequence[Pose], workers: Optional[int] = None) -> List[FrameRecord]:
        """
        Frame-parallel generation; output order follows the pose order

        Raises:
            KdsmError: first failure of any frame, after logging it
        """
        workers = workers or self.config.dataset.workers
        start = time.perf_counter()
        logger.info(f"Generating {len(poses)} frames with {workers} workers")

        def run(pose: Pose) -> FrameRecord:
            try:
                return self.labels_for_frame(pose)
            except Exception as e:
                logger.error(f"Frame generation failed for pose {pose.pose_id}: {e}", exc_info=True)
                raise

        if workers == 1:
            records = [run(p) for p in poses]
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                records = list(executor.map(run, poses))
        logger.info(f"Generated {len(records)} frames ({time.perf_counter() - start:.1f}s)")
        return records

    def generate_dataset(self, store: DatasetStore, poses: Optional[Sequence[Pose]] = None) -> Dict[str, List[int]]:
        """Generate, persist and split a dataset"""
        poses = list(poses) if poses is not None else self.sample_poses()
        records = self.generate(poses)
        store.add_frames(records)
        cfg = self.config
        store.update_metadata(
            wrinkle_seed=self.wrinkle_seed,
            thresholds={
                "eps": cfg.point_location.eps,
                "eps_box": cfg.point_location.eps_box,
                "tau": cfg.embedding.tau,
                "thickening": cfg.level_set.thickening,
            },
            mesh_hashes=self.rig.mesh_hashes(),
        )
        return store.split_ids(cfg.dataset.seed, cfg.dataset.split)
