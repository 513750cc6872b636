"""
Metrics service: label statistics of the dataset and test errors of trained models
"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core.geometry import TriangleMesh
from src.core.metrics import mean_std, vertex_distances, volume_error
from src.storage.dataset_store import FrameRecord
from src.storage.models import DatasetMetadata, MethodStatistics, MetricsReport, NetworkStatistics

logger = logging.getLogger(__name__)


class MetricsService:
    """Aggregates per-frame statistics into a MetricsReport"""

    def __init__(self, cloth: TriangleMesh):
        """
        Args:
            cloth: Rest cloth (topology for volume errors)
        """
        self.cloth = cloth

    @staticmethod
    def method_statistics(frames: Sequence[FrameRecord], kind: str) -> MethodStatistics:
        """Reconstruction error and displacement variation of one label kind over the frames"""
        rows = [f.stats["labels"][kind] for f in frames if kind in f.stats.get("labels", {})]
        if not rows:
            raise KeyError(f"No statistics for label kind '{kind}'")
        avg_errors = [r["avg_vertex_error"] for r in rows]
        avg_dd = [r["avg_delta_d"] for r in rows]
        return MethodStatistics(
            kind=kind,
            max_vertex_error=max(r["max_vertex_error"] for r in rows),
            avg_vertex_error=mean_std(avg_errors)[0],
            avg_vertex_error_std=mean_std(avg_errors)[1],
            max_delta_d=max(r["max_delta_d"] for r in rows),
            avg_delta_d=mean_std(avg_dd)[0],
            per_example_avg_vertex_error=avg_errors,
            per_example_avg_delta_d=avg_dd,
        )

    def network_statistics(self, kind: str, predictions: Sequence[np.ndarray], ground_truth: Sequence[np.ndarray],
                           unresolved: Sequence[int]) -> NetworkStatistics:
        """
        Per-example average vertex and volume errors of predicted cloth against ground truth

        Raises:
            OpenMeshError: if the cloth boundary cannot be capped
        """
        avg_errors: List[float] = []
        max_error = 0.0
        volumes: List[float] = []
        for predicted, gt in zip(predictions, ground_truth):
            distances = vertex_distances(predicted, gt)
            avg_errors.append(float(distances.mean()))
            max_error = max(max_error, float(distances.max()))
            volumes.append(volume_error(predicted, gt, self.cloth))
        err_mean, err_std = mean_std(avg_errors)
        vol_mean, vol_std = mean_std(volumes)
        logger.info(f"Model '{kind}': avg vertex error {err_mean:.4f} +- {err_std:.4f} cm, "
                    f"volume error {vol_mean:.2f} +- {vol_std:.2f} cm^3")
        return NetworkStatistics(
            kind=kind,
            avg_vertex_error_mean=err_mean,
            avg_vertex_error_std=err_std,
            max_vertex_error=max_error,
            volume_error_mean=vol_mean,
            volume_error_std=vol_std,
            unresolved_vertices=int(sum(unresolved)),
            per_example_avg_vertex_error=avg_errors,
            per_example_volume_error=volumes,
        )

    @staticmethod
    def candidate_statistics(frames: Sequence[FrameRecord]) -> Dict[str, float]:
        multi = [f.stats["candidates"]["multi"] for f in frames]
        none = [f.stats["candidates"]["none"] for f in frames]
        inverted = [f.stats["inverted_tets"] for f in frames]
        return {
            "avg_multi_candidate_vertices": mean_std(multi)[0],
            "avg_no_candidate_vertices": mean_std(none)[0],
            "avg_inverted_tets": mean_std(inverted)[0],
            "max_inverted_tets": float(max(inverted, default=0)),
        }

    @staticmethod
    def hybrid_statistics(frames: Sequence[FrameRecord]) -> Dict[str, float]:
        keys = ("single", "multi_validated", "multi_rejected", "no_parent", "final_morphed", "rounds",
                "unconstrained_components")
        stats = {f"avg_{k}": mean_std([f.stats["hybrid"][k] for f in frames])[0] for k in keys}
        stats["avg_morph_validated"] = mean_std([sum(f.stats["hybrid"]["morph_validated"]) for f in frames])[0]
        return stats

    def build_report(self, config_hash: str, metadata: DatasetMetadata, frames: Sequence[FrameRecord],
                     method_kinds: Sequence[str], networks: Dict[str, NetworkStatistics],
                     mean_baseline: Optional[NetworkStatistics] = None) -> MetricsReport:
        methods = {k: self.method_statistics(frames, k) for k in method_kinds}
        return MetricsReport(
            config_hash=config_hash,
            dataset=metadata,
            methods=methods,
            networks=dict(networks),
            candidate_stats=self.candidate_statistics(frames),
            hybrid_stats=self.hybrid_statistics(frames),
            mean_baseline=mean_baseline,
        )

    @staticmethod
    def histogram_source(report: MetricsReport) -> Dict[str, List[float]]:
        """Per-example average vertex errors of every model, keyed by label kind"""
        source = {k: n.per_example_avg_vertex_error for k, n in report.networks.items()}
        if report.mean_baseline is not None:
            source["mean"] = report.mean_baseline.per_example_avg_vertex_error
        return source
