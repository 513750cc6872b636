"""
Pipeline service: rig -> dataset -> training -> evaluation, with stage-tagged failures
"""
import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Optional

from src.core.errors import StageError
from src.services.generation_service import GenerationService
from src.services.metrics_service import MetricsService
from src.services.rig_service import Rig, RigService
from src.services.training_service import MEAN_BASELINE, TrainingService
from src.storage.dataset_store import DatasetStore
from src.storage.models import KDSM_KINDS, MetricsReport, NetworkStatistics, PipelineConfig
from src.utils.saver import ResultSaver

logger = logging.getLogger(__name__)


@contextmanager
def stage(name: str):
    """Log a stage and re-raise any failure as StageError(name, cause)"""
    start = time.perf_counter()
    logger.info(f"Stage '{name}' started")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}", exc_info=True)
        raise StageError(name, e) from e
    logger.info(f"Stage '{name}' finished ({time.perf_counter() - start:.1f}s)")


class PipelineService:
    """Runs the whole experiment for one configuration"""

    def __init__(self, config: PipelineConfig):
        """
        Args:
            config: Pipeline configuration; outputs go to config.output_dir/config.name
        """
        self.config = config
        self.workspace = Path(config.output_dir) / config.name
        self.rig_service = RigService(config)
        self.rig: Optional[Rig] = None

    @property
    def datasets_dir(self) -> Path:
        return self.workspace / "datasets"

    @property
    def models_dir(self) -> Path:
        return self.workspace / "models"

    @property
    def reports_dir(self) -> Path:
        return self.workspace / "reports"

    def build_rig(self) -> Rig:
        if self.rig is None:
            with stage("rig"):
                self.rig = self.rig_service.build()
        return self.rig

    def open_store(self) -> DatasetStore:
        return DatasetStore(str(self.datasets_dir), "frames")

    def training_service(self) -> TrainingService:
        return TrainingService(self.rig_service, self.build_rig(), self.models_dir, self.config)

    def generate(self) -> DatasetStore:
        """Regenerate the dataset from scratch and split it"""
        rig = self.build_rig()
        with stage("gen-data"):
            store = self.open_store()
            store.delete()
            GenerationService(self.rig_service, rig, self.config).generate_dataset(store)
        return store

    def train(self, store: Optional[DatasetStore] = None) -> TrainingService:
        """Train one model per configured label kind on the train split"""
        store = store or self.open_store()
        with stage("train"):
            split = store.metadata.split
            if not split.get("train"):
                raise ValueError("Dataset has no train split; generate it first")
            training = self.training_service()
            training.train_all(store.get_frames(split["train"]), self.config.methods)
        return training

    def evaluate(self, store: Optional[DatasetStore] = None,
                 training: Optional[TrainingService] = None) -> MetricsReport:
        """Test-split errors of every model plus dataset label statistics; writes report and histogram"""
        store = store or self.open_store()
        cfg = self.config
        with stage("metrics"):
            if training is None:
                training = self.training_service()
                training.load_models()
            frames = store.get_frames(store.list_frames())
            by_id = {f.pose_id: f for f in frames}
            split = store.metadata.split
            test = [by_id[i] for i in split.get("test", [])] or [by_id[i] for i in split.get("val", [])]
            if not test:
                raise ValueError("Dataset has no test or validation frames")

            metrics = MetricsService(self.build_rig().cloth)
            networks: Dict[str, NetworkStatistics] = {}
            for kind in list(cfg.methods) + [MEAN_BASELINE]:
                predictions, unresolved = [], []
                for frame in test:
                    positions, bad = training.predict(kind, frame.pose)
                    predictions.append(positions)
                    unresolved.append(len(bad))
                networks[kind] = metrics.network_statistics(kind, predictions, [f.positions for f in test],
                                                            unresolved)
            mean_baseline = networks.pop(MEAN_BASELINE)
            method_kinds = [k for k in cfg.methods if k in KDSM_KINDS or k == "fixed"]
            report = metrics.build_report(cfg.config_hash(), store.metadata, frames, method_kinds, networks,
                                          mean_baseline)

            saver = ResultSaver(self.reports_dir)
            saver.save_report(report.model_dump())
            saver.save_histogram(metrics.histogram_source(report))
        return report

    def run(self) -> MetricsReport:
        """
        Full run: generate and split the dataset, train one model per label kind,
        evaluate on the test split and write report + histogram

        Raises:
            StageError: tagged with the failing stage
        """
        store = self.generate()
        training = self.train(store)
        return self.evaluate(store, training)


def run_pipeline(config: PipelineConfig) -> MetricsReport:
    """Run the pipeline for a configuration"""
    return PipelineService(config).run()
