"""
Интеграционные тесты для сервисов конвейера
"""
import json

import pytest
import numpy as np

from src.core.errors import StageError
from src.core.point_location import DEFAULT_BARY_MARGIN
from src.core.skinning import Pose
from src.services.generation_service import GenerationService
from src.services.pipeline_service import PipelineService, stage
from src.services.rig_service import RigService
from src.storage.dataset_store import DatasetStore


@pytest.mark.integration
class TestRigService:
    """Тесты для RigService"""

    def test_rig(self, tiny_rig):
        """Тест состава рига"""
        _, rig = tiny_rig
        assert rig.kdsm.n_tets > 0
        assert rig.kdsm.skin_weights is not None
        assert len(rig.rest_embedding) == rig.cloth.n_vertices
        assert rig.cloth.uv.shape == (rig.cloth.n_vertices, 2)
        assert set(rig.mesh_hashes()) == {"body", "cloth", "kdsm"}

    def test_rest_pose_lattice(self, tiny_rig):
        """Тест решетки в позе покоя"""
        service, rig = tiny_rig
        posed = service.pose(rig, Pose.identity(rig.skeleton))
        np.testing.assert_allclose(posed.vertices, rig.kdsm.rest_vertices, atol=1e-9)
        assert posed.inverted_tets == 0

    def test_pose_is_cached(self, tiny_rig):
        """Тест повторного использования позированной решетки"""
        service, rig = tiny_rig
        pose = Pose(pose_id=5, angles=np.full((rig.skeleton.n_joints, 3), 0.05))
        assert service.pose(rig, pose) is service.pose(rig, pose)


    def test_locator_margin_follows_eps(self, tiny_rig, tiny_config):
        """Тест: запас коробок локатора не меньше настроенного eps"""
        service, rig = tiny_rig
        assert service.bary_margin == DEFAULT_BARY_MARGIN
        assert rig.rest_locator.bvh.bary_margin == DEFAULT_BARY_MARGIN

        wide = tiny_config.model_copy(update={
            "point_location": tiny_config.point_location.model_copy(update={"eps": 0.05}),
        })
        wide_service = RigService(wide)
        assert wide_service.bary_margin == 0.05
        posed = wide_service.pose(rig, Pose.identity(rig.skeleton))
        assert posed.locator.bvh.bary_margin == 0.05


@pytest.mark.integration
class TestGenerationService:
    """Тесты для GenerationService"""

    def test_labels_at_rest(self, tiny_rig, tiny_config):
        """Тест нулевых меток в позе покоя"""
        service, rig = tiny_rig
        generation = GenerationService(service, rig, tiny_config)
        record = generation.labels_for_frame(Pose.identity(rig.skeleton))
        assert set(record.labels) == {"method1", "method2", "hybrid", "body_offset"}
        assert record.stats["labels"]["fixed"]["max_vertex_error"] < 1e-6
        for kind in ("method1", "hybrid"):
            assert np.abs(record.labels[kind]).max() < 1e-6

    def test_parallel_matches_serial(self, tiny_rig, tiny_config):
        """Тест совпадения параллельной и последовательной генерации"""
        service, rig = tiny_rig
        generation = GenerationService(service, rig, tiny_config)
        poses = generation.sample_poses(3)
        serial = generation.generate(poses, workers=1)
        parallel = generation.generate(poses, workers=3)
        assert [r.pose_id for r in parallel] == [0, 1, 2]
        for a, b in zip(serial, parallel):
            for kind in a.labels:
                np.testing.assert_array_equal(a.labels[kind], b.labels[kind])


@pytest.mark.integration
@pytest.mark.slow
class TestPipelineService:
    """Тесты для PipelineService"""

    def test_dataset(self, tiny_pipeline):
        """Тест датасета после прогона"""
        service, _ = tiny_pipeline
        store = service.open_store()
        assert store.count() == 10
        split = store.metadata.split
        assert [len(split[k]) for k in ("train", "val", "test")] == [6, 2, 2]

    def test_report(self, tiny_pipeline):
        """Тест отчета о метриках"""
        service, report = tiny_pipeline
        assert set(report.networks) == {"method1", "method2", "hybrid", "body_offset", "fixed"}
        assert report.mean_baseline is not None
        assert {"method1", "method2", "hybrid", "fixed"} <= set(report.methods)
        assert report.methods["hybrid"].avg_vertex_error <= report.methods["fixed"].avg_vertex_error
        assert report.methods["method1"].max_vertex_error < 1e-6
        for stats in report.networks.values():
            assert len(stats.per_example_avg_vertex_error) == 2
            assert np.isfinite(stats.avg_vertex_error_mean)

    def test_report_files(self, tiny_pipeline):
        """Тест файлов отчета и гистограммы"""
        service, report = tiny_pipeline
        with open(service.reports_dir / "metrics.json", "r", encoding="utf-8") as f:
            saved = json.load(f)
        assert saved["config_hash"] == report.config_hash
        assert (service.reports_dir / "histogram.csv").exists()

    def test_models_saved(self, tiny_pipeline):
        """Тест сохраненных моделей"""
        service, _ = tiny_pipeline
        names = sorted(p.stem for p in service.models_dir.glob("*.npz"))
        assert names == ["body_offset", "hybrid", "mean", "method1", "method2"]

    def test_evaluate_from_disk(self, tiny_pipeline):
        """Тест повторной оценки по моделям с диска"""
        service, report = tiny_pipeline
        again = PipelineService(service.config).evaluate()
        assert again.networks["hybrid"].avg_vertex_error_mean == pytest.approx(
            report.networks["hybrid"].avg_vertex_error_mean)

    def test_train_without_dataset(self, tiny_config):
        """Тест ошибки обучения без датасета"""
        with pytest.raises(StageError) as info:
            PipelineService(tiny_config).train()
        assert info.value.stage == "train"


@pytest.mark.integration
class TestStage:
    """Тесты для контекста этапа"""

    def test_wraps_errors(self):
        """Тест оборачивания ошибки этапа"""
        with pytest.raises(StageError) as info:
            with stage("demo"):
                raise ValueError("broken")
        assert info.value.stage == "demo"
        assert isinstance(info.value.cause, ValueError)

    def test_keeps_stage_errors(self):
        """Тест вложенных этапов"""
        with pytest.raises(StageError) as info:
            with stage("outer"):
                with stage("inner"):
                    raise RuntimeError("x")
        assert info.value.stage == "inner"
