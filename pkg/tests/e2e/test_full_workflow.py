"""
E2E тесты полных workflow
"""
import json
import time

import pytest
from fastapi.testclient import TestClient

import src.api.routes as routes_module
from src.api.routes import app, init_services
from src.main import main
from src.services.pipeline_service import PipelineService
from src.storage.models import PipelineConfig
from tests.conftest import tiny_config_dict


def run_cli(output_dir: str, config_dir: str) -> str:
    """Прогон конвейера через командную строку; возвращает путь к рабочей директории"""
    config_path = f"{config_dir}/tiny.json"
    data = tiny_config_dict(output_dir)
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump(data, f)
    assert main(["run", "--config", config_path]) == 0
    return f"{output_dir}/{data['name']}"


@pytest.mark.e2e
@pytest.mark.slow
class TestFullWorkflow:
    """E2E тесты полных workflow"""

    def test_run_then_serve(self, temp_dir):
        """Полный цикл: прогон из командной строки → инференс через API"""
        workspace = run_cli(f"{temp_dir}/out", temp_dir)
        with open(f"{workspace}/reports/metrics.json", "r", encoding="utf-8") as f:
            report = json.load(f)
        assert report["dataset"]["num_frames"] == 10
        assert set(report["methods"]) >= {"method1", "method2", "hybrid", "fixed"}

        config = PipelineConfig.model_validate(tiny_config_dict(f"{temp_dir}/out"))
        init_services(PipelineService(config))
        try:
            client = TestClient(app)
            angles = [[0.0, 0.0, 0.0] for _ in range(15)]
            response = client.post("/infer", json={"angles": angles, "kind": "hybrid"})
            assert response.status_code == 200
            assert client.get("/report").json()["config_hash"] == report["config_hash"]
        finally:
            routes_module.pipeline = None
            routes_module.training_service = None

    def test_deterministic(self, temp_dir):
        """Два прогона с одним seed дают одинаковые данные и отчет"""
        first = run_cli(f"{temp_dir}/a", temp_dir)
        second = run_cli(f"{temp_dir}/b", temp_dir)

        with open(f"{first}/reports/metrics.json", "rb") as f:
            report_a = f.read()
        with open(f"{second}/reports/metrics.json", "rb") as f:
            report_b = f.read()
        assert report_a == report_b

        store_a = PipelineService(PipelineConfig.model_validate(tiny_config_dict(f"{temp_dir}/a"))).open_store()
        store_b = PipelineService(PipelineConfig.model_validate(tiny_config_dict(f"{temp_dir}/b"))).open_store()
        assert store_a.list_frames() == store_b.list_frames()
        for frame_id in store_a.list_frames():
            assert store_a._frame_path(frame_id).read_bytes() == store_b._frame_path(frame_id).read_bytes()


@pytest.mark.e2e
@pytest.mark.performance
class TestPerformance:
    """E2E тесты производительности"""

    def test_infer_performance(self, tiny_pipeline):
        """Тест производительности инференса"""
        service, _ = tiny_pipeline
        init_services(service)
        try:
            client = TestClient(app)
            angles = [[0.0, 0.0, 0.0] for _ in range(15)]
            client.post("/infer", json={"angles": angles})

            start = time.perf_counter()
            response = client.post("/infer", json={"angles": angles, "pose_id": 1})
            elapsed = time.perf_counter() - start

            assert response.status_code == 200
            assert elapsed < 2.0  # с запасом для тестов
        finally:
            routes_module.pipeline = None
            routes_module.training_service = None


@pytest.mark.e2e
@pytest.mark.slow
@pytest.mark.acceptance
class TestDeskScaleOrdering:
    """Порядок методов на полном прогоне с настройками по умолчанию (500 поз, рубашка ~3k вершин)"""

    @pytest.fixture(scope="class")
    def desk_report(self, tmp_path_factory):
        config = PipelineConfig(output_dir=str(tmp_path_factory.mktemp("desk")))
        start = time.perf_counter()
        report = PipelineService(config).run()
        return report, time.perf_counter() - start

    def test_runtime(self, desk_report):
        """Тест: полный прогон укладывается в 30 минут"""
        _, elapsed = desk_report
        assert elapsed < 30 * 60

    def test_hybrid_labels_beat_method2(self, desk_report):
        """Тест: ошибка гибридных меток не больше 0.2 ошибки меток метода 2"""
        report, _ = desk_report
        assert report.methods["hybrid"].avg_vertex_error <= 0.2 * report.methods["method2"].avg_vertex_error

    def test_method1_labels_are_exact(self, desk_report):
        """Тест: метки метода 1 восстанавливают эталон с ошибкой < 1e-6 см"""
        report, _ = desk_report
        assert report.methods["method1"].max_vertex_error < 1e-6

    def test_network_ordering(self, desk_report):
        """Тест: гибрид <= метод 2 <= метод 1 на тестовой выборке и гибрид на 30% лучше среднего"""
        report, _ = desk_report
        hybrid = report.networks["hybrid"].avg_vertex_error_mean
        method2 = report.networks["method2"].avg_vertex_error_mean
        method1 = report.networks["method1"].avg_vertex_error_mean
        assert hybrid <= method2 <= method1
        assert hybrid <= 0.7 * report.mean_baseline.avg_vertex_error_mean

    def test_volume_ordering(self, desk_report):
        """Тест: ошибка объема гибридной сети не больше, чем у сети метода 2"""
        report, _ = desk_report
        assert report.networks["hybrid"].volume_error_mean <= report.networks["method2"].volume_error_mean
