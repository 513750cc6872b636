"""
Интеграционные тесты для API эндпоинтов
"""
import pytest
from fastapi.testclient import TestClient

import src.api.routes as routes_module
from src.api.routes import app, init_services
from src.config.settings import APP_NAME, APP_VERSION


@pytest.fixture(scope="module")
def initialized_app(tiny_pipeline):
    """Инициализирует сервисы для тестов"""
    service, _ = tiny_pipeline
    init_services(service)

    yield app

    # Очистка
    routes_module.pipeline = None
    routes_module.training_service = None


@pytest.fixture(scope="module")
def client(initialized_app):
    """Фикстура для тестового клиента с инициализированными сервисами"""
    return TestClient(initialized_app)


def rest_angles(n_joints: int = 15):
    return [[0.0, 0.0, 0.0] for _ in range(n_joints)]


@pytest.mark.integration
class TestHealthEndpoints:
    """Тесты для эндпоинтов здоровья"""

    def test_root_endpoint(self, client):
        """Тест корневого эндпоинта"""
        response = client.get("/")
        assert response.status_code == 200
        data = response.json()
        assert data["message"] == f"{APP_NAME} API"
        assert data["version"] == APP_VERSION

    def test_health_check(self, client):
        """Тест health check"""
        response = client.get("/health")
        assert response.status_code == 200
        data = response.json()
        assert data["status"] == "healthy"
        assert data["rig"]["lattice_tets"] > 0

    def test_status(self, client):
        """Тест статуса системы"""
        response = client.get("/status")
        assert response.status_code == 200
        data = response.json()
        assert data["dataset_frames"] == 10
        assert "hybrid" in data["trained_models"]
        assert "mean" in data["trained_models"]


@pytest.mark.integration
class TestInferEndpoint:
    """Тесты для эндпоинта инференса"""

    @pytest.mark.parametrize("kind", ["method1", "method2", "hybrid", "body_offset", "fixed"])
    def test_infer(self, client, tiny_pipeline, kind):
        """Тест инференса для каждого вида меток"""
        service, _ = tiny_pipeline
        response = client.post("/infer", json={"angles": rest_angles(), "kind": kind, "pose_id": 3})
        assert response.status_code == 200
        data = response.json()
        assert data["pose_id"] == 3
        assert data["kind"] == kind
        assert len(data["vertices"]) == service.rig.cloth.n_vertices
        assert data["infer_time_ms"] >= 0

    def test_wrong_joint_count(self, client):
        """Тест неверного числа суставов"""
        response = client.post("/infer", json={"angles": rest_angles(4)})
        assert response.status_code == 422

    def test_unknown_kind(self, client):
        """Тест неизвестного вида меток"""
        response = client.post("/infer", json={"angles": rest_angles(), "kind": "method3"})
        assert response.status_code == 422

    def test_missing_model(self, client):
        """Тест вида меток без обученной модели"""
        saved = routes_module.training_service.models.pop("method1")
        try:
            response = client.post("/infer", json={"angles": rest_angles(), "kind": "method1"})
            assert response.status_code == 404
        finally:
            routes_module.training_service.models["method1"] = saved


@pytest.mark.integration
class TestReportEndpoint:
    """Тесты для эндпоинта отчета"""

    def test_report(self, client, tiny_pipeline):
        """Тест получения отчета"""
        _, report = tiny_pipeline
        response = client.get("/report")
        assert response.status_code == 200
        data = response.json()
        assert data["config_hash"] == report.config_hash
        assert set(data["networks"]) == set(report.networks)


@pytest.mark.integration
class TestUninitialized:
    """Тесты без инициализированных сервисов"""

    def test_not_initialized(self):
        """Тест ответов до инициализации"""
        saved = routes_module.pipeline, routes_module.training_service
        routes_module.pipeline, routes_module.training_service = None, None
        try:
            client = TestClient(app)
            assert client.get("/health").json()["status"] == "error"
            assert client.get("/status").status_code == 503
            assert client.post("/infer", json={"angles": rest_angles()}).status_code == 503
        finally:
            routes_module.pipeline, routes_module.training_service = saved
