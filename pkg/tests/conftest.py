"""
Конфигурация pytest с фикстурами
"""
import pytest
import tempfile
import shutil

import numpy as np

from src.core.geometry import TriangleMesh
from src.core.level_set import ScalarGrid
from src.services.rig_service import RigService
from src.storage.models import PipelineConfig

# Треугольники единичного куба с внешней ориентацией
CUBE_VERTICES = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
], dtype=np.float64)
CUBE_TRIANGLES = np.array([
    [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
    [0, 1, 5], [0, 5, 4], [3, 7, 6], [3, 6, 2],
    [0, 4, 7], [0, 7, 3], [1, 2, 6], [1, 6, 5],
], dtype=np.int64)


def tiny_config_dict(output_dir: str) -> dict:
    """Маленькая конфигурация, на которой весь конвейер укладывается в секунды"""
    return {
        "name": "tiny",
        "output_dir": output_dir,
        "level_set": {"dx": 3.0, "padding": 12.0, "thickening": 6.0},
        "lattice": {"h": 3.0, "refine_band": 0.0},
        "model": {"image_size": 32, "lambda_reg": 1e-3},
        "dataset": {"num_poses": 10, "seed": 11, "split": [0.6, 0.2, 0.2], "workers": 2},
        "mannequin": {"resolution": 8, "shirt_columns": 16, "shirt_rows": 8, "sleeve_rings": 3, "offset": 2.0},
    }


@pytest.fixture(scope="function")
def temp_dir():
    """Создает временную директорию для тестов"""
    path = tempfile.mkdtemp()
    yield path
    shutil.rmtree(path, ignore_errors=True)


@pytest.fixture(scope="function")
def tiny_config(temp_dir):
    """Маленькая конфигурация конвейера во временной директории"""
    return PipelineConfig.model_validate(tiny_config_dict(temp_dir))


@pytest.fixture(scope="session")
def tiny_rig():
    """Риг маленького манекена (сессионный для переиспользования)"""
    path = tempfile.mkdtemp()
    config = PipelineConfig.model_validate(tiny_config_dict(path))
    service = RigService(config)
    yield service, service.build()
    shutil.rmtree(path, ignore_errors=True)


@pytest.fixture
def unit_cube():
    """Замкнутый единичный куб [0, 1]^3"""
    return TriangleMesh(vertices=CUBE_VERTICES.copy(), triangles=CUBE_TRIANGLES.copy())


@pytest.fixture
def open_cube():
    """Единичный куб без верхней грани"""
    return TriangleMesh(vertices=CUBE_VERTICES.copy(), triangles=CUBE_TRIANGLES[[0, 1] + list(range(4, 12))])


@pytest.fixture
def unit_tet():
    """Положительно ориентированный единичный тетраэдр"""
    return np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)


@pytest.fixture
def solid_grid():
    """Сетка 3x3x3 с отрицательными значениями во всех узлах"""
    return ScalarGrid(origin=np.zeros(3), dx=1.0, dims=(3, 3, 3), values=-np.ones((3, 3, 3)))


@pytest.fixture
def rng():
    """Детерминированный генератор случайных чисел"""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_pipeline():
    """Полный прогон маленького конвейера (сессионный, общий для интеграционных тестов)"""
    from src.services.pipeline_service import PipelineService

    path = tempfile.mkdtemp()
    service = PipelineService(PipelineConfig.model_validate(tiny_config_dict(path)))
    report = service.run()
    yield service, report
    shutil.rmtree(path, ignore_errors=True)
