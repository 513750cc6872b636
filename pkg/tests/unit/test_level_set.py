"""
Unit тесты для поля знакового расстояния
"""
import pytest
import numpy as np

from src.core.errors import OutOfBoundsError
from src.core.geometry import TriangleMesh
from src.core.level_set import ScalarGrid, build_level_set, sample, sample_many, thicken, unsigned_distance
from tests.conftest import CUBE_TRIANGLES, CUBE_VERTICES


def box_sdf(points: np.ndarray, half: float) -> np.ndarray:
    q = np.abs(points) - half
    return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)


@pytest.fixture
def box():
    """Куб со стороной 10 см с центром в начале координат"""
    return TriangleMesh(vertices=CUBE_VERTICES * 10.0 - 5.0, triangles=CUBE_TRIANGLES)


@pytest.mark.unit
class TestBuildLevelSet:
    """Тесты для построения поля расстояния"""

    def test_matches_analytic_box(self, box):
        """Тест совпадения с аналитическим полем куба"""
        grid = build_level_set(box, dx=1.0, padding=3.5)
        assert grid.dims == (18, 18, 18)
        expected = box_sdf(grid.node_positions(), 5.0)
        np.testing.assert_allclose(grid.values.ravel(), expected, atol=1e-9)

    def test_sign_convention(self, box):
        """Тест знака: отрицательное внутри"""
        grid = build_level_set(box, dx=1.0, padding=3.5)
        assert sample(grid, np.zeros(3)) < 0
        assert sample(grid, np.array([7.5, 0.0, 0.0])) > 0

    def test_union_of_components(self):
        """Тест объединения нескольких компонент"""
        left = CUBE_VERTICES * 4.0 - np.array([6.0, 2.0, 2.0])
        right = CUBE_VERTICES * 4.0 + np.array([2.0, -2.0, -2.0])
        body = TriangleMesh(vertices=np.concatenate([left, right]),
                            triangles=np.concatenate([CUBE_TRIANGLES, CUBE_TRIANGLES + 8]))
        grid = build_level_set(body, dx=0.5, padding=2.0)
        assert sample(grid, np.array([-4.0, 0.0, 0.0])) < 0
        assert sample(grid, np.array([4.0, 0.0, 0.0])) < 0
        # Зазор между кубами снаружи, на расстоянии 2 см от обоих
        assert sample(grid, np.array([0.0, 0.0, 0.0])) == pytest.approx(2.0, abs=1e-9)

    def test_unsigned_distance_of_triangle(self):
        """Тест расстояния до одного треугольника"""
        corners = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]]], dtype=float)
        d = unsigned_distance(np.array([[0.1, 0.1, 3.0], [2.0, 0.0, 0.0]]), corners)
        np.testing.assert_allclose(d, [3.0, 1.0])


@pytest.mark.unit
class TestThickenAndSample:
    """Тесты для утолщения и интерполяции"""

    @pytest.fixture
    def linear_grid(self):
        """Сетка с линейным полем x + 2y - z"""
        grid = ScalarGrid(origin=np.zeros(3), dx=0.5, dims=(5, 5, 5), values=np.zeros((5, 5, 5)))
        p = grid.node_positions()
        return ScalarGrid(origin=grid.origin, dx=grid.dx, dims=grid.dims,
                          values=(p[:, 0] + 2 * p[:, 1] - p[:, 2]).reshape(grid.dims))

    def test_trilinear_reproduces_linear_field(self, linear_grid, rng):
        """Тест точности трилинейной интерполяции на линейном поле"""
        points = rng.uniform(0.0, 2.0, size=(50, 3))
        expected = points[:, 0] + 2 * points[:, 1] - points[:, 2]
        np.testing.assert_allclose(sample_many(linear_grid, points), expected, atol=1e-12)

    def test_upper_corner_is_inside_bounds(self, linear_grid):
        """Тест выборки в верхнем углу сетки"""
        assert sample(linear_grid, linear_grid.upper) == pytest.approx(2.0 + 4.0 - 2.0)

    def test_out_of_bounds(self, linear_grid):
        """Тест ошибки выхода за пределы сетки"""
        with pytest.raises(OutOfBoundsError):
            sample(linear_grid, np.array([2.5, 0.0, 0.0]))

    def test_thicken_shifts_values(self, linear_grid):
        """Тест сдвига значений на константу утолщения"""
        thick = thicken(linear_grid, 1.5)
        np.testing.assert_allclose(thick.values, linear_grid.values - 1.5)
        assert thick.dims == linear_grid.dims

    def test_negative_thickening_raises(self, linear_grid):
        """Тест ошибки для отрицательного утолщения"""
        with pytest.raises(ValueError):
            thicken(linear_grid, -1.0)

    def test_grid_validation(self):
        """Тест проверки параметров сетки"""
        with pytest.raises(ValueError):
            ScalarGrid(origin=np.zeros(3), dx=0.0, dims=(2, 2, 2), values=np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            ScalarGrid(origin=np.zeros(3), dx=1.0, dims=(1, 2, 2), values=np.zeros((1, 2, 2)))
