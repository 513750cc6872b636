"""
Unit тесты для модели смещений: атлас, растеризация, регрессия и вывод
"""
import pytest
import numpy as np

from src.core.displacement_model import (
    CHANNELS, ClothImage, MeanRegressor, RidgeRegressor, gather, infer, load_regressor, orthographic_atlas,
    pose_feature, pose_features, rasterize, train,
)
from src.core.errors import ShapeMismatchError
from src.core.geometry import BACK, FRONT, TriangleMesh
from src.core.point_location import TetLocator
from src.core.skinning import Pose
from src.core.tet_lattice import build_lattice


def full_mask_images(targets: np.ndarray, size: int = 4):
    """Изображения с полной маской из векторов (n, size * size * 6)"""
    mask = np.ones((size, size, 2), dtype=bool)
    return [ClothImage.from_vector(t, mask) for t in targets]


@pytest.mark.unit
class TestAtlasAndRaster:
    """Тесты для атласа и растеризации"""

    def test_pixel_center_write(self):
        """Тест записи в центр пикселя"""
        image = rasterize(np.array([[1.0, 2.0, 3.0]]), np.array([[0.5, 0.5]]), np.array([FRONT]), size=128)
        np.testing.assert_allclose(image.pixels[64, 64, 0:3], [1.0, 2.0, 3.0])
        assert image.mask[64, 64, 0]
        assert not image.mask[64, 64, 1]
        assert image.mask.sum() == 1

    def test_back_side_channels(self):
        """Тест записи задней стороны в каналы 3-5"""
        image = rasterize(np.array([[1.0, 2.0, 3.0]]), np.array([[0.25, 0.5]]), np.array([BACK]), size=8)
        np.testing.assert_allclose(image.pixels[4, 2, 3:6], [1.0, 2.0, 3.0])
        np.testing.assert_allclose(image.pixels[4, 2, 0:3], 0.0)

    def test_gather_reads_back_values(self, rng):
        """Тест выборки значений из растеризованного изображения"""
        uv = np.array([[2, 3], [5, 1], [6, 6]], dtype=float) / 8.0
        sides = np.array([FRONT, BACK, FRONT])
        values = rng.normal(size=(3, 3))
        image = rasterize(values, uv, sides, size=8)
        np.testing.assert_allclose(gather(image, uv, sides), values, atol=1e-12)

    def test_uncovered_pixels_are_zero(self, rng):
        """Тест нулевых значений вне маски"""
        uv = rng.uniform(0.1, 0.9, size=(20, 2))
        sides = rng.integers(0, 2, size=20)
        image = rasterize(rng.normal(size=(20, 3)), uv, sides, size=16)
        assert np.all(image.pixels[~image.channel_mask()] == 0.0)

    def test_count_mismatch(self):
        """Тест ошибки несовпадения размеров"""
        with pytest.raises(ShapeMismatchError):
            rasterize(np.zeros((2, 3)), np.zeros((3, 2)), np.zeros(3), size=8)

    def test_atlas_of_cube(self, unit_cube):
        """Тест атласа единичного куба"""
        uv, sides = orthographic_atlas(unit_cube, margin=0.1)
        assert uv.min() >= 0.1 - 1e-12
        assert uv.max() <= 0.9 + 1e-12
        # Вершины с z = 1 смотрят вперед
        assert np.all(sides[unit_cube.vertices[:, 2] == 1.0] == FRONT)
        assert np.all(sides[unit_cube.vertices[:, 2] == 0.0] == BACK)

    def test_image_shape_validation(self):
        """Тест проверки формы изображения"""
        with pytest.raises(ShapeMismatchError):
            ClothImage(pixels=np.zeros((4, 4, 3)), mask=np.zeros((4, 4, 2)))


@pytest.mark.unit
class TestRegressors:
    """Тесты для регрессоров"""

    def test_pose_feature_of_identity(self):
        """Тест признаков нулевой позы"""
        pose = Pose(pose_id=0, angles=np.zeros((15, 3)))
        feature = pose_feature(pose)
        assert feature.shape == (15 * 6,)
        np.testing.assert_allclose(feature[:6], [1, 0, 0, 0, 1, 0])

    def test_ridge_fits_linear_target(self, rng):
        """Тест точного приближения линейной зависимости"""
        features = rng.normal(size=(30, 5))
        outputs = 4 * 4 * CHANNELS
        targets = features @ rng.normal(size=(5, outputs)) + rng.normal(size=outputs)
        images = full_mask_images(targets)
        model = train(features, images, lambda_reg=1e-10)
        assert model.training_loss(features, images) < 1e-8

    def test_identical_examples_predict_the_image(self, rng):
        """Тест: два одинаковых примера предсказывают это изображение"""
        image = full_mask_images(rng.normal(size=(1, 4 * 4 * CHANNELS)))[0]
        feature = rng.normal(size=(1, 6))
        model = train(np.vstack([feature, feature]), [image, image])
        np.testing.assert_allclose(model.predict(feature).pixels, image.pixels, atol=1e-10)

    def test_mean_regressor(self, rng):
        """Тест регрессора среднего"""
        targets = rng.normal(size=(3, 4 * 4 * CHANNELS))
        model = train(rng.normal(size=(3, 2)), full_mask_images(targets), kind="mean")
        assert isinstance(model, MeanRegressor)
        np.testing.assert_allclose(model.predict(np.zeros((1, 2))).masked_vector(), targets.mean(axis=0))

    def test_save_and_load(self, rng, temp_dir):
        """Тест сохранения и загрузки модели"""
        features = rng.normal(size=(8, 3))
        model = train(features, full_mask_images(rng.normal(size=(8, 4 * 4 * CHANNELS))), lambda_reg=0.1)
        path = f"{temp_dir}/model.npz"
        model.save(path)
        loaded = load_regressor(path)
        assert isinstance(loaded, RidgeRegressor)
        assert loaded.lambda_reg == pytest.approx(0.1)
        np.testing.assert_allclose(loaded.predict_vectors(features), model.predict_vectors(features))

    def test_untrained_model_raises(self):
        """Тест ошибки предсказания без обучения"""
        with pytest.raises(RuntimeError):
            RidgeRegressor().predict(np.zeros((1, 3)))

    def test_feature_count_mismatch(self, rng):
        """Тест ошибки числа признаков"""
        model = train(rng.normal(size=(4, 3)), full_mask_images(rng.normal(size=(4, 4 * 4 * CHANNELS))))
        with pytest.raises(ShapeMismatchError):
            model.predict(np.zeros((1, 5)))

    def test_unknown_kind(self, rng):
        """Тест ошибки неизвестного типа регрессора"""
        with pytest.raises(ValueError):
            train(np.zeros((2, 1)), full_mask_images(np.zeros((2, 4 * 4 * CHANNELS))), kind="forest")

    def test_negative_lambda_rejected(self):
        """Тест ошибки отрицательной регуляризации"""
        with pytest.raises(ValueError):
            RidgeRegressor(lambda_reg=-1.0)


@pytest.mark.unit
class TestInfer:
    """Тесты для вывода ткани по позе"""

    def test_zero_model_gives_rest_cloth(self, solid_grid, rng):
        """Тест: нулевая модель в позе покоя дает ткань в покое"""
        block = build_lattice(solid_grid, 1.0)
        locator = TetLocator(block.rest_vertices, block.tets)
        vertices = rng.uniform(0.3, 1.7, size=(12, 3))
        cloth = TriangleMesh(vertices=vertices, triangles=[[i, i + 1, i + 2] for i in range(10)])
        uv, sides = orthographic_atlas(cloth)
        cloth = TriangleMesh(vertices=cloth.vertices, triangles=cloth.triangles, uv=uv, sides=sides)

        pose = Pose(pose_id=0, angles=np.zeros((2, 3)))
        zeros = rasterize(np.zeros((12, 3)), uv, sides, size=16)
        model = train(pose_features([pose, pose]), [zeros, zeros], kind="mean")
        result = infer(model, pose, cloth, locator, block.rest_vertices)
        np.testing.assert_allclose(result.displacements, 0.0)
        np.testing.assert_allclose(result.positions, vertices, atol=1e-10)
        assert len(result.unresolved) == 0
