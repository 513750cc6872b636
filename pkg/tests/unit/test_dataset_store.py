"""
Unit тесты для DatasetStore
"""
import pytest
import numpy as np

from src.core.errors import ShapeMismatchError
from src.core.skinning import Pose
from src.storage.dataset_store import DatasetStore, FrameRecord, split_ids


def make_frame(pose_id: int, n: int = 5) -> FrameRecord:
    rng = np.random.default_rng(pose_id)
    return FrameRecord(
        pose=Pose(pose_id=pose_id, angles=rng.normal(size=(15, 3))),
        positions=rng.normal(size=(n, 3)),
        labels={"method1": rng.normal(size=(n, 3)), "fixed": np.zeros((n, 3))},
        stats={"candidates": [1, 2, 1]},
    )


@pytest.mark.unit
class TestSplit:
    """Тесты для разбиения на выборки"""

    def test_fractions(self):
        """Тест разбиения 80/10/10"""
        split = split_ids(range(100), seed=3)
        assert [len(split[k]) for k in ("train", "val", "test")] == [80, 10, 10]

    def test_partition(self):
        """Тест того, что каждый кадр попадает ровно в одну выборку"""
        split = split_ids(range(37), seed=1, fractions=(0.6, 0.2, 0.2))
        ids = split["train"] + split["val"] + split["test"]
        assert sorted(ids) == list(range(37))

    def test_deterministic(self):
        """Тест воспроизводимости разбиения"""
        assert split_ids(range(50), seed=8) == split_ids(range(50), seed=8)
        assert split_ids(range(50), seed=8) != split_ids(range(50), seed=9)


@pytest.mark.unit
class TestDatasetStore:
    """Тесты для хранилища кадров"""

    def test_add_and_get(self, temp_dir):
        """Тест записи и чтения кадра"""
        store = DatasetStore(temp_dir, "unit")
        frame = make_frame(4)
        assert store.add_frames([frame]) == [4]
        loaded = store.get_frame(4)
        np.testing.assert_array_equal(loaded.positions, frame.positions)
        np.testing.assert_array_equal(loaded.pose.angles, frame.pose.angles)
        np.testing.assert_array_equal(loaded.labels["method1"], frame.labels["method1"])
        assert loaded.stats == frame.stats

    def test_manifest(self, temp_dir):
        """Тест манифеста после добавления кадров"""
        store = DatasetStore(temp_dir, "unit")
        store.add_frames([make_frame(i) for i in range(3)])
        reopened = DatasetStore(temp_dir, "unit")
        assert reopened.metadata.num_frames == 3
        assert reopened.metadata.n_cloth_vertices == 5
        assert reopened.metadata.label_kinds == ["fixed", "method1"]

    def test_vertex_count_mismatch(self, temp_dir):
        """Тест ошибки кадра с другим числом вершин"""
        store = DatasetStore(temp_dir, "unit")
        store.add_frames([make_frame(0)])
        with pytest.raises(ShapeMismatchError):
            store.add_frames([make_frame(1, n=6)])

    def test_missing_frame(self, temp_dir):
        """Тест ошибки чтения отсутствующего кадра"""
        store = DatasetStore(temp_dir, "unit")
        with pytest.raises(KeyError):
            store.get_frame(99)

    def test_empty_add(self, temp_dir):
        """Тест добавления пустого списка"""
        assert DatasetStore(temp_dir, "unit").add_frames([]) == []

    def test_rewrite_is_byte_identical(self, temp_dir):
        """Тест побайтовой идентичности перезаписанного кадра"""
        store = DatasetStore(temp_dir, "unit")
        store.add_frames([make_frame(2)])
        path = store._frame_path(2)
        first = path.read_bytes()
        store.add_frames([make_frame(2)])
        assert path.read_bytes() == first

    def test_delete(self, temp_dir):
        """Тест удаления кадров и всего датасета"""
        store = DatasetStore(temp_dir, "unit")
        store.add_frames([make_frame(i) for i in range(4)])
        store.delete([1, 2])
        assert store.list_frames() == [0, 3]
        store.delete()
        assert store.count() == 0
        assert store.metadata.num_frames == 0

    def test_split_recorded(self, temp_dir):
        """Тест записи разбиения в манифест"""
        store = DatasetStore(temp_dir, "unit")
        store.add_frames([make_frame(i) for i in range(10)])
        split = store.split_ids(seed=5)
        assert DatasetStore(temp_dir, "unit").metadata.split == split
