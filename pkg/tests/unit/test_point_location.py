"""
Unit тесты для поиска родительских тетраэдров
"""
import time

import pytest
import numpy as np

from src.core.geometry import barycentric_coords
from src.core.level_set import ScalarGrid
from src.core.point_location import (
    CandidateList, CandidateSet, TetLocator, build_bvh, candidate_tets, prune_all, prune_candidates,
    query_boxes, tet_boxes,
)
from src.core.tet_lattice import build_lattice


@pytest.fixture
def block(solid_grid):
    """Решетка BCC блока 2x2x2"""
    return build_lattice(solid_grid, 1.0)


@pytest.mark.unit
class TestBVH:
    """Тесты для иерархии ограничивающих коробок"""

    def test_structure(self, block):
        """Тест разбиения диапазонов и размера листьев"""
        bvh = build_bvh(block.rest_vertices, block.tets, eps_box=1e-3)
        assert sorted(bvh.order.tolist()) == list(range(block.n_tets))
        for node in range(bvh.n_nodes):
            left = bvh.left[node]
            if left < 0:
                assert bvh.end[node] - bvh.start[node] <= 4
            else:
                assert bvh.start[left] == bvh.start[node]
                assert bvh.end[left] == bvh.start[left + 1]
                assert bvh.end[left + 1] == bvh.end[node]

    def test_query_matches_brute_force(self, block, rng):
        """Тест совпадения запроса с полным перебором"""
        bvh = build_bvh(block.rest_vertices, block.tets, eps_box=1e-3)
        lo, hi = tet_boxes(block.rest_vertices, block.tets, 1e-3, bvh.bary_margin)
        points = rng.uniform(-0.2, 2.2, size=(200, 3))
        point_ids, tet_ids = query_boxes(bvh, points)
        inside = np.all((points[:, None, :] >= lo[None]) & (points[:, None, :] <= hi[None]), axis=2)
        expected = np.argwhere(inside)
        np.testing.assert_array_equal(np.column_stack([point_ids, tet_ids]), expected)

    def test_negative_box_eps_rejected(self, block):
        """Тест ошибки отрицательного расширения коробок"""
        with pytest.raises(ValueError):
            build_bvh(block.rest_vertices, block.tets, eps_box=-1.0)


@pytest.mark.unit
class TestTetLocator:
    """Тесты для TetLocator"""

    def test_locate_matches_brute_force(self, block, rng):
        """Тест кандидатов против полного перебора барицентрических координат"""
        locator = TetLocator(block.rest_vertices, block.tets)
        points = rng.uniform(0.0, 2.0, size=(50, 3))
        found = locator.locate(points, eps=1e-4)
        assert found.n_points == 50
        for i, p in enumerate(points):
            expected = [t for t in range(block.n_tets)
                        if barycentric_coords(p, block.rest_vertices[block.tets[t]]).min() >= -1e-4]
            entry = found.for_point(i)
            assert sorted(entry.tet_ids.tolist()) == expected
            assert np.all(np.diff(entry.min_weights) <= 0)
            np.testing.assert_allclose(entry.weights.sum(axis=1), 1.0)

    def test_interior_point_has_one_parent(self, block):
        """Тест единственного родителя для внутренней точки тетраэдра"""
        locator = TetLocator(block.rest_vertices, block.tets)
        centroid = block.rest_vertices[block.tets[5]].mean(axis=0)
        entry = candidate_tets(centroid, locator, eps=1e-4)
        assert entry.tet_ids.tolist() == [5]
        np.testing.assert_allclose(entry.weights[0], 0.25, atol=1e-12)

    def test_shared_vertex_has_many_parents(self, block):
        """Тест многих кандидатов в общей вершине"""
        locator = TetLocator(block.rest_vertices, block.tets)
        center = np.array([1.0, 1.0, 1.0])
        entry = candidate_tets(center, locator, eps=1e-4)
        assert len(entry) > 1

    def test_outside_point_has_no_parent(self, block):
        """Тест пустого списка для внешней точки"""
        locator = TetLocator(block.rest_vertices, block.tets)
        found = locator.locate(np.array([[5.0, 5.0, 5.0]]), eps=1e-4)
        assert found.counts().tolist() == [0]

    def test_non_positive_eps_rejected(self, block):
        """Тест ошибки для неположительного eps"""
        locator = TetLocator(block.rest_vertices, block.tets)
        with pytest.raises(ValueError):
            locator.locate(np.zeros((1, 3)), eps=0.0)

    def test_eps_beyond_box_margin(self, unit_tet):
        """Тест: eps больше запаса коробок все равно находит тетраэдр"""
        locator = TetLocator(unit_tet, np.array([[0, 1, 2, 3]]), eps_box=0.0)
        p = np.array([[-0.045, -0.005, -0.005]])
        assert locator.locate(p, eps=1e-2).counts().tolist() == [0]
        found = locator.locate(p, eps=0.05)
        assert found.tet_ids.tolist() == [0]
        np.testing.assert_allclose(found.weights[0], [1.055, -0.045, -0.005, -0.005], atol=1e-12)

    def test_eps_beyond_box_margin_matches_brute_force(self, block, rng):
        """Тест полного перебора для большого eps"""
        locator = TetLocator(block.rest_vertices, block.tets, eps_box=0.0)
        points = rng.uniform(-0.3, 2.3, size=(60, 3))
        found = locator.locate(points, eps=0.2)
        for i, p in enumerate(points):
            expected = [t for t in range(block.n_tets)
                        if barycentric_coords(p, block.rest_vertices[block.tets[t]]).min() >= -0.2]
            assert sorted(found.for_point(i).tet_ids.tolist()) == expected

    def test_bvh_and_locator_agree(self, block):
        """Тест одинаковых кандидатов через BVH и через локатор"""
        bvh = build_bvh(block.rest_vertices, block.tets)
        p = np.array([0.7, 1.2, 0.4])
        a = candidate_tets(p, bvh, block.rest_vertices, block.tets)
        b = candidate_tets(p, TetLocator(block.rest_vertices, block.tets))
        np.testing.assert_array_equal(a.tet_ids, b.tet_ids)

    def test_nearest_outside_point(self, block):
        """Тест ближайшего тетраэдра для точки вне сетки"""
        locator = TetLocator(block.rest_vertices, block.tets)
        tet_ids, weights = locator.nearest(np.array([[1.0, 1.0, 2.5]]), k=8)
        assert 0 <= tet_ids[0] < block.n_tets
        assert weights[0].min() < 0
        assert weights[0].sum() == pytest.approx(1.0)

    def test_degenerate_tets_skipped(self, unit_tet):
        """Тест пропуска вырожденных тетраэдров"""
        vertices = np.vstack([unit_tet, [[1.0, 1.0, 0.0]]])
        locator = TetLocator(vertices, np.array([[0, 1, 2, 3], [0, 1, 2, 4]]))
        assert locator.n_degenerate == 1
        entry = candidate_tets(np.array([0.1, 0.1, 0.0]), locator)
        assert entry.tet_ids.tolist() == [0]


@pytest.mark.unit
class TestPruning:
    """Тесты для отсечения конфликтующих кандидатов"""

    @pytest.fixture
    def tets(self):
        """Тетраэдры A и B с общей гранью и отдельный тетраэдр C"""
        return np.array([[0, 1, 2, 3], [1, 2, 3, 4], [5, 6, 7, 8]])

    def test_conflicting_candidate_removed(self, tets):
        """Тест удаления кандидата, касающегося грани лучшего"""
        cands = CandidateList(
            tet_ids=np.array([0, 1]),
            weights=np.array([[0.1, 0.3, 0.3, 0.3], [-1e-9, 0.4, 0.3, 0.3 + 1e-9]]),
            min_weights=np.array([0.1, -1e-9]),
        )
        assert prune_candidates(cands, tets).tet_ids.tolist() == [0]

    def test_disjoint_candidates_kept(self, tets):
        """Тест сохранения непересекающихся кандидатов"""
        cands = CandidateList(
            tet_ids=np.array([0, 2]),
            weights=np.array([[0.1, 0.3, 0.3, 0.3], [0.0, 0.5, 0.25, 0.25]]),
            min_weights=np.array([0.1, 0.0]),
        )
        assert prune_candidates(cands, tets).tet_ids.tolist() == [0, 2]

    def test_prune_all(self, tets):
        """Тест отсечения для множества точек"""
        first = CandidateList(tet_ids=np.array([0, 1]),
                              weights=np.array([[0.1, 0.3, 0.3, 0.3], [0.0, 0.4, 0.3, 0.3]]),
                              min_weights=np.array([0.1, 0.0]))
        second = CandidateList(tet_ids=np.array([2]), weights=np.array([[0.25] * 4]), min_weights=np.array([0.25]))
        pruned = prune_all(CandidateSet.from_lists([first, CandidateList.empty(), second]), tets)
        assert pruned.counts().tolist() == [1, 0, 1]
        assert pruned.tet_ids.tolist() == [0, 2]


def brute_force_candidates(points: np.ndarray, vertices: np.ndarray, tets: np.ndarray, eps: float):
    """Все пары (точка, тетраэдр) с минимальным весом >= -eps, прямым решением систем"""
    corners = vertices[tets]
    edges = np.stack([corners[:, 0] - corners[:, 3], corners[:, 1] - corners[:, 3],
                      corners[:, 2] - corners[:, 3]], axis=2)
    rhs = points[:, None, :] - corners[None, :, 3]
    partial = np.linalg.solve(np.broadcast_to(edges, rhs.shape[:2] + (3, 3)), rhs[..., None])[..., 0]
    weights = np.concatenate([partial, 1.0 - partial.sum(axis=2, keepdims=True)], axis=2)
    return weights.min(axis=2), weights.min(axis=2) >= -eps


@pytest.mark.unit
@pytest.mark.slow
class TestLocationOracle:
    """Сравнение с полным перебором на деформированных решетках"""

    def test_deformed_lattices_match_brute_force(self):
        """Тест: 20 решеток по 216 тетраэдров, 500 запросов, включая точки у границы eps"""
        rng = np.random.default_rng(7)
        grid = ScalarGrid(origin=np.zeros(3), dx=1.0, dims=(4, 4, 4), values=-np.ones((4, 4, 4)))
        lattice = build_lattice(grid, 1.0)
        assert lattice.n_tets >= 200
        eps = 1e-4
        elapsed = 0.0
        for _ in range(20):
            phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
            vertices = lattice.rest_vertices + 0.08 * np.sin(lattice.rest_vertices[:, [1, 2, 0]] * 1.9 + phase)

            uniform = rng.uniform(-0.2, 3.2, size=(400, 3))
            near = rng.integers(0, lattice.n_tets, size=100)
            weights = rng.dirichlet(np.ones(4), size=100)
            corner = rng.integers(0, 4, size=100)
            offset = np.where(np.arange(100) % 2 == 0, -0.5 * eps, -1.5 * eps)
            weights[np.arange(100), corner] = 0.0
            weights *= ((1.0 - offset) / weights.sum(axis=1))[:, None]
            weights[np.arange(100), corner] = offset
            boundary = np.einsum("nk,nkj->nj", weights, vertices[lattice.tets[near]])
            points = np.concatenate([uniform, boundary])

            start = time.perf_counter()
            locator = TetLocator(vertices, lattice.tets)
            found = locator.locate(points, eps=eps)
            pruned = prune_all(found, lattice.tets)
            elapsed += time.perf_counter() - start

            min_weights, inside = brute_force_candidates(points, vertices, lattice.tets, eps)
            for i in range(len(points)):
                expected = np.nonzero(inside[i])[0]
                assert sorted(found.for_point(i).tet_ids.tolist()) == expected.tolist()
                if len(expected):
                    best = expected[np.lexsort((expected, -min_weights[i, expected]))[0]]
                    assert pruned.for_point(i).tet_ids[0] == best

            again = prune_all(locator.locate(points, eps=eps), lattice.tets)
            np.testing.assert_array_equal(again.offsets, pruned.offsets)
            np.testing.assert_array_equal(again.tet_ids, pruned.tet_ids)
        assert elapsed < 30.0
