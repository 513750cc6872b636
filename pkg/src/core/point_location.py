"""
Module for robust point location in a deformed tetrahedral mesh:
flattened bounding box hierarchy, epsilon-containment candidates and conflict pruning
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.core.geometry import barycentric_batch, tet_inverse_matrices

logger = logging.getLogger(__name__)

LEAF_SIZE = 4
DEFAULT_EPS = 1e-4
DEFAULT_EPS_BOX = 1e-3
# Largest barycentric epsilon the box inflation is guaranteed to cover
DEFAULT_BARY_MARGIN = 1e-2


@dataclass(frozen=True)
class TetBVH:
    """
    Flattened breadth-first hierarchy over inflated tet boxes

    Children of inner node k are nodes left[k] and left[k] + 1; leaves have left == -1.
    Every node covers order[start:end], and children partition their parent's range.
    """

    box_min: np.ndarray
    box_max: np.ndarray
    left: np.ndarray
    start: np.ndarray
    end: np.ndarray
    order: np.ndarray
    tet_min: np.ndarray
    tet_max: np.ndarray
    eps_box: float
    bary_margin: float

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def n_tets(self) -> int:
        return len(self.order)


def tet_boxes(vertices: np.ndarray, tets: np.ndarray, eps_box: float,
              bary_margin: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Axis-aligned tet boxes grown by eps_box plus 3 * bary_margin of the tet extent

    The relative growth keeps every point with all barycentric weights >= -bary_margin
    inside its tet's box.
    """
    corners = np.asarray(vertices, dtype=np.float64)[np.asarray(tets)]
    lo = corners.min(axis=1)
    hi = corners.max(axis=1)
    grow = eps_box + 3.0 * bary_margin * (hi - lo)
    return lo - grow, hi + grow


def _range_reduce(values: np.ndarray, starts: np.ndarray, ends: np.ndarray, ufunc) -> np.ndarray:
    """ufunc-reduce values over disjoint ascending [start, end) ranges"""
    padded = np.concatenate([values, values[-1:]])
    bounds = np.empty(2 * len(starts), dtype=np.int64)
    bounds[0::2] = starts
    bounds[1::2] = ends
    return ufunc.reduceat(padded, bounds, axis=0)[0::2]


def build_bvh(deformed_vertices: np.ndarray, tets: np.ndarray, eps_box: float = DEFAULT_EPS_BOX,
              bary_margin: float = DEFAULT_BARY_MARGIN) -> TetBVH:
    """
    Median-split hierarchy over tet centroids, built one level at a time

    Args:
        deformed_vertices: (N, 3) posed KDSM vertices
        tets: (M, 4) vertex indices
        eps_box: Absolute box inflation (cm)
        bary_margin: Barycentric epsilon the boxes must cover

    Returns:
        TetBVH with leaves of at most 4 tets
    """
    if eps_box < 0:
        raise ValueError(f"Box inflation must be non-negative, got {eps_box}")
    tets = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    n_tets = len(tets)
    lo, hi = tet_boxes(deformed_vertices, tets, eps_box, bary_margin)
    centroids = 0.5 * (lo + hi)

    order = np.arange(n_tets)
    starts: List[int] = [0]
    ends: List[int] = [n_tets]
    lefts: List[int] = [-1]
    levels = [np.array([0])]

    frontier = np.array([0])
    while len(frontier):
        f_start = np.array([starts[k] for k in frontier])
        f_end = np.array([ends[k] for k in frontier])
        split = (f_end - f_start) > LEAF_SIZE
        if not np.any(split):
            break
        nodes = frontier[split]
        s_start, s_end = f_start[split], f_end[split]
        sizes = s_end - s_start

        # Element positions grouped by segment, with the segment's widest centroid axis
        seg = np.repeat(np.arange(len(nodes)), sizes)
        positions = np.concatenate([np.arange(a, b) for a, b in zip(s_start, s_end)])
        members = order[positions]
        c_lo = _range_reduce(centroids[order], s_start, s_end, np.minimum)
        c_hi = _range_reduce(centroids[order], s_start, s_end, np.maximum)
        axis = np.argmax(c_hi - c_lo, axis=1)
        key = centroids[members, axis[seg]]
        ranked = np.lexsort((members, key, seg))
        order[positions] = members[ranked]

        mid = (s_start + s_end) // 2
        children = []
        for node, a, m, b in zip(nodes.tolist(), s_start.tolist(), mid.tolist(), s_end.tolist()):
            lefts[node] = len(starts)
            for c_start, c_end in ((a, m), (m, b)):
                children.append(len(starts))
                starts.append(c_start)
                ends.append(c_end)
                lefts.append(-1)
        frontier = np.array(children)
        levels.append(frontier)

    start_arr = np.array(starts, dtype=np.int64)
    end_arr = np.array(ends, dtype=np.int64)
    box_min = np.zeros((len(starts), 3))
    box_max = np.zeros((len(starts), 3))
    if n_tets:
        sorted_lo = lo[order]
        sorted_hi = hi[order]
        for level in levels:
            box_min[level] = _range_reduce(sorted_lo, start_arr[level], end_arr[level], np.minimum)
            box_max[level] = _range_reduce(sorted_hi, start_arr[level], end_arr[level], np.maximum)
    else:
        box_min[:] = np.inf
        box_max[:] = -np.inf

    bvh = TetBVH(
        box_min=box_min, box_max=box_max, left=np.array(lefts, dtype=np.int64),
        start=start_arr, end=end_arr, order=order, tet_min=lo, tet_max=hi, eps_box=float(eps_box), bary_margin=float(bary_margin),
    )
    logger.debug(f"BVH built: {n_tets} tets, {bvh.n_nodes} nodes, depth {len(levels)}")
    return bvh


def query_boxes(bvh: TetBVH, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    All (point, tet) pairs whose inflated tet box contains the point

    Returns:
        (point ids, tet ids), sorted by point then tet
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if bvh.n_tets == 0 or len(points) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty

    pair_point = np.arange(len(points))
    pair_node = np.zeros(len(points), dtype=np.int64)
    leaf_points, leaf_nodes = [], []
    while len(pair_point):
        p = points[pair_point]
        inside = np.all((p >= bvh.box_min[pair_node]) & (p <= bvh.box_max[pair_node]), axis=1)
        pair_point, pair_node = pair_point[inside], pair_node[inside]
        is_leaf = bvh.left[pair_node] < 0
        leaf_points.append(pair_point[is_leaf])
        leaf_nodes.append(pair_node[is_leaf])
        inner_point, inner_node = pair_point[~is_leaf], pair_node[~is_leaf]
        first = bvh.left[inner_node]
        pair_point = np.repeat(inner_point, 2)
        pair_node = np.column_stack([first, first + 1]).ravel()

    point_ids = np.concatenate(leaf_points)
    node_ids = np.concatenate(leaf_nodes)
    counts = bvh.end[node_ids] - bvh.start[node_ids]
    point_rep = np.repeat(point_ids, counts)
    offsets = np.repeat(bvh.start[node_ids] - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    tet_ids = bvh.order[np.arange(counts.sum()) + offsets]

    # Leaf boxes bound all members; keep only tets whose own box holds the point
    p = points[point_rep]
    exact = np.all((p >= bvh.tet_min[tet_ids]) & (p <= bvh.tet_max[tet_ids]), axis=1)
    point_rep, tet_ids = point_rep[exact], tet_ids[exact]
    rank = np.lexsort((tet_ids, point_rep))
    return point_rep[rank], tet_ids[rank]


@dataclass(frozen=True)
class CandidateList:
    """
    Candidate parent tets of one point, sorted by min weight descending then tet id

    Attributes:
        tet_ids: (K,) tet indices
        weights: (K, 4) barycentric weights
        min_weights: (K,) smallest weight per entry
    """

    tet_ids: np.ndarray
    weights: np.ndarray
    min_weights: np.ndarray

    def __len__(self) -> int:
        return len(self.tet_ids)

    @classmethod
    def empty(cls) -> "CandidateList":
        return cls(tet_ids=np.zeros(0, dtype=np.int64), weights=np.zeros((0, 4)), min_weights=np.zeros(0))

    def take(self, keep: np.ndarray) -> "CandidateList":
        return CandidateList(tet_ids=self.tet_ids[keep], weights=self.weights[keep], min_weights=self.min_weights[keep])


@dataclass(frozen=True)
class CandidateSet:
    """Candidate lists of many points in CSR layout; entries of point i are offsets[i]:offsets[i+1]"""

    offsets: np.ndarray
    tet_ids: np.ndarray
    weights: np.ndarray
    min_weights: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.offsets) - 1

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def for_point(self, i: int) -> CandidateList:
        a, b = self.offsets[i], self.offsets[i + 1]
        return CandidateList(tet_ids=self.tet_ids[a:b], weights=self.weights[a:b], min_weights=self.min_weights[a:b])

    @classmethod
    def from_lists(cls, lists: List[CandidateList]) -> "CandidateSet":
        counts = np.array([len(c) for c in lists], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        if not lists or counts.sum() == 0:
            return cls(offsets=offsets, tet_ids=np.zeros(0, dtype=np.int64), weights=np.zeros((0, 4)), min_weights=np.zeros(0))
        return cls(
            offsets=offsets,
            tet_ids=np.concatenate([c.tet_ids for c in lists]).astype(np.int64),
            weights=np.concatenate([c.weights for c in lists]),
            min_weights=np.concatenate([c.min_weights for c in lists]),
        )


class TetLocator:
    """
    Point location in one configuration of a tet mesh

    Holds the BVH and per-tet inverse matrices of the configuration; immutable after
    construction and safe to share between threads.
    """

    def __init__(self, vertices: np.ndarray, tets: np.ndarray, eps_box: float = DEFAULT_EPS_BOX,
                 bary_margin: float = DEFAULT_BARY_MARGIN, bvh: Optional[TetBVH] = None):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.tets = np.asarray(tets, dtype=np.int64)
        self.bvh = bvh if bvh is not None else build_bvh(self.vertices, self.tets, eps_box, bary_margin)
        self.inverses, self.valid = tet_inverse_matrices(self.vertices, self.tets)
        self._centroid_tree: Optional[cKDTree] = None

    @property
    def n_degenerate(self) -> int:
        return int(np.sum(~self.valid))

    def locate(self, points: np.ndarray, eps: float = DEFAULT_EPS) -> CandidateSet:
        """
        Candidate lists for many points at once

        Entries are the non-degenerate tets whose minimum barycentric weight for the
        point is >= -eps, sorted by min weight descending with ties by tet id.
        """
        if eps <= 0:
            raise ValueError(f"Barycentric epsilon must be positive, got {eps}")
        bvh = self.bvh
        if eps > bvh.bary_margin:
            logger.info(f"eps={eps} exceeds the BVH margin {bvh.bary_margin}, building a wider hierarchy")
            bvh = build_bvh(self.vertices, self.tets, bvh.eps_box, eps)
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        point_ids, tet_ids = query_boxes(bvh, points)
        keep = self.valid[tet_ids]
        point_ids, tet_ids = point_ids[keep], tet_ids[keep]

        weights = barycentric_batch(points[point_ids], self.inverses[tet_ids], self.vertices[self.tets[tet_ids, 3]])
        min_weights = weights.min(axis=1)
        keep = min_weights >= -eps
        point_ids, tet_ids, weights, min_weights = point_ids[keep], tet_ids[keep], weights[keep], min_weights[keep]

        rank = np.lexsort((tet_ids, -min_weights, point_ids))
        point_ids, tet_ids, weights, min_weights = point_ids[rank], tet_ids[rank], weights[rank], min_weights[rank]
        offsets = np.searchsorted(point_ids, np.arange(len(points) + 1), side="left").astype(np.int64)
        return CandidateSet(offsets=offsets, tet_ids=tet_ids, weights=weights, min_weights=min_weights)

    def nearest(self, points: np.ndarray, k: int = 8) -> Tuple[np.ndarray, np.ndarray]:
        """
        Best tet among the k nearest tet centroids (largest min weight, possibly negative)

        Returns:
            (tet ids (P,), barycentric weights (P, 4))
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        valid_ids = np.nonzero(self.valid)[0]
        if self._centroid_tree is None:
            self._centroid_tree = cKDTree(self.vertices[self.tets[valid_ids]].mean(axis=1))
        k = min(k, len(valid_ids))
        _, idx = self._centroid_tree.query(points, k=k)
        idx = np.asarray(idx).reshape(len(points), k)
        cand = valid_ids[idx]
        flat = cand.ravel()
        weights = barycentric_batch(np.repeat(points, k, axis=0), self.inverses[flat], self.vertices[self.tets[flat, 3]])
        weights = weights.reshape(len(points), k, 4)
        best = np.argmax(weights.min(axis=2), axis=1)
        rows = np.arange(len(points))
        return cand[rows, best], weights[rows, best]


def candidate_tets(p: np.ndarray, bvh_or_locator, deformed_vertices: Optional[np.ndarray] = None,
                   tets: Optional[np.ndarray] = None, eps: float = DEFAULT_EPS) -> CandidateList:
    """
    All near-containing tets of a single point

    Args:
        p: Query point
        bvh_or_locator: TetLocator, or a TetBVH together with the vertices and tets it was built on
        deformed_vertices: Posed vertices (only with a TetBVH)
        tets: Tet indices (only with a TetBVH)
        eps: Barycentric tolerance, > 0

    Returns:
        CandidateList sorted by min weight descending, ties by tet id ascending
    """
    if isinstance(bvh_or_locator, TetLocator):
        locator = bvh_or_locator
    else:
        locator = TetLocator(deformed_vertices, tets, bvh=bvh_or_locator)
    return locator.locate(np.asarray(p, dtype=np.float64).reshape(1, 3), eps).for_point(0)


def prune_candidates(candidates: CandidateList, tets: np.ndarray) -> CandidateList:
    """
    Drop candidates that conflict with a better one

    Walking the sorted list, each kept tet removes every later entry sharing a vertex
    with the face opposite its minimum-weight corner.
    """
    n = len(candidates)
    if n <= 1:
        return candidates
    tets = np.asarray(tets)
    entry_tets = tets[candidates.tet_ids]
    alive = np.ones(n, dtype=bool)
    for i in range(n):
        if not alive[i]:
            continue
        corner = int(np.argmin(candidates.weights[i]))
        face = np.delete(entry_tets[i], corner)
        later = np.arange(i + 1, n)
        shares = np.isin(entry_tets[later], face).any(axis=1)
        alive[later[shares]] = False
    return candidates.take(np.nonzero(alive)[0])


def prune_all(candidates: CandidateSet, tets: np.ndarray) -> CandidateSet:
    """prune_candidates applied to every point of a CandidateSet"""
    counts = candidates.counts()
    if np.all(counts <= 1):
        return candidates
    lists = []
    for i in range(candidates.n_points):
        entry = candidates.for_point(i)
        lists.append(prune_candidates(entry, tets) if counts[i] > 1 else entry)
    return CandidateSet.from_lists(lists)
