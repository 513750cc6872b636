"""
Module for Poisson morphing of per-vertex fields over a triangle mesh with Dirichlet constraints
"""
import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple, Union

import numpy as np
import scipy.sparse as spsparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import cg, spsolve

from src.core.errors import MorphSolveFailure, ShapeMismatchError
from src.core.geometry import TriangleMesh, edge_list

logger = logging.getLogger(__name__)

DIRECT_MAX_VERTICES = 5000
CG_TOLERANCE = 1e-10

Dirichlet = Union[Mapping[int, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class LaplacianSystem:
    """Uniform graph Laplacian (degree on the diagonal, -1 per edge) with component labels"""

    matrix: spsparse.csr_matrix
    components: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_components(self) -> int:
        return int(self.components.max()) + 1 if len(self.components) else 0


def build_laplacian(topology: Union[TriangleMesh, np.ndarray], n_vertices: Optional[int] = None) -> LaplacianSystem:
    """
    Uniform Laplacian of a mesh or an edge list

    Args:
        topology: TriangleMesh, or (E, 2) undirected edges
        n_vertices: Vertex count (required with an edge list)
    """
    if isinstance(topology, TriangleMesh):
        edges = edge_list(topology)
        n_vertices = topology.n_vertices
    else:
        edges = np.asarray(topology, dtype=np.int64).reshape(-1, 2)
        if n_vertices is None:
            raise ValueError("n_vertices is required with an edge list")
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adjacency = spsparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices)).tocsr()
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    matrix = (spsparse.diags(degree) - adjacency).tocsr()
    _, components = csgraph.connected_components(adjacency, directed=False)
    return LaplacianSystem(matrix=matrix, components=components)


def solve_cg(A: spsparse.csr_matrix, b: np.ndarray, tol: float = CG_TOLERANCE,
             max_iter: Optional[int] = None) -> Tuple[np.ndarray, int]:
    """
    Jacobi-preconditioned conjugate gradient for one SPD right-hand side

    Returns:
        (solution, iterations)

    Raises:
        MorphSolveFailure: if CG stops before reaching the tolerance
    """
    max_iter = max_iter if max_iter is not None else 10 * A.shape[0]
    diagonal = A.diagonal()
    preconditioner = spsparse.diags(1.0 / np.where(diagonal != 0, diagonal, 1.0))
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=preconditioner, callback=count)
    if info != 0:
        residual = np.linalg.norm(b - A @ x)
        raise MorphSolveFailure(f"CG did not converge in {max_iter} iterations (residual {residual:.3e})")
    return x, iterations


def _split_dirichlet(dirichlet: Dirichlet) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(dirichlet, Mapping):
        ids = np.array(sorted(dirichlet), dtype=np.int64)
        values = np.array([np.asarray(dirichlet[i], dtype=np.float64) for i in ids]).reshape(len(ids), -1)
        return ids, values
    ids, values = dirichlet
    ids = np.asarray(ids, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64).reshape(len(ids), -1)
    return ids, values


def poisson_morph(topology: Union[TriangleMesh, np.ndarray, LaplacianSystem], source_field: np.ndarray,
                  dirichlet: Dirichlet, n_vertices: Optional[int] = None, solver: str = "auto",
                  tol: float = CG_TOLERANCE, direct_max_vertices: int = DIRECT_MAX_VERTICES) -> np.ndarray:
    """
    Extend a field over the mesh: solve L x = L s with x fixed at constrained vertices

    Args:
        topology: TriangleMesh, edge list or prebuilt LaplacianSystem
        source_field: (V, C) source values s
        dirichlet: {vertex: value} or (vertex ids, values (K, C))
        n_vertices: Vertex count when topology is an edge list
        solver: "direct", "cg" or "auto" (direct up to direct_max_vertices)
        tol: Relative CG tolerance

    Returns:
        (V, C) field equal to the constraint values at constrained vertices

    Raises:
        MorphSolveFailure: if a connected component has no constraint or CG fails
    """
    system = topology if isinstance(topology, LaplacianSystem) else build_laplacian(topology, n_vertices)
    n = system.n_vertices
    source = np.asarray(source_field, dtype=np.float64)
    squeeze = source.ndim == 1
    source = source.reshape(n, -1)
    ids, values = _split_dirichlet(dirichlet)
    if values.shape[1] != source.shape[1]:
        raise ShapeMismatchError(f"Constraint width {values.shape[1]} != field width {source.shape[1]}")
    if len(ids) and (ids.min() < 0 or ids.max() >= n):
        raise IndexError("Constrained vertex id out of range")

    constrained = np.zeros(n, dtype=bool)
    constrained[ids] = True
    covered = np.zeros(system.n_components, dtype=bool)
    covered[system.components[constrained]] = True
    if not np.all(covered):
        raise MorphSolveFailure(f"{int((~covered).sum())} mesh component(s) have no Dirichlet vertex")

    result = source.copy()
    result[ids] = values
    free = np.nonzero(~constrained)[0]
    if len(free) == 0:
        return result.ravel() if squeeze else result

    L = system.matrix
    L_ff = L[free][:, free].tocsr()
    L_fc = L[free][:, ids].tocsr()
    rhs = (L @ source)[free] - L_fc @ values

    use_direct = solver == "direct" or (solver == "auto" and n <= direct_max_vertices)
    if use_direct:
        solution = spsolve(L_ff.tocsc(), rhs)
        solution = np.asarray(solution).reshape(len(free), -1)
        if not np.all(np.isfinite(solution)):
            raise MorphSolveFailure("Direct solve produced non-finite values")
    else:
        columns = [solve_cg(L_ff, rhs[:, c], tol) for c in range(rhs.shape[1])]
        solution = np.column_stack([x for x, _ in columns])
        logger.debug(f"Morph CG converged in {max(k for _, k in columns)} iterations ({len(free)} free vertices)")
    result[free] = solution
    return result.ravel() if squeeze else result
