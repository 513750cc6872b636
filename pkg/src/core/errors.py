"""
Exception hierarchy for the KDSM toolkit
"""
from typing import Iterable, List, Optional


class KdsmError(Exception):
    """Base class for all toolkit errors"""


class DegenerateTetError(KdsmError):
    """Tetrahedron volume is below the degeneracy floor"""


class OpenMeshError(KdsmError):
    """Mesh is not closed where a closed mesh is required"""


class OutOfBoundsError(KdsmError):
    """Query point lies outside the sampled grid"""


class EmptyMeshError(KdsmError):
    """No tetrahedron survived lattice construction"""


class NoParentError(KdsmError):
    """One or more points are not contained in any tetrahedron"""

    def __init__(self, indices: Iterable[int], message: Optional[str] = None):
        self.indices: List[int] = [int(i) for i in indices]
        if message is None:
            preview = self.indices[:10]
            message = f"{len(self.indices)} point(s) without parent tetrahedron, e.g. {preview}"
        super().__init__(message)


class DegenerateFrameError(KdsmError):
    """UVN frame is rank-deficient at one or more anchors"""

    def __init__(self, indices: Iterable[int], message: Optional[str] = None):
        self.indices: List[int] = [int(i) for i in indices]
        super().__init__(message or f"Degenerate UVN frame on {len(self.indices)} triangle(s)")


class MorphSolveFailure(KdsmError):
    """Poisson morph system is singular or the solver did not converge"""


class ShapeMismatchError(KdsmError, ValueError):
    """Array shapes are inconsistent"""


class StageError(KdsmError):
    """Pipeline stage failure, tagged with the stage name"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
