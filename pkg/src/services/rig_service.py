"""
Rig building service: body level set, thickened KDSM lattice, skinning weights and cloth embedding
"""
import hashlib
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.core import mesh_io
from src.core.displacement_model import orthographic_atlas
from src.core.embedding import BodyAnchors, Embedding, build_anchors, embed_rest
from src.core.geometry import TriangleMesh, signed_tet_volumes
from src.core.level_set import ScalarGrid, build_level_set, thicken
from src.core.mannequin import build_bones, build_mannequin, build_shirt
from src.core.point_location import DEFAULT_BARY_MARGIN, TetLocator
from src.core.skinning import Bone, Pose, Skeleton, SkinWeights, assign_weights, hierarchy_bones, skin_vertices
from src.core.synthetic import cloth_rig_weights
from src.core.tet_lattice import TetMesh, build_lattice, lattice_padding, red_refine, refinement_band
from src.storage.models import PipelineConfig
from src.utils.cache import cached_posed_kdsm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rig:
    """
    Everything that is fixed across poses

    Attributes:
        body: Rest body surface with UV (for UVN frames)
        body_weights: Body surface skinning weights
        phi_thick: Thickened signed distance field
        kdsm: Rest lattice with skin weights
        rest_locator: Point location in the rest lattice
        cloth: Rest cloth with the front/back atlas as uv and side labels
        cloth_weights: Cloth skinning weights of the synthetic ground truth
        rest_embedding: Parent tets of the rest cloth
        anchors: T-pose body correspondence of the cloth
    """
    body: TriangleMesh
    skeleton: Skeleton
    bones: List[Bone]
    body_weights: SkinWeights
    phi_body: ScalarGrid
    phi_thick: ScalarGrid
    kdsm: TetMesh
    rest_locator: TetLocator
    cloth: TriangleMesh
    cloth_weights: SkinWeights
    rest_embedding: Embedding
    anchors: BodyAnchors

    def mesh_hashes(self) -> dict:
        def digest(*arrays) -> str:
            h = hashlib.sha256()
            for a in arrays:
                h.update(np.ascontiguousarray(a).tobytes())
            return h.hexdigest()[:16]
        return {
            "body": digest(self.body.vertices, self.body.triangles),
            "cloth": digest(self.cloth.vertices, self.cloth.triangles),
            "kdsm": digest(self.kdsm.rest_vertices, self.kdsm.tets),
        }


@dataclass(frozen=True)
class PosedKdsm:
    """Lattice skinned to one pose"""
    pose: Pose
    vertices: np.ndarray
    locator: TetLocator
    inverted_tets: int


@cached_posed_kdsm
def pose_kdsm(rig: Rig, pose: Pose, eps_box: float, bary_margin: float = DEFAULT_BARY_MARGIN) -> PosedKdsm:
    """Skin the KDSM to a pose and build its locator (memoized per rig and pose)"""
    vertices = skin_vertices(rig.kdsm.rest_vertices, rig.kdsm.skin_weights, pose, rig.skeleton)
    locator = TetLocator(vertices, rig.kdsm.tets, eps_box=eps_box, bary_margin=bary_margin)
    inverted = int(np.sum(signed_tet_volumes(vertices, rig.kdsm.tets) < 0))
    if inverted:
        logger.debug(f"Pose {pose.pose_id}: {inverted} inverted KDSM tets")
    return PosedKdsm(pose=pose, vertices=vertices, locator=locator, inverted_tets=inverted)


class RigService:
    """Service building the KDSM rig from a body, a skeleton and a cloth"""

    def __init__(self, config: Optional[PipelineConfig] = None):
        """
        Args:
            config: Pipeline configuration (defaults from config.yaml)
        """
        self.config = config or PipelineConfig()

    @property
    def bary_margin(self) -> float:
        """Barycentric epsilon the locator boxes are grown to cover"""
        return max(self.config.point_location.eps, DEFAULT_BARY_MARGIN)

    def load_inputs(self) -> Tuple[TriangleMesh, Skeleton, List[Bone], TriangleMesh]:
        """Body, skeleton, bones and rest cloth: from files when configured, else the procedural mannequin"""
        m = self.config.mannequin
        if self.config.body_mesh and self.config.skeleton:
            body = mesh_io.read_obj(self.config.body_mesh)
            skeleton = mesh_io.skeleton_from_dict(mesh_io.read_json(self.config.skeleton))
            bones = hierarchy_bones(skeleton)
        else:
            mannequin = build_mannequin(resolution=m.resolution)
            body, skeleton = mannequin.body, mannequin.skeleton
            bones = build_bones(skeleton)
        if self.config.cloth_mesh:
            cloth = mesh_io.read_obj(self.config.cloth_mesh)
        else:
            cloth = build_shirt(columns=m.shirt_columns, rows=m.shirt_rows,
                                sleeve_rings=m.sleeve_rings, offset=m.offset)
        return body, skeleton, bones, cloth

    def build_level_sets(self, body: TriangleMesh) -> Tuple[ScalarGrid, ScalarGrid]:
        ls = self.config.level_set
        padding = max(ls.padding, lattice_padding(ls.thickening, self.config.lattice.h, ls.dx))
        phi_body = build_level_set(body, ls.dx, padding)
        return phi_body, thicken(phi_body, ls.thickening)

    def build_kdsm(self, phi_body: ScalarGrid, phi_thick: ScalarGrid, skeleton: Skeleton,
                   bones: List[Bone]) -> TetMesh:
        """Lattice of the thickened body, optionally refined near the body, with skin weights"""
        lattice = self.config.lattice
        mesh = build_lattice(phi_thick, lattice.h)
        if lattice.refine_band > 0:
            marked = refinement_band(mesh, phi_body, lattice.refine_band)
            mesh = red_refine(mesh, marked)
            logger.info(f"Refined {len(marked)} tets within {lattice.refine_band} cm of the body")
        return mesh.with_weights(assign_weights(mesh.rest_vertices, skeleton, bones))

    def build(self) -> Rig:
        """
        Build the full rig

        Returns:
            Rig shared read-only by every pose

        Raises:
            NoParentError: if the rest cloth is not inside the lattice
        """
        start = time.perf_counter()
        body, skeleton, bones, cloth = self.load_inputs()
        phi_body, phi_thick = self.build_level_sets(body)
        kdsm = self.build_kdsm(phi_body, phi_thick, skeleton, bones)
        rest_locator = TetLocator(
            kdsm.rest_vertices, kdsm.tets, eps_box=self.config.point_location.eps_box, bary_margin=self.bary_margin
        )

        uv, sides = orthographic_atlas(cloth)
        cloth = TriangleMesh(vertices=cloth.vertices, triangles=cloth.triangles, uv=uv, sides=sides)
        rest_embedding = embed_rest(cloth.vertices, rest_locator, self.config.point_location.eps)

        rig = Rig(
            body=body,
            skeleton=skeleton,
            bones=bones,
            body_weights=assign_weights(body.vertices, skeleton, bones),
            phi_body=phi_body,
            phi_thick=phi_thick,
            kdsm=kdsm,
            rest_locator=rest_locator,
            cloth=cloth,
            cloth_weights=cloth_rig_weights(cloth, skeleton, bones),
            rest_embedding=rest_embedding,
            anchors=build_anchors(body, cloth.vertices),
        )
        logger.info(
            f"Rig ready: body {body.n_vertices} vertices, KDSM {kdsm.n_tets} tets, "
            f"cloth {cloth.n_vertices} vertices ({time.perf_counter() - start:.1f}s)"
        )
        return rig

    def pose(self, rig: Rig, pose: Pose) -> PosedKdsm:
        return pose_kdsm(rig, pose, self.config.point_location.eps_box, self.bary_margin)

    @staticmethod
    def pose_body(rig: Rig, pose: Pose) -> np.ndarray:
        return skin_vertices(rig.body.vertices, rig.body_weights, pose, rig.skeleton)
