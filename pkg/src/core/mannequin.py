"""
Module for the procedural test rig: capsule-limb body, 15-joint skeleton and a shirt with sleeves
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.core.geometry import TriangleMesh, boundary_loops, mesh_volume
from src.core.skinning import Bone, Joint, Skeleton

logger = logging.getLogger(__name__)

# name, parent, rest position (cm); y is up, +z faces forward, the body's left is +x
JOINTS: List[Tuple[str, int, Tuple[float, float, float]]] = [
    ("pelvis", -1, (0.0, 100.0, 0.0)),
    ("spine", 0, (0.0, 112.0, 0.0)),
    ("chest", 1, (0.0, 128.0, 0.0)),
    ("neck", 2, (0.0, 148.0, 0.0)),
    ("head", 3, (0.0, 156.0, 0.0)),
    ("l_clavicle", 2, (4.0, 142.0, 0.0)),
    ("l_shoulder", 5, (18.0, 142.0, 0.0)),
    ("l_elbow", 6, (46.0, 142.0, 0.0)),
    ("l_wrist", 7, (72.0, 142.0, 0.0)),
    ("r_clavicle", 2, (-4.0, 142.0, 0.0)),
    ("r_shoulder", 9, (-18.0, 142.0, 0.0)),
    ("r_elbow", 10, (-46.0, 142.0, 0.0)),
    ("r_wrist", 11, (-72.0, 142.0, 0.0)),
    ("l_hip", 0, (9.0, 95.0, 0.0)),
    ("r_hip", 0, (-9.0, 95.0, 0.0)),
]

ARM_AXIS_Y = 142.0
TORSO_RADII = (15.0, 10.0)
COLLAR_TAPER_START = 144.0


@dataclass(frozen=True)
class Mannequin:
    """Body surface, skeleton and bone segments of the test rig"""

    body: TriangleMesh
    skeleton: Skeleton
    bones: List[Bone]


def build_skeleton() -> Skeleton:
    joints = []
    for name, parent, position in JOINTS:
        rest = np.zeros((3, 4))
        rest[:, :3] = np.eye(3)
        rest[:, 3] = position
        joints.append(Joint(name=name, parent=parent, rest_transform=rest))
    return Skeleton(joints=joints)


def build_bones(skeleton: Skeleton) -> List[Bone]:
    """One segment per joint, from the joint towards its child (or along the limb end)"""
    p = {j.name: j.rest_transform[:, 3] for j in skeleton.joints}
    segments = {
        "pelvis": (p["pelvis"] - [0.0, 10.0, 0.0], p["spine"]),
        "spine": (p["spine"], p["chest"]),
        "chest": (p["chest"], p["chest"] + [0.0, 14.0, 0.0]),
        "neck": (p["neck"], p["head"]),
        "head": (p["head"], p["head"] + [0.0, 10.0, 0.0]),
        "l_clavicle": (p["l_clavicle"], p["l_shoulder"]),
        "l_shoulder": (p["l_shoulder"], p["l_elbow"]),
        "l_elbow": (p["l_elbow"], p["l_wrist"]),
        "l_wrist": (p["l_wrist"], p["l_wrist"] + [8.0, 0.0, 0.0]),
        "r_clavicle": (p["r_clavicle"], p["r_shoulder"]),
        "r_shoulder": (p["r_shoulder"], p["r_elbow"]),
        "r_elbow": (p["r_elbow"], p["r_wrist"]),
        "r_wrist": (p["r_wrist"], p["r_wrist"] - [8.0, 0.0, 0.0]),
        "l_hip": (p["l_hip"], p["l_hip"] - [0.0, 20.0, 0.0]),
        "r_hip": (p["r_hip"], p["r_hip"] - [0.0, 20.0, 0.0]),
    }
    return [
        Bone(joint=skeleton.index(name), start=np.asarray(a, dtype=np.float64), end=np.asarray(b, dtype=np.float64))
        for name, (a, b) in segments.items()
    ]


def _axis_frame(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, axis)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1)


def capsule(start: Sequence[float], end: Sequence[float], radii: Tuple[float, float],
            n_around: int = 16, n_along: int = 6, cap_rings: int = 4) -> TriangleMesh:
    """
    Closed capsule with elliptic cross-section and per-vertex UVs

    The UV seam is duplicated and pole triangles get their own pole vertices, so the
    mesh is watertight geometrically while every triangle has non-degenerate UVs.
    Triangles face outwards.
    """
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    axis = end - start
    length = np.linalg.norm(axis)
    axis /= length
    e1, e2 = _axis_frame(axis)
    rx, rz = radii
    cap = min(rx, rz)

    # (center, radial scale) per ring from the start pole to the end pole
    rings = []
    for q in range(1, cap_rings + 1):
        theta = -np.pi / 2 + q * (np.pi / 2) / cap_rings
        rings.append((start + cap * np.sin(theta) * axis, np.cos(theta)))
    for k in range(1, n_along + 1):
        rings.append((start + (k / n_along) * length * axis, 1.0))
    for q in range(1, cap_rings):
        theta = q * (np.pi / 2) / cap_rings
        rings.append((end + cap * np.sin(theta) * axis, np.cos(theta)))
    n_rings = len(rings)

    phi = 2 * np.pi * np.arange(n_around + 1) / n_around
    vertices, uv = [], []
    for r, (center, scale) in enumerate(rings):
        ring = center + scale * (rx * np.cos(phi)[:, None] * e1 + rz * np.sin(phi)[:, None] * e2)
        vertices.append(ring)
        uv.append(np.column_stack([phi / (2 * np.pi), np.full(n_around + 1, (r + 1) / (n_rings + 1))]))
    width = n_around + 1
    triangles = []
    for r in range(n_rings - 1):
        for m in range(n_around):
            a, b = r * width + m, r * width + m + 1
            c, d = (r + 1) * width + m + 1, (r + 1) * width + m
            triangles.extend([[a, b, c], [a, c, d]])

    mid_u = (np.arange(n_around) + 0.5) / n_around
    south = len(rings) * width
    vertices.append(np.repeat((start - cap * axis)[None, :], n_around, axis=0))
    uv.append(np.column_stack([mid_u, np.zeros(n_around)]))
    north = south + n_around
    vertices.append(np.repeat((end + cap * axis)[None, :], n_around, axis=0))
    uv.append(np.column_stack([mid_u, np.ones(n_around)]))
    last = (n_rings - 1) * width
    for m in range(n_around):
        triangles.append([south + m, m + 1, m])
        triangles.append([north + m, last + m, last + m + 1])

    vertices = np.concatenate(vertices)
    triangles = np.array(triangles, dtype=np.int64)
    if mesh_volume(vertices, triangles) < 0:
        triangles = triangles[:, [0, 2, 1]]
    return TriangleMesh(vertices=vertices, triangles=triangles, uv=np.concatenate(uv))


def merge_meshes(meshes: Sequence[TriangleMesh]) -> TriangleMesh:
    vertices, triangles, uv = [], [], []
    offset = 0
    for mesh in meshes:
        vertices.append(mesh.vertices)
        triangles.append(mesh.triangles + offset)
        if mesh.uv is not None:
            uv.append(mesh.uv)
        offset += mesh.n_vertices
    merged_uv = np.concatenate(uv) if len(uv) == len(meshes) else None
    return TriangleMesh(vertices=np.concatenate(vertices), triangles=np.concatenate(triangles), uv=merged_uv)


def build_body(skeleton: Skeleton, resolution: int = 16) -> TriangleMesh:
    """Union of overlapping capsules: torso, neck, head, arms and thighs"""
    p = {j.name: j.rest_transform[:, 3] for j in skeleton.joints}
    parts = [
        capsule((0, 90, 0), (0, 142, 0), TORSO_RADII, n_around=2 * resolution, n_along=12),
        capsule(p["chest"] + [0, 12, 0], p["head"], (5.0, 5.0), n_around=resolution, n_along=3),
        capsule(p["head"], p["head"] + [0, 10, 0], (9.0, 9.0), n_around=resolution, n_along=2),
    ]
    for side in ("l", "r"):
        shoulder = p[f"{side}_shoulder"]
        inner = shoulder * [0.8, 1.0, 1.0]
        parts.append(capsule(inner, p[f"{side}_elbow"], (5.0, 5.0), n_around=resolution, n_along=6))
        parts.append(capsule(p[f"{side}_elbow"], p[f"{side}_wrist"], (4.0, 4.0), n_around=resolution, n_along=6))
        parts.append(capsule(p[f"{side}_hip"], p[f"{side}_hip"] - [0, 20, 0], (7.0, 7.0), n_around=resolution, n_along=4))
    body = merge_meshes(parts)
    logger.info(f"Mannequin body: {len(parts)} capsules, {body.n_vertices} vertices, {len(body.triangles)} triangles")
    return body


def build_mannequin(resolution: int = 16) -> Mannequin:
    skeleton = build_skeleton()
    return Mannequin(body=build_body(skeleton, resolution), skeleton=skeleton, bones=build_bones(skeleton))


def build_shirt(columns: int = 64, rows: int = 30, sleeve_rings: int = 14, offset: float = 2.0,
                sleeve_radius: float = 7.0, sleeve_length: float = 42.0) -> TriangleMesh:
    """
    Shirt: an elliptic torso tube with two armholes and a sleeve stitched into each

    The torso runs from the hem (y = 90) to an open collar (y = 150) and narrows above the
    shoulders to follow the body; sleeves leave the
    armholes along the arm axis and blend from the hole outline to a circle. The result
    is consistently oriented outwards with four boundary loops (hem, collar, two cuffs).
    """
    if columns % 4:
        raise ValueError("Shirt column count must be a multiple of 4")
    rx, rz = TORSO_RADII[0] + offset, TORSO_RADII[1] + offset
    y0, y1 = 90.0, 150.0
    ys = np.linspace(y0, y1, rows + 1)
    taper = 1.0 - 0.45 * np.clip((ys - COLLAR_TAPER_START) / (y1 - COLLAR_TAPER_START), 0.0, 1.0)
    phi = 2 * np.pi * np.arange(columns) / columns
    grid = np.zeros((rows + 1, columns, 3))
    grid[:, :, 0] = rx * taper[:, None] * np.cos(phi)[None, :]
    grid[:, :, 1] = ys[:, None]
    grid[:, :, 2] = rz * taper[:, None] * np.sin(phi)[None, :]

    def vid(i, j):
        return i * columns + (j % columns)

    # Armholes: quads around phi = 0 (left) and phi = pi (right) at shoulder height
    # The top quad row stays closed so the armholes do not run into the collar
    hole_rows = [i for i in range(rows - 1) if ARM_AXIS_Y - 8.0 <= ys[i] < ARM_AXIS_Y + 6.0]
    if not hole_rows:
        raise ValueError(f"Shirt with {rows} rows has no room for armholes")
    half = max(1, columns // 20)
    hole_cols = {
        "l": [(c + columns) % columns for c in range(-half, half)],
        "r": [columns // 2 + c for c in range(-half, half)],
    }
    removed = {(i, j) for i in hole_rows for side in hole_cols for j in hole_cols[side]}

    triangles = []
    for i in range(rows):
        for j in range(columns):
            if (i, j) in removed:
                continue
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j + 1), vid(i + 1, j)
            triangles.extend([[a, d, c], [a, c, b]])
    torso_tris = np.array(triangles, dtype=np.int64)
    vertices = [grid.reshape(-1, 3)]
    n_vertices = grid.shape[0] * grid.shape[1]

    sleeve_tris = []
    for side, direction in (("l", 1.0), ("r", -1.0)):
        loop = _hole_loop(torso_tris, grid.reshape(-1, 3), direction)
        loop_pos = grid.reshape(-1, 3)[loop]
        rel = loop_pos[:, 1:] - [ARM_AXIS_Y, 0.0]
        circle = rel / np.linalg.norm(rel, axis=1, keepdims=True) * sleeve_radius + [ARM_AXIS_Y, 0.0]
        x_start = np.abs(loop_pos[:, 0]).max()
        step = sleeve_length / sleeve_rings
        previous = loop
        for k in range(1, sleeve_rings + 1):
            blend = min(1.0, k / 3.0)
            ring = np.zeros((len(loop), 3))
            ring[:, 0] = direction * (x_start + k * step)
            ring[:, 1:] = (1.0 - blend) * loop_pos[:, 1:] + blend * circle
            ids = np.arange(n_vertices, n_vertices + len(loop))
            vertices.append(ring)
            n_vertices += len(loop)
            nxt_prev, nxt_ids = np.roll(previous, -1), np.roll(ids, -1)
            sleeve_tris.append(np.column_stack([nxt_prev, previous, ids]))
            sleeve_tris.append(np.column_stack([nxt_prev, ids, nxt_ids]))
            previous = ids

    all_vertices = np.concatenate(vertices)
    all_tris = np.concatenate([torso_tris] + sleeve_tris)
    used, compact = np.unique(all_tris, return_inverse=True)
    shirt = TriangleMesh(vertices=all_vertices[used], triangles=compact.reshape(-1, 3))
    loops = boundary_loops(shirt.triangles)
    logger.info(f"Shirt: {shirt.n_vertices} vertices, {len(shirt.triangles)} triangles, {len(loops)} boundary loops")
    return shirt


def _hole_loop(triangles: np.ndarray, vertices: np.ndarray, direction: float) -> np.ndarray:
    """Armhole boundary loop on the given side, in the direction the torso uses its edges"""
    for loop in boundary_loops(triangles):
        if np.all(np.sign(vertices[loop, 0]) == np.sign(direction)):
            return loop
    raise ValueError("Armhole loop not found")
