"""
Module for reading and writing meshes, grids, rigs, poses, displacement fields and cloth images
"""
import json
import logging
import struct
from pathlib import Path
from typing import List, Union

import numpy as np

from src.core.displacement_model import CHANNELS, ClothImage
from src.core.embedding import DisplacementField
from src.core.errors import ShapeMismatchError
from src.core.geometry import TriangleMesh
from src.core.level_set import ScalarGrid
from src.core.skinning import Joint, Pose, Skeleton, SkinWeights
from src.core.tet_lattice import TetMesh

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
IMAGE_MAGIC = b"KDIM"


def _ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def read_obj(path: PathLike) -> TriangleMesh:
    """
    Wavefront OBJ with optional texture coordinates

    Polygons are fan-triangulated. Per-vertex uv is taken from the vt index paired with
    each vertex in the faces.
    """
    vertices: List[List[float]] = []
    texcoords: List[List[float]] = []
    faces: List[List[int]] = []
    uv_of: dict = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                texcoords.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                corners = []
                for token in parts[1:]:
                    fields = token.split("/")
                    v = int(fields[0]) - 1
                    if len(fields) > 1 and fields[1]:
                        uv_of[v] = int(fields[1]) - 1
                    corners.append(v)
                for k in range(1, len(corners) - 1):
                    faces.append([corners[0], corners[k], corners[k + 1]])
    uv = None
    if texcoords and len(uv_of) == len(vertices):
        uv = np.array([texcoords[uv_of[i]] for i in range(len(vertices))])
    logger.debug(f"Read {path}: {len(vertices)} vertices, {len(faces)} triangles")
    return TriangleMesh(vertices=np.array(vertices), triangles=np.array(faces, dtype=np.int64), uv=uv)


def write_obj(path: PathLike, mesh: TriangleMesh, vertices: np.ndarray = None):
    path = _ensure_parent(path)
    positions = mesh.vertices if vertices is None else np.asarray(vertices)
    with open(path, "w", encoding="utf-8") as handle:
        for x, y, z in positions:
            handle.write(f"v {x:.9f} {y:.9f} {z:.9f}\n")
        if mesh.uv is not None:
            for u, v in mesh.uv:
                handle.write(f"vt {u:.9f} {v:.9f}\n")
            for a, b, c in mesh.triangles + 1:
                handle.write(f"f {a}/{a} {b}/{b} {c}/{c}\n")
        else:
            for a, b, c in mesh.triangles + 1:
                handle.write(f"f {a} {b} {c}\n")


def write_tet(path: PathLike, mesh: TetMesh):
    """Text tet mesh: header, vertices, tets, then optional skin weight rows"""
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"tet {mesh.n_vertices} {mesh.n_tets}\n")
        for x, y, z in mesh.rest_vertices:
            handle.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for t in mesh.tets:
            handle.write(" ".join(str(int(i)) for i in t) + "\n")
        if mesh.skin_weights is not None:
            weights = mesh.skin_weights
            handle.write(f"weights {len(weights)} {weights.joints.shape[1]}\n")
            for joints, values in zip(weights.joints, weights.weights):
                handle.write(" ".join(str(int(j)) for j in joints) + " " + " ".join(f"{w:.17g}" for w in values) + "\n")


def read_tet(path: PathLike) -> TetMesh:
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.split() for line in handle if line.strip()]
    if not lines or lines[0][0] != "tet":
        raise ValueError(f"{path} is not a tet mesh file")
    n_vertices, n_tets = int(lines[0][1]), int(lines[0][2])
    vertices = np.array(lines[1:1 + n_vertices], dtype=np.float64)
    tets = np.array(lines[1 + n_vertices:1 + n_vertices + n_tets], dtype=np.int64)
    rest = lines[1 + n_vertices + n_tets:]
    weights = None
    if rest and rest[0][0] == "weights":
        count, width = int(rest[0][1]), int(rest[0][2])
        rows = np.array(rest[1:1 + count], dtype=np.float64)
        weights = SkinWeights(joints=rows[:, :width].astype(np.int64), weights=rows[:, width:])
    return TetMesh(rest_vertices=vertices, tets=tets, skin_weights=weights)


def save_grid(path: PathLike, grid: ScalarGrid):
    """Text header line "ox oy oz dx nx ny nz", then the node values as row-major float64"""
    path = _ensure_parent(path)
    ox, oy, oz = grid.origin
    nx, ny, nz = grid.dims
    header = f"{ox:.17g} {oy:.17g} {oz:.17g} {grid.dx:.17g} {nx} {ny} {nz}\n"
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        handle.write(grid.values.astype("<f8").tobytes(order="C"))


def load_grid(path: PathLike) -> ScalarGrid:
    raw = Path(path).read_bytes()
    end = raw.find(b"\n")
    fields = raw[:end].decode("ascii", errors="replace").split() if end > 0 else []
    if len(fields) != 7:
        raise ValueError(f"{path} is not a grid file")
    try:
        origin = [float(v) for v in fields[:3]]
        dx = float(fields[3])
        dims = tuple(int(v) for v in fields[4:])
    except ValueError as e:
        raise ValueError(f"{path} has a malformed grid header: {e}") from e
    body = raw[end + 1:]
    expected = 8 * int(np.prod(dims))
    if len(body) != expected:
        raise ValueError(f"{path} holds {len(body)} value bytes, dims {dims} need {expected}")
    values = np.frombuffer(body, dtype="<f8").reshape(dims).astype(np.float64)
    return ScalarGrid(origin=origin, dx=dx, dims=dims, values=values)


def write_displacement(path: PathLike, field: DisplacementField):
    """Text header (pose id, vertex count) then one displacement per line"""
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{field.pose_id} {len(field)}\n")
        for x, y, z in field.displacements:
            handle.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def read_displacement(path: PathLike) -> DisplacementField:
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().split()
        pose_id, count = int(header[0]), int(header[1])
        values = np.loadtxt(handle, dtype=np.float64, ndmin=2) if count else np.zeros((0, 3))
    if len(values) != count:
        raise ShapeMismatchError(f"{path}: header says {count} vertices, found {len(values)}")
    return DisplacementField(pose_id=pose_id, displacements=values)


def write_cloth_image(path: PathLike, image: ClothImage):
    """
    Binary image: b"KDIM" + uint32 (rows, cols, channels), then float64 pixels row-major,
    channel-last; the mask goes to a companion .mask file (bit 0 front, bit 1 back)
    """
    path = _ensure_parent(path)
    rows, cols, channels = image.pixels.shape
    with open(path, "wb") as handle:
        handle.write(IMAGE_MAGIC + struct.pack("<III", rows, cols, channels))
        handle.write(image.pixels.astype("<f8").tobytes(order="C"))
    mask_bits = image.mask[:, :, 0].astype(np.uint8) | (image.mask[:, :, 1].astype(np.uint8) << 1)
    path.with_suffix(".mask").write_bytes(mask_bits.tobytes(order="C"))


def read_cloth_image(path: PathLike) -> ClothImage:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != IMAGE_MAGIC:
        raise ValueError(f"{path} is not a cloth image file")
    rows, cols, channels = struct.unpack("<III", raw[4:16])
    if channels != CHANNELS:
        raise ShapeMismatchError(f"{path}: expected {CHANNELS} channels, got {channels}")
    pixels = np.frombuffer(raw[16:], dtype="<f8").reshape(rows, cols, channels).astype(np.float64)
    bits = np.frombuffer(path.with_suffix(".mask").read_bytes(), dtype=np.uint8).reshape(rows, cols)
    mask = np.stack([(bits & 1) > 0, (bits & 2) > 0], axis=2)
    return ClothImage(pixels=pixels, mask=mask)


def skeleton_to_dict(skeleton: Skeleton) -> dict:
    return {
        "joints": [
            {"name": j.name, "parent": j.parent, "rest_transform": j.rest_transform.tolist()}
            for j in skeleton.joints
        ]
    }


def skeleton_from_dict(data: dict) -> Skeleton:
    return Skeleton(joints=[
        Joint(name=j["name"], parent=int(j["parent"]), rest_transform=np.array(j["rest_transform"]))
        for j in data["joints"]
    ])


def weights_to_dict(weights: SkinWeights) -> dict:
    return {"joints": weights.joints.tolist(), "weights": weights.weights.tolist()}


def weights_from_dict(data: dict) -> SkinWeights:
    return SkinWeights(joints=np.array(data["joints"]), weights=np.array(data["weights"]))


def pose_to_dict(pose: Pose) -> dict:
    return {"pose_id": pose.pose_id, "angles": pose.angles.tolist(), "translation": pose.translation.tolist()}


def pose_from_dict(data: dict) -> Pose:
    return Pose(pose_id=int(data.get("pose_id", 0)), angles=np.array(data["angles"]),
                translation=np.array(data.get("translation", [0.0, 0.0, 0.0])))


def write_json(path: PathLike, data: dict):
    path = _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)


def read_json(path: PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def read_poses(path: PathLike) -> List[Pose]:
    """A single pose object, or {"poses": [...]}"""
    data = read_json(path)
    if "poses" in data:
        return [pose_from_dict(p) for p in data["poses"]]
    return [pose_from_dict(data)]


def write_poses(path: PathLike, poses: List[Pose]):
    write_json(path, {"poses": [pose_to_dict(p) for p in poses]})
