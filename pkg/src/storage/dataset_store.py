"""
Module for persisting generated frames: one .npz per frame plus a JSON manifest
"""
import json
import logging
import shutil
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ShapeMismatchError
from src.core.skinning import Pose
from src.storage.models import DatasetMetadata

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SPLITS = ("train", "val", "test")
# Fixed zip entry timestamp so rewritten frames are byte-identical
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class FrameRecord:
    """
    One generated frame

    Args:
        pose: Pose of the frame
        positions: Ground-truth cloth vertices (N, 3)
        labels: Per label kind, the (N, 3) array used as training target
            (plastic displacement for KDSM kinds, UVN offset for body_offset)
        stats: JSON-serializable bookkeeping (candidate counts, hybrid rounds, ...)
    """
    pose: Pose
    positions: np.ndarray
    labels: Dict[str, np.ndarray] = field(default_factory=dict)
    stats: Dict = field(default_factory=dict)

    @property
    def pose_id(self) -> int:
        return self.pose.pose_id


def split_ids(frame_ids: Sequence[int], seed: int,
              fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)) -> Dict[str, List[int]]:
    """
    Deterministic train/val/test split of frame ids

    Returns:
        Dict split name -> sorted frame ids; every id in exactly one split
    """
    ids = np.array(sorted(int(i) for i in frame_ids), dtype=np.int64)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(fractions[0] * len(ids)))
    n_val = int(round(fractions[1] * len(ids)))
    n_val = min(n_val, len(ids) - n_train)
    parts = np.split(ids[order], [n_train, n_train + n_val])
    return {name: sorted(int(i) for i in part) for name, part in zip(SPLITS, parts)}


def _write_npz(path: Path, arrays: Dict[str, np.ndarray]):
    tmp = path.with_suffix(".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            with archive.open(info, "w") as handle:
                np.lib.format.write_array(handle, np.ascontiguousarray(arrays[name]), allow_pickle=False)
    tmp.replace(path)


class DatasetStore:
    """Frame store for one dataset under root/name"""

    def __init__(self, root: str, name: str = "default"):
        """
        Args:
            root: Directory holding datasets
            name: Dataset name (subdirectory)
        """
        self.path = Path(root) / name
        self.frames_dir = self.path / "frames"
        self.frames_dir.mkdir(parents=True, exist_ok=True)
        self.name = name
        self.metadata = self._load_manifest()
        logger.info(f"Dataset store opened: {self.path} ({self.metadata.num_frames} frames)")

    def _load_manifest(self) -> DatasetMetadata:
        manifest = self.path / MANIFEST
        if manifest.exists():
            with open(manifest, "r", encoding="utf-8") as f:
                return DatasetMetadata.model_validate(json.load(f))
        return DatasetMetadata(name=self.name)

    def _save_manifest(self):
        self.metadata.num_frames = len(self.list_frames())
        with open(self.path / MANIFEST, "w", encoding="utf-8") as f:
            json.dump(self.metadata.model_dump(), f, indent=2, sort_keys=True)

    def _frame_path(self, frame_id: int) -> Path:
        return self.frames_dir / f"frame_{int(frame_id):06d}.npz"

    def update_metadata(self, **fields):
        self.metadata = self.metadata.model_copy(update=fields)
        self._save_manifest()

    def add_frames(self, frames: Sequence[FrameRecord]) -> List[int]:
        """
        Persist frames, overwriting frames with the same pose id

        Returns:
            List of stored frame ids
        """
        if not frames:
            logger.warning("Empty list of frames for adding")
            return []
        n = self.metadata.n_cloth_vertices or len(frames[0].positions)
        ids = []
        for frame in frames:
            if len(frame.positions) != n or any(len(v) != n for v in frame.labels.values()):
                raise ShapeMismatchError(f"Frame {frame.pose_id}: expected {n} cloth vertices")
            arrays = {
                "pose_angles": frame.pose.angles,
                "pose_translation": frame.pose.translation,
                "positions": frame.positions,
                "stats": np.frombuffer(json.dumps(frame.stats, sort_keys=True).encode("utf-8"), dtype=np.uint8),
            }
            for kind, values in frame.labels.items():
                arrays[f"label_{kind}"] = np.asarray(values, dtype=np.float64)
            _write_npz(self._frame_path(frame.pose_id), arrays)
            ids.append(frame.pose_id)
        kinds = sorted(set(self.metadata.label_kinds) | {k for f in frames for k in f.labels})
        self.metadata = self.metadata.model_copy(update={"n_cloth_vertices": n, "label_kinds": kinds})
        self._save_manifest()
        logger.info(f"Added {len(ids)} frames to dataset {self.name}")
        return ids

    def get_frame(self, frame_id: int) -> FrameRecord:
        path = self._frame_path(frame_id)
        if not path.exists():
            raise KeyError(f"Frame {frame_id} not in dataset {self.name}")
        with np.load(path, allow_pickle=False) as data:
            pose = Pose(pose_id=int(frame_id), angles=data["pose_angles"], translation=data["pose_translation"])
            labels = {key[len("label_"):]: data[key] for key in data.files if key.startswith("label_")}
            stats = json.loads(data["stats"].tobytes().decode("utf-8"))
            return FrameRecord(pose=pose, positions=data["positions"], labels=labels, stats=stats)

    def get_frames(self, frame_ids: Sequence[int]) -> List[FrameRecord]:
        return [self.get_frame(i) for i in frame_ids]

    def list_frames(self) -> List[int]:
        return sorted(int(p.stem.split("_")[1]) for p in self.frames_dir.glob("frame_*.npz"))

    def count(self) -> int:
        return len(self.list_frames())

    def delete(self, frame_ids: Optional[Sequence[int]] = None):
        """Delete the given frames, or the whole dataset when frame_ids is None"""
        if frame_ids is None:
            shutil.rmtree(self.path, ignore_errors=True)
            self.frames_dir.mkdir(parents=True, exist_ok=True)
            self.metadata = DatasetMetadata(name=self.name)
            self._save_manifest()
            logger.info(f"Dataset {self.name} cleared")
            return
        for frame_id in frame_ids:
            self._frame_path(frame_id).unlink(missing_ok=True)
        self._save_manifest()
        logger.info(f"Deleted frames: {len(frame_ids)}")

    def split_ids(self, seed: int, fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)) -> Dict[str, List[int]]:
        """Compute and record the train/val/test split of the stored frames"""
        split = split_ids(self.list_frames(), seed, fractions)
        self.update_metadata(split=split, seed=seed)
        return split
