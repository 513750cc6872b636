import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from src.core import mesh_io
from src.core.embedding import DisplacementField
from src.core.geometry import TriangleMesh

logger = logging.getLogger(__name__)


class ResultSaver:
    """Writes reports and exports under one artifacts directory with deterministic file names"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def save_report(self, report: Dict, name: str = "metrics") -> Path:
        """Save a report dict as sorted, indented JSON"""
        path = self.output_dir / f"{name}.json"
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(report, f, ensure_ascii=False, indent=2, sort_keys=True, default=_to_builtin)
        logger.info(f"Report written to {path}")
        return path

    def save_histogram(self, per_example: Dict[str, List[float]], name: str = "histogram",
                       bins: int = 20, upper: Optional[float] = None) -> Path:
        """
        Save per-example average vertex errors as a histogram CSV

        One row per bin: bin_start, bin_end, then one count column per label kind.
        All kinds share the same bins.
        """
        path = self.output_dir / f"{name}.csv"
        kinds = sorted(per_example)
        values = [np.asarray(per_example[k], dtype=np.float64) for k in kinds]
        if upper is None:
            upper = max((float(v.max()) for v in values if v.size), default=1.0) or 1.0
        edges = np.linspace(0.0, upper, bins + 1)
        counts = [np.histogram(np.clip(v, 0.0, upper), bins=edges)[0] for v in values]
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(["bin_start", "bin_end"] + kinds)
            for b in range(bins):
                writer.writerow([f"{edges[b]:.6f}", f"{edges[b + 1]:.6f}"] + [int(c[b]) for c in counts])
        return path

    def save_displacement(self, field: DisplacementField, kind: str) -> Path:
        path = self.output_dir / "displacements" / kind / f"pose_{field.pose_id:06d}.disp"
        mesh_io.write_displacement(path, field)
        return path

    def save_obj(self, mesh: TriangleMesh, vertices: np.ndarray, name: str) -> Path:
        path = self.output_dir / "meshes" / f"{name}.obj"
        mesh_io.write_obj(path, mesh, vertices)
        return path


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)
