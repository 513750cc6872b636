"""
Command line interface of the KDSM cloth toolkit
"""
import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from src.config import settings
from src.core import mesh_io
from src.core.embedding import DisplacementField, embed_rest
from src.core.errors import KdsmError
from src.core.level_set import build_level_set, thicken
from src.core.mannequin import build_bones, build_skeleton
from src.core.point_location import TetLocator
from src.core.skinning import assign_weights, hierarchy_bones, skin_vertices
from src.core.tet_lattice import TetMesh, build_lattice, lattice_padding
from src.services.pipeline_service import PipelineService
from src.storage.models import PipelineConfig
from src.utils.logger import initialize_logging
from src.utils.saver import ResultSaver

logger = logging.getLogger(__name__)

METHOD_KINDS = {"1": "method1", "2": "method2", "hybrid": "hybrid", "body_offset": "body_offset", "fixed": "fixed"}


def _skeleton(path: Optional[str]):
    """Skeleton and bones from a JSON file, or the built-in mannequin"""
    if path:
        skeleton = mesh_io.skeleton_from_dict(mesh_io.read_json(path))
        return skeleton, hierarchy_bones(skeleton)
    skeleton = build_skeleton()
    return skeleton, build_bones(skeleton)


def _pipeline_config(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    updates = {}
    if getattr(args, "out", None):
        updates["output_dir"] = args.out
    dataset = {}
    if getattr(args, "poses", None):
        dataset["num_poses"] = args.poses
    if getattr(args, "seed", None) is not None:
        dataset["seed"] = args.seed
    if dataset:
        updates["dataset"] = config.dataset.model_copy(update=dataset)
    if getattr(args, "method", None):
        updates["methods"] = [METHOD_KINDS[args.method]]
    return config.model_copy(update=updates) if updates else config


def cmd_levelset(args) -> int:
    body = mesh_io.read_obj(args.input)
    padding = args.padding if args.padding is not None else lattice_padding(args.thicken, settings.LATTICE_H, args.dx)
    phi = build_level_set(body, args.dx, padding)
    grid = thicken(phi, args.thicken) if args.thicken > 0 else phi
    mesh_io.save_grid(args.out, grid)
    print(f"Level set {grid.dims} (dx={grid.dx}, thickening={args.thicken}) written to {args.out}")
    return 0


def cmd_tetmesh(args) -> int:
    grid = mesh_io.load_grid(args.input)
    mesh = build_lattice(grid, args.h)
    skeleton, bones = _skeleton(args.skeleton)
    mesh = mesh.with_weights(assign_weights(mesh.rest_vertices, skeleton, bones))
    mesh_io.write_tet(args.out, mesh)
    print(f"KDSM with {mesh.n_tets} tets and {mesh.n_vertices} vertices written to {args.out}")
    return 0


def cmd_skin(args) -> int:
    mesh = mesh_io.read_tet(args.mesh)
    skeleton, bones = _skeleton(args.skeleton)
    weights = mesh.skin_weights
    if weights is None:
        weights = assign_weights(mesh.rest_vertices, skeleton, bones)
    poses = mesh_io.read_poses(args.pose)
    for pose in poses:
        posed = skin_vertices(mesh.rest_vertices, weights, pose, skeleton)
        out = args.out if len(poses) == 1 else args.out.replace(".tet", f"_{pose.pose_id:06d}.tet")
        mesh_io.write_tet(out, TetMesh(rest_vertices=posed, tets=mesh.tets, skin_weights=weights))
        print(f"Pose {pose.pose_id}: skinned KDSM written to {out}")
    return 0


def cmd_embed(args) -> int:
    mesh = mesh_io.read_tet(args.mesh)
    cloth = mesh_io.read_obj(args.cloth)
    emb = embed_rest(cloth.vertices, TetLocator(mesh.rest_vertices, mesh.tets, eps_box=settings.BOX_EPS),
                     args.eps)
    mesh_io.write_json(args.out, {"parents": emb.parents.tolist(), "weights": emb.weights.tolist()})
    print(f"Embedded {len(emb)} cloth vertices in {len(np.unique(emb.parents))} tets; written to {args.out}")
    return 0


def cmd_gen_data(args) -> int:
    service = PipelineService(_pipeline_config(args))
    store = service.generate()
    if args.export:
        saver = ResultSaver(service.workspace / "export")
        for frame_id in store.list_frames():
            frame = store.get_frame(frame_id)
            for kind, values in sorted(frame.labels.items()):
                saver.save_displacement(DisplacementField(pose_id=frame_id, displacements=values), kind)
    split = store.metadata.split
    print(f"Dataset of {store.count()} frames in {store.path}: "
          + ", ".join(f"{k}={len(v)}" for k, v in split.items()))
    return 0


def cmd_train(args) -> int:
    service = PipelineService(_pipeline_config(args))
    training = service.train()
    print(f"Trained models {sorted(training.models)} in {service.models_dir}")
    return 0


def cmd_infer(args) -> int:
    service = PipelineService(_pipeline_config(args))
    training = service.training_service()
    training.load_models()
    kind = METHOD_KINDS[args.method or "hybrid"]
    rig = service.build_rig()
    for pose in mesh_io.read_poses(args.pose):
        positions, unresolved = training.predict(kind, pose)
        if args.obj:
            mesh_io.write_obj(args.obj, rig.cloth, positions)
        print(f"Pose {pose.pose_id}: {len(positions)} vertices, {len(unresolved)} unresolved"
              + (f", written to {args.obj}" if args.obj else ""))
    return 0


def cmd_metrics(args) -> int:
    service = PipelineService(_pipeline_config(args))
    report = service.evaluate()
    _print_report(report)
    return 0


def cmd_run(args) -> int:
    service = PipelineService(_pipeline_config(args))
    report = service.run()
    _print_report(report)
    print(f"Report and histogram in {service.reports_dir}")
    return 0


def _print_report(report):
    print(f"{'label':<12}{'max err':>12}{'avg err':>12}{'max |dd|':>12}{'avg |dd|':>12}")
    for kind, m in report.methods.items():
        print(f"{kind:<12}{m.max_vertex_error:>12.3e}{m.avg_vertex_error:>12.4f}{m.max_delta_d:>12.4f}{m.avg_delta_d:>12.4f}")
    print(f"\n{'model':<12}{'avg err':>20}{'volume err':>24}")
    rows = dict(report.networks)
    if report.mean_baseline is not None:
        rows["mean"] = report.mean_baseline
    for kind, n in rows.items():
        print(f"{kind:<12}{n.avg_vertex_error_mean:>12.4f} +- {n.avg_vertex_error_std:<6.3f}"
              f"{n.volume_error_mean:>14.2f} +- {n.volume_error_std:<8.2f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdsm", description="KDSM cloth embedding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("levelset", help="Signed distance grid of a closed body mesh")
    p.add_argument("--in", dest="input", required=True, help="Body OBJ")
    p.add_argument("--out", required=True, help="Output grid (text header + raw float64)")
    p.add_argument("--dx", type=float, default=settings.LEVEL_SET_DX, help="Grid spacing (cm)")
    p.add_argument("--thicken", type=float, default=settings.THICKENING, help="Thickening offset c (cm); 0 keeps the body")
    p.add_argument("--padding", type=float, default=None, help="Bounding-box padding (cm); default fits a lattice of the default cell size")
    p.set_defaults(func=cmd_levelset)

    p = sub.add_parser("tetmesh", help="BCC lattice of a thickened level set, with skin weights")
    p.add_argument("--in", dest="input", required=True, help="Thickened grid file")
    p.add_argument("--out", required=True, help="Output tet mesh (.tet)")
    p.add_argument("--h", type=float, default=settings.LATTICE_H, help="Lattice cell size (cm)")
    p.add_argument("--skeleton", help="Skeleton JSON (default: built-in mannequin)")
    p.set_defaults(func=cmd_tetmesh)

    p = sub.add_parser("skin", help="Skin a tet mesh to one or more poses")
    p.add_argument("--mesh", required=True, help="Tet mesh (.tet)")
    p.add_argument("--pose", required=True, help="Pose JSON (single pose or {'poses': [...]})")
    p.add_argument("--out", required=True, help="Output tet mesh (.tet)")
    p.add_argument("--skeleton", help="Skeleton JSON (default: built-in mannequin)")
    p.set_defaults(func=cmd_skin)

    p = sub.add_parser("embed", help="Embed a rest cloth in a rest tet mesh")
    p.add_argument("--mesh", required=True, help="Tet mesh (.tet)")
    p.add_argument("--cloth", required=True, help="Rest cloth OBJ")
    p.add_argument("--out", required=True, help="Output embedding JSON")
    p.add_argument("--eps", type=float, default=settings.BARY_EPS, help="Barycentric tolerance")
    p.set_defaults(func=cmd_embed)

    for name, func, help_text in (
        ("gen-data", cmd_gen_data, "Generate ground truth frames and labels of every method"),
        ("train", cmd_train, "Train one regressor per label kind on the train split"),
        ("infer", cmd_infer, "Predict cloth for poses with a trained model"),
        ("metrics", cmd_metrics, "Evaluate trained models on the test split"),
        ("run", cmd_run, "Run the whole pipeline"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="Pipeline config (JSON or YAML)")
        p.add_argument("--out", help="Output directory (overrides the config)")
        p.add_argument("--poses", type=int, help="Number of poses (overrides the config)")
        p.add_argument("--seed", type=int, help="Dataset seed (overrides the config)")
        p.add_argument("--method", choices=sorted(METHOD_KINDS),
                       help="Restrict to one label kind: 1, 2, hybrid, body_offset or fixed")
        if name == "gen-data":
            p.add_argument("--export", action="store_true", help="Also write per-frame displacement files")
        if name == "infer":
            p.add_argument("--pose", required=True, help="Pose JSON")
            p.add_argument("--obj", help="Write the predicted cloth to this OBJ")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    initialize_logging()
    try:
        return args.func(args)
    except KdsmError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except (FileNotFoundError, ValueError) as e:
        logger.error(f"{args.command} failed on its inputs: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
