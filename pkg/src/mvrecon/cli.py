"""Command-line entry point: ``mvrecon <subcommand> ...`` or ``python -m mvrecon``."""
import argparse
import csv
import json
import logging
import os
import sys

from .cfg import CfgSchedule, schedule_table
from .errors import StageError
from .metrics import MetricsReport, evaluate_pair
from .mvgrid import ViewSet, read_png, silhouette_from_image, split
from .pipeline import (PipelineConfig, emit_plot_data, load_manifest, load_report, reconstruct_stage,
                       render_stage, run_pipeline, sample_stage)
from .renderer import FIXTURES, get_fixture, top_pose
from .surface import load_grid, marching_cubes, read_obj, save_grid, write_obj

log = logging.getLogger("mvrecon")


def _config(args):
    """Config file (if any) overridden by explicit command-line flags."""
    cfg = PipelineConfig.load(args.config).to_dict() if args.config else {}
    for key in ("seed", "variant", "backend", "fixture", "sampler", "steps"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "condition_top", False):
        cfg["condition_top"] = True
    if getattr(args, "no_condition", False):
        cfg["include_condition"] = False
    if getattr(args, "align", False):
        cfg["align"] = True
    return PipelineConfig.from_dict(cfg)


def _out(args, default):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def cmd_render_fixtures(args):
    config = _config(args)
    names = sorted(FIXTURES) if config.fixture == "all" else [config.fixture]
    out = _out(args, "fixtures")
    for name in names:
        d = out if len(names) == 1 else os.path.join(out, name)
        os.makedirs(d, exist_ok=True)
        pose = top_pose() if config.condition_top else None
        render_stage(get_fixture(name), d, config.tile, config.seed, config.include_condition, pose, name)
        print(os.path.join(d, "manifest.json"))


def _load_views(args):
    if args.input:
        return load_manifest(args.input)
    views = split(read_png(args.grid))
    views = ViewSet(views.images, views.poses, tuple(silhouette_from_image(i) for i in views.images))
    cond = None
    if args.condition:
        img = read_png(args.condition)
        cond = {"image": img, "mask": silhouette_from_image(img), "pose": None}
    return views, cond


def cmd_sample(args):
    config = _config(args)
    views, _ = _load_views(args)
    out = _out(args, ".")
    grid = sample_stage(views, config, out)
    print(f"{os.path.join(out, 'grid.png')} {grid.pixels.shape[1]}x{grid.pixels.shape[0]}")


def cmd_reconstruct(args):
    config = _config(args)
    views, cond = _load_views(args)
    out = _out(args, ".")
    grid = reconstruct_stage(views, cond, config)
    path = os.path.join(out, "sdf_grid.bin")
    save_grid(path, grid)
    print(path)


def cmd_extract_mesh(args):
    mesh = marching_cubes(load_grid(args.grid), args.iso)
    path = args.out or "mesh.obj"
    write_obj(path, mesh)
    print(f"{path} vertices={len(mesh.vertices)} faces={len(mesh.faces)}")


def cmd_evaluate(args):
    pred, gt = read_obj(args.pred), read_obj(args.gt)
    report = evaluate_pair(pred, gt, args.align, args.points, args.seed or 0, brute_force=args.brute_force)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(text)
    row = ",".join(repr(float(x)) for x in report.csv_row())
    print(",".join(MetricsReport.CSV_HEADER))
    print(row)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "metrics.json"), "w") as f:
            f.write(text + "\n")
        with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(MetricsReport.CSV_HEADER)
            w.writerow([repr(float(x)) for x in report.csv_row()])


def cmd_run(args):
    config = _config(args)
    out = _out(args, "run")
    grid = read_png(args.grid) if args.grid else None
    cond = read_png(args.condition) if args.condition else None
    try:
        report = run_pipeline(config, out, grid, cond)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_cfg_table(args):
    if args.schedule == "fixed":
        schedule = CfgSchedule.fixed(args.scale)
    elif args.schedule == "time":
        schedule = CfgSchedule.time_only()
    else:
        schedule = CfgSchedule(tau_rule=args.tau_rule)
    rows = schedule_table(schedule, range(0, schedule.t_max + 1, args.step))
    f = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("t", "azimuth", "weight"))
        for t, az, wt in rows:
            w.writerow((t, az, repr(wt)))
    finally:
        if f is not sys.stdout:
            f.close()


def cmd_plot_data(args):
    text = emit_plot_data([load_report(p) for p in args.reports])
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config")
    common.add_argument("--seed", type=int)
    common.add_argument("--variant", choices=("lite", "std"))
    common.add_argument("--backend", choices=("learned", "carve"))
    common.add_argument("--out", help="output directory (or file for single-file outputs)")
    common.add_argument("--brute-force", action="store_true", help="exhaustive nearest-neighbour search")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mvrecon", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render-fixtures", parents=[common], help="render orbit and condition views of a fixture")
    s.add_argument("--fixture", help=f"one of {sorted(FIXTURES)} or 'all'")
    s.add_argument("--condition-top", action="store_true", help="condition camera straight above")
    s.add_argument("--no-condition", action="store_true")
    s.set_defaults(func=cmd_render_fixtures)

    def view_inputs(s):
        g = s.add_mutually_exclusive_group(required=True)
        g.add_argument("--in", dest="input", help="directory written by render-fixtures")
        g.add_argument("--grid", help="3x2 grid PNG")
        s.add_argument("--condition", help="condition image PNG (uncalibrated)")

    s = sub.add_parser("sample", parents=[common], help="assemble the view grid, optionally via the toy sampler")
    view_inputs(s)
    s.add_argument("--sampler", choices=("bypass", "toy"))
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("reconstruct", parents=[common], help="views -> SDF grid")
    view_inputs(s)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("extract-mesh", parents=[common], help="SDF grid -> OBJ by marching cubes")
    s.add_argument("grid")
    s.add_argument("--iso", type=float, default=0.0)
    s.set_defaults(func=cmd_extract_mesh)

    s = sub.add_parser("evaluate", parents=[common], help="CD and F-scores between two OBJ meshes")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("--align", action="store_true", help="ICP-align the prediction first")
    s.add_argument("--points", type=int, default=10000)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("run", parents=[common], help="full pipeline on a fixture or a grid image")
    s.add_argument("--fixture")
    s.add_argument("--grid", help="3x2 grid PNG instead of a fixture")
    s.add_argument("--condition", help="condition image PNG used with --grid")
    s.add_argument("--sampler", choices=("bypass", "toy"))
    s.add_argument("--steps", type=int)
    s.add_argument("--condition-top", action="store_true")
    s.add_argument("--no-condition", action="store_true")
    s.add_argument("--align", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("cfg-table", parents=[common], help="CSV of guidance weight per (t, azimuth)")
    s.add_argument("--schedule", choices=("adaptive", "fixed", "time"), default="adaptive")
    s.add_argument("--scale", type=float, default=7.5, help="weight for --schedule fixed")
    s.add_argument("--tau-rule", choices=("linear", "cosine"), default="linear")
    s.add_argument("--step", type=int, default=10)
    s.set_defaults(func=cmd_cfg_table)

    s = sub.add_parser("plot-data", parents=[common], help="runtime-vs-quality CSV from run reports")
    s.add_argument("reports", nargs="+", help="run directories or report.json files")
    s.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
