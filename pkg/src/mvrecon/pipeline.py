"""End-to-end orchestration: fixtures -> view grid -> reconstruction -> mesh -> metrics.

Every run writes into its own directory::

    views/view_k.png, views/mask_k.png, condition.png, manifest.json   (render)
    grid.png                                                         (sample)
    sdf_grid.bin                                                     (reconstruct)
    mesh.obj                                                         (extract)
    gt_mesh.obj                                                      (evaluate)
    report.json    config echo, artifacts, metrics (byte-stable for a fixed seed)
    timing.json    wall-clock seconds per stage
"""
import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .camera import CameraPose
from .cfg import CfgSchedule, sample_loop
from .errors import DomainError, StageError
from .metrics import THRESHOLDS, MetricsReport, evaluate_pair
from .mvgrid import VARIANT_TILES, ViewSet, assemble, read_png, silhouette_from_image, split, write_png
from .recon import CarveConfig, ReconModel, carve, reconstruct_learned
from .renderer import get_fixture, render_fixture_set, top_pose
from .surface import marching_cubes, save_grid, sdf_grid_from_function, write_obj
from .triplane import SdfDecoder, UnpatchifyWeights

STAGES = ("render", "sample", "reconstruct", "extract", "evaluate")


@dataclass
class PipelineConfig:
    variant: str = "lite"
    seed: int = 42
    fixture: str = "sphere"
    backend: str = "carve"
    sampler: str = "bypass"
    steps: int = 50
    cfg: dict = field(default_factory=dict)
    include_condition: bool = True
    condition_top: bool = False
    voxel_resolution: int = 96
    field_resolution: int = 64
    gt_resolution: int = 128
    eval_points: int = 10000
    align: bool = False
    thresholds: tuple = THRESHOLDS

    def __post_init__(self):
        if self.variant not in VARIANT_TILES:
            raise DomainError(f"variant must be one of {sorted(VARIANT_TILES)}, got {self.variant!r}")
        if self.backend not in ("carve", "learned"):
            raise DomainError(f"backend must be 'carve' or 'learned', got {self.backend!r}")
        if self.sampler not in ("bypass", "toy"):
            raise DomainError(f"sampler must be 'bypass' or 'toy', got {self.sampler!r}")
        if self.seed is None:
            raise DomainError("a seed is required")
        self.seed = int(self.seed)
        self.thresholds = tuple(float(t) for t in self.thresholds)

    @property
    def tile(self):
        return VARIANT_TILES[self.variant]

    @property
    def schedule(self):
        return CfgSchedule(**self.cfg)

    def to_dict(self):
        d = asdict(self)
        d["thresholds"] = list(self.thresholds)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class RunReport:
    config: dict
    durations: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    metrics: MetricsReport = None
    versions: dict = field(default_factory=dict)
    failed_stage: str = None
    error: str = None
    label: str = ""

    @property
    def total_seconds(self):
        return float(sum(self.durations.values()))

    def to_dict(self):
        """Deterministic part of the report (no wall-clock values)."""
        return {
            "label": self.label,
            "config": self.config,
            "artifacts": self.artifacts,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "versions": self.versions,
            "failed_stage": self.failed_stage,
            "error": self.error,
        }


def versions():
    import scipy

    return {"mvrecon": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _dump_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


# -- stages ----------------------------------------------------------------


def render_stage(shape, out_dir, resolution, seed, include_condition=True, condition_pose=None, fixture=None):
    """Render orbit and condition views and write PNGs plus ``manifest.json``."""
    rng = np.random.default_rng(seed)
    views, cond = render_fixture_set(shape, include_condition, rng, resolution, condition_pose)
    os.makedirs(os.path.join(out_dir, "views"), exist_ok=True)
    manifest = {"fixture": fixture, "resolution": resolution, "seed": seed, "views": [], "condition": None}
    for k, (img, mask, pose) in enumerate(zip(views.images, views.masks, views.poses)):
        ip, mp = f"views/view_{k}.png", f"views/mask_{k}.png"
        write_png(os.path.join(out_dir, ip), img)
        write_png(os.path.join(out_dir, mp), mask)
        manifest["views"].append({"image": ip, "mask": mp, "pose": pose.to_dict()})
    if cond is not None:
        write_png(os.path.join(out_dir, "condition.png"), cond.image)
        write_png(os.path.join(out_dir, "condition_mask.png"), cond.silhouette)
        manifest["condition"] = {"image": "condition.png", "mask": "condition_mask.png", "pose": cond.pose.to_dict()}
    _dump_json(os.path.join(out_dir, "manifest.json"), manifest)
    return views, cond, manifest


def load_manifest(in_dir):
    """Read a render directory back: ``(ViewSet, condition or None)``.

    ``condition`` is a dict with ``image``, ``mask`` and ``pose`` (pose may be None).
    """
    with open(os.path.join(in_dir, "manifest.json")) as f:
        manifest = json.load(f)
    images, masks, poses = [], [], []
    for v in manifest["views"]:
        images.append(read_png(os.path.join(in_dir, v["image"])))
        masks.append(read_png(os.path.join(in_dir, v["mask"])) > 127)
        poses.append(CameraPose.from_dict(v["pose"]))
    cond = None
    if manifest.get("condition"):
        c = manifest["condition"]
        img = read_png(os.path.join(in_dir, c["image"]))
        mask = read_png(os.path.join(in_dir, c["mask"])) > 127 if c.get("mask") else silhouette_from_image(img)
        pose = CameraPose.from_dict(c["pose"]) if c.get("pose") else None
        cond = {"image": img, "mask": mask, "pose": pose}
    return ViewSet(tuple(images), tuple(poses), tuple(masks)), cond


def toy_denoiser(target, t_max=1000):
    """Noise predictor whose conditional branch points at ``target`` and whose
    unconditional branch points at the per-channel mean of ``target``.

    Both are exact for a point-mass data distribution in scaled-latent form,
    so guidance amplifies contrast away from the mean as the scale grows.
    """
    from .cfg import noise_levels

    sigmas = noise_levels(t_max)
    mean = target.mean(axis=(0, 1), keepdims=True)

    def denoise(x, t):
        s = sigmas[t]
        return (x - target) / s, (x - mean) / s

    return denoise


def sample_stage(views, config, out_dir=None):
    """Produce the 3x2 view grid; ``toy`` runs the guided sampler toward the given views."""
    grid = assemble(views)
    if config.sampler == "toy":
        target = grid.pixels.astype(np.float64) / 127.5 - 1.0
        x = sample_loop(toy_denoiser(target), target.shape, config.schedule, config.steps, seed=config.seed)
        pixels = np.clip(np.rint((np.clip(x, -1.0, 1.0) + 1.0) * 127.5), 0, 255).astype(np.uint8)
        grid = type(grid)(pixels, grid.tile)
    if out_dir is not None:
        write_png(os.path.join(out_dir, "grid.png"), grid.pixels)
    return grid


def learned_components(seed):
    model = ReconModel.create(seed)
    unp = UnpatchifyWeights.random(seed + 1)
    dec = SdfDecoder.random(seed + 2, out_scale=0.05)
    return model, unp, dec


def reconstruct_stage(views, cond, config):
    """Run the selected backend; ``cond`` is the dict from :func:`load_manifest` or None."""
    if config.backend == "carve":
        condition = None
        if cond is not None and cond.get("pose") is not None:
            condition = (cond["mask"], cond["pose"])
        return carve(views, condition, CarveConfig(resolution=config.voxel_resolution))
    model, unp, dec = learned_components(config.seed)
    image = None if cond is None else cond["image"]
    return reconstruct_learned(views, image, model, unp, dec, config.field_resolution, sphere_prior=0.4)


def run_pipeline(config, out_dir, grid_image=None, condition_image=None):
    """Run every stage for ``config.fixture`` (or for a supplied grid image) and write the report."""
    os.makedirs(out_dir, exist_ok=True)
    report = RunReport(config=config.to_dict(), versions=versions(),
                       label=f"{config.fixture or 'input'}-{config.backend}-{config.variant}")
    shape = None
    state = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except Exception as exc:
            report.failed_stage, report.error = name, f"{type(exc).__name__}: {exc}"
            _write_report(out_dir, report)
            raise StageError(name, exc) from exc
        finally:
            report.durations[name] = time.perf_counter() - t0

    if grid_image is None:
        shape = get_fixture(config.fixture)

        def _render():
            pose = top_pose() if config.condition_top else None
            views, cond, manifest = render_stage(shape, out_dir, config.tile, config.seed,
                                                 config.include_condition, pose, config.fixture)
            report.artifacts["manifest"] = "manifest.json"
            c = None if cond is None else {"image": cond.image, "mask": cond.silhouette, "pose": cond.pose}
            return views, c

        state["views"], state["cond"] = stage("render", _render)
    else:
        views = split(np.asarray(grid_image))
        views = ViewSet(views.images, views.poses, tuple(silhouette_from_image(i) for i in views.images))
        state["views"] = views
        state["cond"] = None
        if condition_image is not None:
            cimg = np.asarray(condition_image)
            state["cond"] = {"image": cimg, "mask": silhouette_from_image(cimg), "pose": None}

    def _sample():
        grid = sample_stage(state["views"], config, out_dir)
        report.artifacts["grid"] = "grid.png"
        v = split(grid)
        masks = tuple(silhouette_from_image(i) for i in v.images) if config.sampler == "toy" else state["views"].masks
        return ViewSet(v.images, state["views"].poses, masks)

    views = stage("sample", _sample)

    def _reconstruct():
        grid = reconstruct_stage(views, state["cond"], config)
        save_grid(os.path.join(out_dir, "sdf_grid.bin"), grid)
        report.artifacts["sdf_grid"] = "sdf_grid.bin"
        return grid

    sdf = stage("reconstruct", _reconstruct)

    def _extract():
        mesh = marching_cubes(sdf)
        write_obj(os.path.join(out_dir, "mesh.obj"), mesh)
        report.artifacts["mesh"] = "mesh.obj"
        return mesh

    mesh = stage("extract", _extract)

    if shape is not None:
        def _evaluate():
            gt = marching_cubes(sdf_grid_from_function(shape, config.gt_resolution))
            write_obj(os.path.join(out_dir, "gt_mesh.obj"), gt)
            report.artifacts["gt_mesh"] = "gt_mesh.obj"
            return evaluate_pair(mesh, gt, config.align, config.eval_points, config.seed, config.thresholds)

        report.metrics = stage("evaluate", _evaluate)

    _write_report(out_dir, report)
    return report


def _write_report(out_dir, report):
    _dump_json(os.path.join(out_dir, "report.json"), report.to_dict())
    _dump_json(os.path.join(out_dir, "timing.json"),
               {"durations": report.durations, "total_seconds": report.total_seconds})


def load_report(run_dir_or_file):
    """Rebuild a :class:`RunReport` from ``report.json`` (and ``timing.json`` when present)."""
    path = run_dir_or_file
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    with open(path) as f:
        d = json.load(f)
    metrics = None
    if d.get("metrics"):
        m = d["metrics"]
        metrics = MetricsReport(
            m["chamfer"],
            {float(k): v for k, v in m["fscore"].items()},
            {float(k): v for k, v in m["precision"].items()},
            {float(k): v for k, v in m["recall"].items()},
            m["icp_applied"], m["icp_rotation_deg"], m["icp_translation"], m["n_points"],
        )
    report = RunReport(d["config"], artifacts=d["artifacts"], metrics=metrics, versions=d["versions"],
                       failed_stage=d.get("failed_stage"), error=d.get("error"), label=d.get("label", ""))
    timing = os.path.join(os.path.dirname(path), "timing.json")
    if os.path.exists(timing):
        with open(timing) as f:
            report.durations = json.load(f)["durations"]
    return report


PLOT_COLUMNS = ("label", "backend", "total_seconds", "fscore@0.1", "fscore@0.2", "fscore@0.5", "chamfer")


def emit_plot_data(reports):
    """Runtime-vs-quality table, one row per run, columns :data:`PLOT_COLUMNS`."""
    if not reports:
        raise DomainError("need at least one report")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PLOT_COLUMNS)
    for r in reports:
        m = r.metrics
        fs = [None] * 3 if m is None else [m.fscore.get(t) for t in THRESHOLDS]
        writer.writerow([r.label, r.config.get("backend"), repr(r.total_seconds), *map(_fmt, fs),
                         _fmt(None if m is None else m.chamfer)])
    return buf.getvalue()


def _fmt(x):
    return "" if x is None else repr(float(x))
