"""Desk-scale two-stage image-to-3D pipeline: guided multi-view grids and sparse-view reconstruction."""
__version__ = "0.1.0"

from .camera import CameraMatrices, CameraPose, camera_embedding, generate_rays, orbit_poses, pose_to_matrices, sample_condition_pose
from .cfg import CfgSchedule, GuidanceWeightMap, base_weight, guided_prediction, sample_loop, view_tau, view_weight, weight_map
from .errors import DomainError, EmptyHullError, LayoutError, SizeError, StageError
from .metrics import MetricsReport, RigidTransform, chamfer, evaluate_pair, fscore, icp_align
from .mvgrid import ViewGrid, ViewSet, assemble, resize_image, split
from .pipeline import PipelineConfig, RunReport, emit_plot_data, run_pipeline
from .recon import CarveConfig, ReconModel, TokenSequence, carve, forward, reconstruct_learned, tokenize_views
from .renderer import eval_sdf, get_fixture, ray_march, render, render_fixture_set
from .surface import Mesh, PointCloud, SdfGrid, is_watertight, marching_cubes, normalize_to_unit_sphere, sample_surface
from .triplane import SdfDecoder, TriplaneHigh, TriplaneLow, UnpatchifyWeights, decode, field_from_triplane, sample, unpatchify
