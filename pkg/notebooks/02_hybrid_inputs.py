# %% [markdown]
# # Why the condition view matters
#
# A sphere with a narrow bore along +z looks exactly like a plain sphere from
# the six 0-elevation cameras. Space carving from those views alone therefore
# fills the bore in; adding a view from above carves it back out.

# %%
import numpy as np

from mvrecon.metrics import evaluate_pair
from mvrecon.recon import CarveConfig, carve, carve_occupancy
from mvrecon.renderer import get_fixture, render, render_fixture_set, top_pose
from mvrecon.surface import grid_points, marching_cubes, sdf_grid_from_function

shape = get_fixture("dented_sphere")
views, cond = render_fixture_set(shape, True, resolution=320, condition_pose=top_pose())
plain = render_fixture_set(get_fixture("sphere"), resolution=320)[0]
print("orbit silhouette areas (dented vs plain):")
print([int(m.sum()) for m in views.masks])
print([int(m.sum()) for m in plain.masks])
print("top view:", int(cond.silhouette.sum()), "vs", int(render(get_fixture("sphere"), top_pose(), 320).silhouette.sum()))

# %%
cfg = CarveConfig(resolution=96)
truth = shape(grid_points(96)) <= 0
gt = marching_cubes(sdf_grid_from_function(shape, 128))
for label, condition in (("orbit only", None), ("orbit + top", (cond.silhouette, cond.pose))):
    masks = views.masks + ((condition[0],) if condition else ())
    poses = views.poses + ((condition[1],) if condition else ())
    occ = carve_occupancy(masks, poses, cfg)
    iou = (occ & truth).sum() / (occ | truth).sum()
    report = evaluate_pair(marching_cubes(carve(views, condition, cfg)), gt, seed=0)
    print(f"{label:12s} IoU={iou:.4f} CD={report.chamfer:.4f} F@0.1={report.fscore[0.1]:.3f}")
