# %% [markdown]
# # The learned backend, end to end
#
# Random but seeded weights: the geometry is meaningless, but every tensor has
# its full size, so this shows the cost of each step and the token contract.

# %%
import time

import numpy as np

from mvrecon.recon import CONDITION, ReconModel, forward, tokenize_views
from mvrecon.renderer import get_fixture, render_fixture_set
from mvrecon.surface import is_watertight, marching_cubes
from mvrecon.triplane import SdfDecoder, UnpatchifyWeights, field_from_triplane, unpatchify

views, cond = render_fixture_set(get_fixture("dented_sphere"), True, np.random.default_rng(0), resolution=320)
model = ReconModel.create(0)

t0 = time.perf_counter()
tokens = tokenize_views(model, views, cond.image)
is_cond = tokens.branch == CONDITION
print(f"{len(tokens)} tokens, {is_cond.sum()} from the condition image;",
      "condition embeddings all zero:", not tokens.embeddings[is_cond].any())

stats = {}
low = forward(model, tokens, stats)
t1 = time.perf_counter()
high = unpatchify(low, UnpatchifyWeights.random(1))
t2 = time.perf_counter()
grid = field_from_triplane(high, SdfDecoder.random(2, out_scale=0.05), 64, sphere_prior=0.4)
t3 = time.perf_counter()
mesh = marching_cubes(grid)
t4 = time.perf_counter()

print("low", low.planes.shape, "high", high.planes.shape, "attention row-sum error", max(stats["attn_rowsum_err"]))
print(f"forward {t1 - t0:.2f} s, unpatchify {t2 - t1:.2f} s, field {t3 - t2:.2f} s, mesh {t4 - t3:.2f} s")
print(len(mesh.faces), "faces, watertight:", is_watertight(mesh)[0])
