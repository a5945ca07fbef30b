# coding: utf-8

# # Soft labels and purity masks
#
# A coarse prediction pixel at stride s covers an s x s block of the label.
# When the block mixes building and background, no hard label is right for
# it. This notebook builds the label pyramid and shows which pixels count.

# %%

import numpy as np

from bfseg.data import SynthConfig, generate_scene
from bfseg.label_pyramid import build_mask_pyramid, downsample_label, purity_mask

# %% [markdown]
# Start from a hand-made 8x8 label with one 3x3 building.

# %%

y = np.zeros((8, 8), dtype=np.uint8)
y[1:4, 1:4] = 1
y_down = downsample_label(y, 2)
print(y_down)
print(purity_mask(y_down))

# %% [markdown]
# The block averages are fractions of building pixels. Only blocks at 0 or 1
# are pure; the other blocks straddle the building edge.
#
# The same thing on a synthetic scene, at every decoder stride:

# %%

scene = generate_scene(SynthConfig(size=64, seed=4))
pyramid = build_mask_pyramid(scene.label)
for s in pyramid.strides:
    level = pyramid[s]
    print(f"stride {s:2d}: {level.soft_label.shape}, {level.n_pure:4d} pure, {level.n_hybrid:3d} hybrid")

# %% [markdown]
# Small buildings make the coarse strides almost entirely hybrid, which is
# exactly where a hard coarse label would be wrong.

# %%

print(pyramid.soft_label(16).round(2))
