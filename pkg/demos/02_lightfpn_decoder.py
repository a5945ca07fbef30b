# coding: utf-8

# # The coarse-to-fine decoder
#
# Each decoder stage predicts a residual that is added to the upsampled
# prediction of the stage before it. Here we run the model once and check
# that bookkeeping by hand.

# %%

import numpy as np

from bfseg import ops
from bfseg.model import BFSegModel, ModelConfig

model = BFSegModel(ModelConfig(base_channels=16, width=64, seed=0))
image = np.random.default_rng(0).random((1, 64, 64, 3)).astype(np.float32)
preds = model(image)

for s, c in zip(preds.strides, preds.cls):
    print(f"stride {s:2d} logits {c.shape}")
print("final", preds.final.shape)

# %% [markdown]
# Stage logits are the residual plus the upsampled coarser logits.

# %%

for k in range(1, 4):
    rebuilt = preds.residuals[k] + ops.upsample(preds.cls[k - 1], 2)
    print(k, np.array_equal(rebuilt, preds.cls[k]))

# %% [markdown]
# Unrolling that recursion, the finest logits are a sum of upsampled
# residuals. In floating point the two orders of summation agree only to
# rounding error.

# %%

up = ops.upsample
d = preds.residuals
tele = up(up(up(d[0], 2), 2), 2) + up(up(d[1], 2), 2) + up(d[2], 2) + d[3]
print("max difference", np.abs(tele - preds.cls[3]).max())

# %% [markdown]
# Parameter budget of the decoder against the encoder:

# %%

print("encoder", model.num_parameters("encoder."))
print("decoder", model.num_parameters("decoder."))
