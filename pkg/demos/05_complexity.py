# coding: utf-8

# # Counting decoder cost
#
# Parameters and multiply-accumulates for the lightweight decoder and a
# plain U-Net style decoder over the same encoder features.

# %%

from bfseg.complexity import count_lightfpn, count_unet_reference, verify_against_model
from bfseg.model import BFSegModel, ModelConfig

profile = (96, 192, 384, 768)
light = count_lightfpn(profile, width=64, input_size=512)
unet = count_unet_reference(profile, input_size=512)
print(light.format())
print()
print(unet.format())

# %% [markdown]
# The ratio grows with the encoder width since only the U-Net keeps the
# encoder's channel counts through the decoder.

# %%

print(f"params ratio {unet.total_params / light.total_params:.2f}")
print(f"mult-add ratio {unet.total_macs / light.total_macs:.2f}")

# %% [markdown]
# The analytic count agrees with an instantiated model.

# %%

print(verify_against_model(BFSegModel(ModelConfig(width=64))).format())
