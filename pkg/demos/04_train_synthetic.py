# coding: utf-8

# # Training on synthetic scenes
#
# A short run on generated rooftops. The default model is small enough to
# train on one CPU core in a couple of minutes; here we shrink it further.

# %%

from bfseg.data import SynthConfig, generate_dataset
from bfseg.model import ModelConfig
from bfseg.training import TrainConfig, evaluate, train

train_set = generate_dataset(SynthConfig(seed=1), 64, "train")
val_set = generate_dataset(SynthConfig(seed=2), 16, "val")

result = train(
    ModelConfig(base_channels=8, width=32),
    TrainConfig(epochs=6, batch_size=8),
    train_set,
    val_set,
    on_epoch=lambda r: print(f"epoch {r.epoch}: loss {r.train_loss.total:.4f} val iou {r.val.iou:.4f} lr {r.lr:g}"),
)

# %% [markdown]
# The returned model holds the weights from the best validation epoch.

# %%

print("best epoch", result.best_epoch)
print(evaluate(result.model, val_set).format())
