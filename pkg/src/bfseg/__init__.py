"""Building footprint segmentation with a lightweight coarse-to-fine decoder
and lenient (hybrid-pixel-masked) deep supervision, in plain numpy."""

__version__ = "0.1.0"

from .complexity import count_lightfpn, count_unet_reference, verify_against_model
from .data import AugmentConfig, Sample, SynthConfig, augment, generate_dataset, generate_scene, load_dataset, save_dataset
from .errors import BFSegError, ConfigError, DatasetError, DimensionError, DomainError, TrainingDiverged
from .label_pyramid import MaskPyramid, build_mask_pyramid, downsample_label, purity_mask
from .losses import (
    DeepSupervision,
    Distillation,
    LossBreakdown,
    SupervisionMode,
    lenient_distillation_loss,
    lenient_supervision_loss,
    masked_bce,
    total_loss,
)
from .metrics import ConfusionCounts, MetricsReport, accumulate, binarize, compute_metrics
from .model import BFSegModel, ModelConfig, PredictionPyramid
from .training import AdamW, TrainConfig, evaluate, lr_step, train
