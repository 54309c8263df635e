"""Frequency-mixed single-source domain generalization for binary segmentation."""
from .discrepancy import hypothesis_check
from .fmaug import build_training_samples, enumerate_pairs, generate_mix_mask, mix_views
from .frequency_views import (ANCHOR, FrequencyView, GaussianParams, ParameterError,
                              build_gaussian_kernel, extract_view_bank, high_pass_view,
                              sample_view_params)
from .losses import LossConfig, reconstruction_loss, segmentation_loss, total_loss
from .metrics import ConfusionCounts, confusion_counts, dice, mcc
from .network import CoupledNetwork, ModelConfig, build_network
from .trainer import TrainConfig, fit, lr_at_epoch, predict

__version__ = "0.1.0"
