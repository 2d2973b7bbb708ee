"""Latent data augmentation with adaptive tap-position selection."""

from .augment import AugOutcome, AugSpec, apply_at_position, cutmix, cutout, mixup, rotation, translation
from .data import Dataset, batch_iter, gen_synthetic, load_cifar_bin, load_idx, pseudo_val_batch, subsample
from .engine import (Network, backward, build_mlp, build_tiny_cnn, cross_entropy,
                     finite_diff_grad, forward_with_tap, grad_dot, load_weights,
                     one_hot, save_weights)
from .ratios import (AcceptanceRatios, AdaLaseConfig, RatioSchedule, adalase_update,
                     averaged_update, init_ratios, sample_position, schedule_ratios)
from .trainer import (OptimizerState, Splits, TrainConfig, TrainResult, adalase_iteration,
                      audit_worst_layer, cosine_lr, evaluate, probe_layer_losses,
                      sgd_momentum_step, train)

__version__ = "0.1.0"
