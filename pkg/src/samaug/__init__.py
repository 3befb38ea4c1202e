"""Prior-map input augmentation for segmentation models.

Pipeline: externally produced instance masks -> per-image prior maps ->
3-channel fused inputs -> weighted raw/augmented training objective ->
deployment strategies (augmented-only, logit ensemble, entropy selection)
-> pixel- and object-level evaluation.
"""

from samaug.deployment import (
    foreground_mask,
    infer_aug_only,
    infer_ensemble,
    infer_entropy_select,
    mean_entropy,
)
from samaug.fusion import AugmentedImage, RawImage, augment, model_input
from samaug.masks import InstanceMask, MaskSet, load_mask_set, save_mask_set, synth_masks
from samaug.metrics import aji, dice, label_instances, object_dice, pixel_fscore
from samaug.priors import PriorMap, build_boundary_prior, build_seg_prior, exterior_boundary
from samaug.training import TrainConfig, dice_loss, objective, spatial_ce_loss, train

__version__ = "0.1.0"

__all__ = [
    "AugmentedImage",
    "InstanceMask",
    "MaskSet",
    "PriorMap",
    "RawImage",
    "TrainConfig",
    "aji",
    "augment",
    "build_boundary_prior",
    "build_seg_prior",
    "dice",
    "dice_loss",
    "exterior_boundary",
    "foreground_mask",
    "infer_aug_only",
    "infer_ensemble",
    "infer_entropy_select",
    "label_instances",
    "load_mask_set",
    "mean_entropy",
    "model_input",
    "object_dice",
    "objective",
    "pixel_fscore",
    "save_mask_set",
    "spatial_ce_loss",
    "synth_masks",
    "train",
]
