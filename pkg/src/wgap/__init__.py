"""Wavelet-domain adversarial perturbations with a numpy-only toolchain."""

from .attack import AttackConfig, evaluate_attack, perturb_time, perturb_wavelet, random_baseline, train_attack, wgap_loss
from .defense import DefenseSpec, apply_defense, jpeg_defense, randomization_defense, wavelet_denoise
from .metrics import EvalReport, cross_entropy, fooling_ratio, least_likely_class, relative_l2, ssim_dissimilarity
from .wavelet import Pyramid, decompose, dwt1d, dwt2d, idwt1d, idwt2d, make_filterbank, reconstruct, replace_details

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "DefenseSpec",
    "EvalReport",
    "Pyramid",
    "apply_defense",
    "cross_entropy",
    "decompose",
    "dwt1d",
    "dwt2d",
    "evaluate_attack",
    "fooling_ratio",
    "idwt1d",
    "idwt2d",
    "jpeg_defense",
    "least_likely_class",
    "make_filterbank",
    "perturb_time",
    "perturb_wavelet",
    "random_baseline",
    "randomization_defense",
    "reconstruct",
    "relative_l2",
    "replace_details",
    "ssim_dissimilarity",
    "train_attack",
    "wavelet_denoise",
    "wgap_loss",
]
