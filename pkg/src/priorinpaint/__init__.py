"""Fast GAN inpainting with learned latent priors.

A generator trained on unmasked images is frozen; a small network then
learns to map a masked image (optionally with a keypoint heatmap, optionally
a window of frames) straight to the latent code whose generated image best
fits the visible pixels. One forward pass replaces per-image latent search.
"""
from .baseline import inpaint_iterative, optimize_z
from .evaluation import bench_speedup, per_frame_psnr, psnr, temporal_consistency
from .gan import GanConfig, discriminate, generate, load_gan, sample_z, save_gan, train_cgan, train_gan
from .losses import LossWeights, combined_loss, contextual_loss, gradient_diff_loss, realism_loss
from .masking import MaskSpec, apply_mask, compose, gen_center_mask, gen_checker_mask, gen_freehand_mask
from .predictor import PredictorConfig, inpaint, predict_z, train_predictor
from .sequence import SeqConfig, inpaint_sequence, predict_group_z, subsequence_loss, train_sequence
from .synthetic import ShapeParams, load_dataset, make_dataset, render_face, render_prior_map

__version__ = "0.1.0"
