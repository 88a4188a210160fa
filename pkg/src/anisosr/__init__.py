"""Self-supervised multi-view super-resolution for anisotropic 3-D volumes."""

__version__ = "0.1.0"

from .volume_io import (Volume, Mask, IntensityNormalization, load_volume, save_volume,
                        normalize_intensity, foreground_mask, crop_background)
from .degradation import (ScaleSpec, LRPair, kspace_downsample_axis, simulate_lr_pair,
                          sample_training_scale, save_lr_pair, load_lr_pair,
                          load_lr_pair_from_volumes)
from .coordinates import (ReferenceFrame, CoordinateSet, PatchPair, lr_sample_positions,
                          matching_sets, sample_patch_pair, sample_patch_coordinates,
                          trilinear_sample, full_volume_patch)
from .network import (EncoderConfig, DecoderConfig, ModelParams, build_model,
                      encode, decode, forward)
from .training import (TrainConfig, LossReport, coordinate_loss, train_offline,
                       finetune_online, save_checkpoint, load_checkpoint, load_manifest)
from .inference import (InferenceConfig, super_resolve, super_resolve_timed,
                        reconstruct_pair_consistency)
from .evaluation import (MetricsReport, psnr, ssim, cubic_spline_upsample,
                         evaluate_method, export_comparison_slices)
from .phantom import make_phantom, make_phantoms

__all__ = [name for name in dir() if not name.startswith("_")]
