"""End-to-end miniature of the two-phase workflow: offline training on a small
phantom cohort, optional per-subject fine-tuning, dense reconstruction, and a
comparison against the cubic baseline.

Takes a few minutes on a laptop CPU; shrink STEPS_PER_IMAGE for a quicker look.
"""

import time

import numpy as np
import torch

from anisosr import (DecoderConfig, EncoderConfig, TrainConfig, evaluate_method,
                     finetune_online, foreground_mask, make_phantoms, psnr,
                     simulate_lr_pair, ssim, super_resolve_timed, train_offline)

torch.set_num_threads(max(1, torch.get_num_threads()))

STEPS_PER_IMAGE = 6  # raise for better quality, lower for speed

encoder = EncoderConfig(feature_channels=64, base_channels=12, num_blocks=2,
                        layers_per_block=2, growth=6)
decoder = DecoderConfig(in_features=128, hidden=128)

phantoms = make_phantoms(4, 48, seed=11)
rng = np.random.default_rng(0)
cohort = [simulate_lr_pair(ph, float(rng.uniform(2, 4))) for ph in phantoms[:3]]
subject = phantoms[3]
pair = simulate_lr_pair(subject, 2.0)
mask = foreground_mask(subject, 0.0)

print("offline phase (patient-agnostic) ...")
cfg = TrainConfig(epochs_offline=5, epochs_online=10, batch_patches=4,
                  samples_per_patch=2048, lr=2e-3, scale_range=(2.0, 4.0),
                  seed=0, steps_per_image=STEPS_PER_IMAGE)
t0 = time.perf_counter()
model, reports = train_offline(cohort, cfg, encoder_config=encoder, decoder_config=decoder)
print(f"  {len(reports)} steps in {time.perf_counter() - t0:.0f}s, "
      f"loss {reports[0].loss_total:.3f} -> {reports[-1].loss_total:.5f}")

print("online phase, w/o fine-tuning ...")
sr_fast, timing = super_resolve_timed(model, pair)
print(f"  inference {timing['total_s']:.1f}s "
      f"(encode {timing['encode_s']:.2f}s, decode {timing['decode_s']:.1f}s)")

print("online phase, with fine-tuning ...")
cfg_ft = TrainConfig(epochs_online=10, batch_patches=4, samples_per_patch=2048,
                     lr=5e-4, scale_range=(2.0, 4.0), seed=0,
                     steps_per_image=STEPS_PER_IMAGE)
t0 = time.perf_counter()
tuned, _ = finetune_online(model, pair, cfg_ft)
sr_ft, _ = super_resolve_timed(tuned, pair)
print(f"  fine-tune + inference {time.perf_counter() - t0:.0f}s")

cubic = evaluate_method(pair, subject, mask, "cubic-spline")
print(f"\nmasked metrics vs the held-out HR phantom (x2):")
print(f"  cubic spline : PSNR {cubic.psnr_db:6.2f} dB  SSIM {cubic.ssim:.4f}")
print(f"  ours w/o FT  : PSNR {psnr(sr_fast, subject, mask):6.2f} dB  "
      f"SSIM {ssim(sr_fast, subject, mask):.4f}")
print(f"  ours with FT : PSNR {psnr(sr_ft, subject, mask):6.2f} dB  "
      f"SSIM {ssim(sr_ft, subject, mask):.4f}")
