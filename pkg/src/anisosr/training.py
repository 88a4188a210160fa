"""Sparse coordinate MSE loss and the two optimization phases.

The offline phase is patient-agnostic: every step draws a batch of patch
pairs from one image and applies one Adam update to the mean loss. The
online phase repeats the same loop on a single pair before inference.
Both phases consume LR pairs only; HR data never enters this module.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .coordinates import sample_patch_coordinates, sample_patch_pair, trilinear_sample
from .degradation import LRPair, load_lr_pair_from_volumes, sample_training_scale, simulate_lr_pair
from .network import (DecoderConfig, EncoderConfig, ModelParams, build_model,
                      config_fingerprint, decode, encode)
from .volume_io import load_volume, normalize_intensity


@dataclass(frozen=True)
class TrainConfig:
    epochs_offline: int = 35
    epochs_online: int = 10
    batch_patches: int = 10
    samples_per_patch: int = 8000
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    scale_range: tuple[float, float] = (2.0, 4.0)
    seed: int = 0
    checkpoint_every: int = 0      # epochs between checkpoint writes; 0 = final only
    steps_per_image: int = 1       # batches drawn per image per epoch
    slices_per_patch: int = 10

    def __post_init__(self):
        for name in ("epochs_offline", "epochs_online", "batch_patches",
                     "samples_per_patch", "steps_per_image", "slices_per_patch"):
            if getattr(self, name) < 0 or (name not in ("epochs_offline", "epochs_online")
                                           and getattr(self, name) < 1):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        lo, hi = self.scale_range
        if not (1.0 < lo <= hi):
            raise ValueError(f"scale_range must lie in (1, inf), got {self.scale_range}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale_range"] = list(self.scale_range)
        return d


@dataclass
class LossReport:
    epoch: int
    step: int
    loss_ax: float
    loss_cor: float
    loss_total: float
    samples_used: int

    def to_dict(self) -> dict:
        return asdict(self)


def coordinate_loss(pred_ax, targets_ax, pred_cor, targets_cor,
                    epoch: int = 0, step: int = 0) -> LossReport:
    """Per-view MSE at matching coordinates; total is the mean of nonempty views."""
    pred_ax = np.asarray(pred_ax, dtype=np.float64).reshape(-1)
    pred_cor = np.asarray(pred_cor, dtype=np.float64).reshape(-1)
    targets_ax = np.asarray(targets_ax, dtype=np.float64).reshape(-1)
    targets_cor = np.asarray(targets_cor, dtype=np.float64).reshape(-1)
    if len(pred_ax) != len(targets_ax) or len(pred_cor) != len(targets_cor):
        raise ValueError("prediction/target lengths differ")
    if len(pred_ax) == 0 and len(pred_cor) == 0:
        raise ValueError("both views are empty")
    loss_ax = float(np.mean((pred_ax - targets_ax) ** 2)) if len(pred_ax) else 0.0
    loss_cor = float(np.mean((pred_cor - targets_cor) ** 2)) if len(pred_cor) else 0.0
    views = (len(pred_ax) > 0) + (len(pred_cor) > 0)
    total = (loss_ax + loss_cor) / views
    return LossReport(epoch, step, loss_ax, loss_cor, total,
                      len(pred_ax) + len(pred_cor))


def _patch_losses(params: ModelParams, pp, n_samples: int,
                  rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor, int]:
    """Torch (loss_ax, loss_cor) for one patch pair with n samples per view."""
    loss_ax, loss_cor, samples = _batch_losses(params, [pp], n_samples, rng)
    return loss_ax[0], loss_cor[0], samples


def _batch_losses(params: ModelParams, patches, n_samples: int,
                  rng: np.random.Generator) -> tuple[list, list, int]:
    """Per-patch view losses for one batch, with the encoder run once per view.

    Patches of one batch come from one image, so their shapes agree and the
    B axial (and B coronal) patches form one convolution batch.
    """
    from .network import _as_model_tensor

    weight = params.encoder.sfe1.weight
    sets = [sample_patch_coordinates(pp, n_samples, rng) for pp in patches]
    ax_stack = torch.stack([_as_model_tensor(pp.ax_patch, weight) for pp in patches])
    cor_stack = torch.stack([_as_model_tensor(pp.cor_patch, weight) for pp in patches])
    fmaps_ax = params.encoder(ax_stack.unsqueeze(1)).permute(0, 2, 3, 4, 1)
    fmaps_cor = params.encoder(cor_stack.unsqueeze(1)).permute(0, 2, 3, 4, 1)

    feats = []
    for b, (pp, (set_ax, set_cor)) in enumerate(zip(patches, sets)):
        coords = np.concatenate([set_ax.coords, set_cor.coords], axis=0)
        v_ax = trilinear_sample(fmaps_ax[b], pp.view_local_coords(coords, "axial"))
        v_cor = trilinear_sample(fmaps_cor[b], pp.view_local_coords(coords, "coronal"))
        feats.append(torch.cat([v_ax, v_cor], dim=1))
    pred = decode(params, torch.cat(feats, dim=0))

    losses_ax, losses_cor = [], []
    offset = 0
    samples = 0
    for set_ax, set_cor in sets:
        n_ax, n_cor = len(set_ax), len(set_cor)
        t_ax = torch.as_tensor(set_ax.targets, dtype=pred.dtype)
        t_cor = torch.as_tensor(set_cor.targets, dtype=pred.dtype)
        losses_ax.append(torch.mean((pred[offset:offset + n_ax] - t_ax) ** 2))
        losses_cor.append(torch.mean((pred[offset + n_ax:offset + n_ax + n_cor] - t_cor) ** 2))
        offset += n_ax + n_cor
        samples += n_ax + n_cor
    return losses_ax, losses_cor, samples


def _run_phase(params: ModelParams, pairs: Sequence[LRPair], cfg: TrainConfig,
               epochs: int, rng: np.random.Generator,
               checkpoint_path=None, log_path=None,
               step_offset: int = 0) -> list[LossReport]:
    optimizer = torch.optim.Adam(
        list(params.encoder.parameters()) + list(params.decoder.parameters()),
        lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2))
    reports: list[LossReport] = []
    warned: set[int] = set()
    log_fh = open(log_path, "a") if log_path else None
    step = step_offset
    try:
        for epoch in range(epochs):
            order = rng.permutation(len(pairs))
            for img_idx in order:
                pair = pairs[int(img_idx)]
                for _ in range(cfg.steps_per_image):
                    try:
                        patches = [sample_patch_pair(pair, rng, cfg.slices_per_patch)
                                   for _ in range(cfg.batch_patches)]
                    except ValueError as err:
                        if int(img_idx) not in warned:
                            warnings.warn(f"skipping image {img_idx}: {err}")
                            warned.add(int(img_idx))
                        break
                    optimizer.zero_grad()
                    losses_ax, losses_cor, samples = _batch_losses(
                        params, patches, cfg.samples_per_patch, rng)
                    total = 0.5 * (torch.stack(losses_ax).mean() +
                                   torch.stack(losses_cor).mean())
                    total.backward()
                    optimizer.step()
                    mean_ax = float(torch.stack(losses_ax).detach().mean())
                    mean_cor = float(torch.stack(losses_cor).detach().mean())
                    report = LossReport(epoch, step, mean_ax, mean_cor,
                                        0.5 * (mean_ax + mean_cor), samples)
                    reports.append(report)
                    if log_fh:
                        log_fh.write(json.dumps(report.to_dict()) + "\n")
                    step += 1
            if checkpoint_path and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(params, checkpoint_path)
    finally:
        if log_fh:
            log_fh.close()
    return reports


def train_offline(pairs: Sequence[LRPair], cfg: TrainConfig,
                  model: ModelParams | None = None,
                  encoder_config: EncoderConfig | None = None,
                  decoder_config: DecoderConfig | None = None,
                  checkpoint_path=None, log_path=None) -> tuple[ModelParams, list[LossReport]]:
    """Patient-agnostic phase over a cohort of LR pairs."""
    if not pairs:
        raise ValueError("training manifest is empty")
    params = model if model is not None else build_model(encoder_config, decoder_config,
                                                         seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    reports = _run_phase(params, pairs, cfg, cfg.epochs_offline, rng,
                         checkpoint_path=checkpoint_path, log_path=log_path)
    if checkpoint_path:
        save_checkpoint(params, checkpoint_path)
    return params, reports


def finetune_online(params: ModelParams, pair: LRPair, cfg: TrainConfig,
                    log_path=None) -> tuple[ModelParams, list[LossReport]]:
    """Patient-specific phase on a single pair; the input model is untouched."""
    tuned = params.clone()
    rng = np.random.default_rng(cfg.seed + 1)
    reports = _run_phase(tuned, [pair], cfg, cfg.epochs_online, rng, log_path=log_path)
    return tuned, reports


def save_checkpoint(params: ModelParams, path) -> None:
    """Flat .npz of parameter arrays plus a JSON sidecar with configs + fingerprint."""
    path = Path(path)
    with open(path, "wb") as fh:  # file handle keeps numpy from appending .npz
        np.savez(fh, **params.named_arrays())
    sidecar = {
        "encoder_config": asdict(params.encoder_config),
        "decoder_config": asdict(params.decoder_config),
        "fingerprint": params.fingerprint,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2))


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    sidecar_file = _sidecar_path(path)
    if not sidecar_file.exists():
        raise FileNotFoundError(f"missing checkpoint sidecar {sidecar_file}")
    sidecar = json.loads(sidecar_file.read_text())
    enc_cfg = EncoderConfig(**sidecar["encoder_config"])
    dec_cfg = DecoderConfig(**sidecar["decoder_config"])
    expected = config_fingerprint(enc_cfg, dec_cfg)
    if sidecar.get("fingerprint") != expected:
        raise ValueError(f"fingerprint mismatch: sidecar has {sidecar.get('fingerprint')!r}, "
                         f"configs hash to {expected!r}")
    params = build_model(enc_cfg, dec_cfg, seed=0)
    with np.load(path) as arrays:
        enc_state = {k[len("encoder."):]: torch.as_tensor(arrays[k])
                     for k in arrays.files if k.startswith("encoder.")}
        dec_state = {k[len("decoder."):]: torch.as_tensor(arrays[k])
                     for k in arrays.files if k.startswith("decoder.")}
    params.encoder.load_state_dict(enc_state)
    params.decoder.load_state_dict(dec_state)
    return params


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def load_manifest(path, cfg: TrainConfig) -> list[LRPair]:
    """Materialize LR pairs from a manifest before training starts.

    Entries are {"hr": file, "scale": float|null, "seed": int|null} or
    {"axial": file, "coronal": file}. HR entries are degraded here, once, so
    the training loop itself never touches HR data. Missing scales are drawn
    uniformly from cfg.scale_range with the entry seed (or cfg.seed + index).
    """
    path = Path(path)
    entries = json.loads(path.read_text())
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"manifest {path} must be a nonempty JSON list")
    base = path.parent
    pairs = []
    for i, entry in enumerate(entries):
        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p
        if "axial" in entry and "coronal" in entry:
            pairs.append(load_lr_pair_from_volumes(resolve(entry["axial"]),
                                                   resolve(entry["coronal"])))
        elif "hr" in entry:
            hr = normalize_intensity(load_volume(resolve(entry["hr"])))
            scale = entry.get("scale")
            seed = entry.get("seed")
            seed = cfg.seed + i if seed is None else int(seed)
            if scale is None:
                scale = sample_training_scale(np.random.default_rng(seed),
                                              *cfg.scale_range)
            pairs.append(simulate_lr_pair(hr, float(scale), rng_seed=seed))
        else:
            raise ValueError(f"manifest entry {i} needs 'hr' or 'axial'+'coronal'")
    return pairs
