"""Batch command-line interface.

Subcommands: simulate, train, finetune, superres, evaluate, baseline, phantom,
export-slices. Exit codes: 0 success, 2 validation error, 3 runtime failure.
Flags override config-file values; every output carries a provenance block.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .degradation import load_lr_pair_from_volumes, save_lr_pair, simulate_lr_pair
from .evaluation import evaluate_method, export_comparison_slices
from .inference import InferenceConfig, super_resolve_timed
from .network import DecoderConfig, EncoderConfig
from .phantom import make_phantoms
from .training import (TrainConfig, finetune_online, load_checkpoint, load_manifest,
                       save_checkpoint, train_offline)
from .volume_io import Mask, foreground_mask, load_mask, load_volume, normalize_intensity, save_volume

log = logging.getLogger("anisosr")


class ValidationError(ValueError):
    pass


def cache_dir() -> Path:
    return Path(os.environ.get("ANISOSR_CACHE", Path.home() / ".cache" / "anisosr"))


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        return tomli.load(fh)


def _merge_section(section: dict, cls, overrides: dict):
    """Config-file section -> dataclass kwargs, with CLI flags taking precedence."""
    known = {f.name for f in dataclass_fields(cls)}
    bad = set(section) - known
    if bad:
        raise ValidationError(f"unknown {cls.__name__} keys in config file: {sorted(bad)}")
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if "scale_range" in merged:
        merged["scale_range"] = tuple(merged["scale_range"])
    if "target_shape" in merged and merged["target_shape"] is not None:
        merged["target_shape"] = tuple(merged["target_shape"])
    return cls(**merged)


def _provenance(args, config_obj=None, seed=None) -> dict:
    cfg_dict = {}
    if config_obj is not None:
        cfg_dict = config_obj.to_dict() if hasattr(config_obj, "to_dict") else vars(config_obj)
    blob = json.dumps(cfg_dict, sort_keys=True, default=str)
    return {
        "command": " ".join(sys.argv),
        "config": cfg_dict,
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": seed,
        "version": __version__,
    }


def _write_provenance(out_path, prov: dict) -> None:
    side = Path(str(out_path) + ".provenance.json")
    side.write_text(json.dumps(prov, indent=2, default=str))


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, default=str))


def cmd_simulate(args) -> int:
    if args.scale <= 1.0:
        raise ValidationError("scale must exceed 1")
    hr = normalize_intensity(load_volume(args.input))
    pair = simulate_lr_pair(hr, args.scale, rng_seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(Path(args.input).stem).stem  # strip .nii(.gz)
    ax_path = out_dir / f"{stem}_axial.nii.gz"
    cor_path = out_dir / f"{stem}_coronal.nii.gz"
    sidecar = out_dir / f"{stem}_pair.json"
    prov = _provenance(args, seed=args.seed)
    save_lr_pair(pair, ax_path, cor_path, sidecar, rng_seed=args.seed,
                 extra={"provenance": prov})
    _write_provenance(ax_path, prov)
    _write_provenance(cor_path, prov)
    log.info("wrote %s, %s, %s", ax_path, cor_path, sidecar)
    return 0


def _train_config(args, file_cfg: dict) -> TrainConfig:
    overrides = {
        "epochs_offline": getattr(args, "epochs", None),
        "epochs_online": getattr(args, "ft_epochs", None),
        "batch_patches": getattr(args, "batch", None),
        "lr": getattr(args, "lr", None),
        "samples_per_patch": getattr(args, "samples_per_patch", None),
        "steps_per_image": getattr(args, "steps_per_image", None),
        "scale_range": tuple(args.scale_range) if getattr(args, "scale_range", None) else None,
        "seed": getattr(args, "seed", None),
        "checkpoint_every": getattr(args, "checkpoint_every", None),
    }
    return _merge_section(file_cfg.get("train", {}), TrainConfig, overrides)


def _model_configs(file_cfg: dict) -> tuple[EncoderConfig, DecoderConfig]:
    enc = _merge_section(file_cfg.get("encoder", {}), EncoderConfig, {})
    dec = _merge_section(file_cfg.get("decoder", {}), DecoderConfig, {})
    return enc, dec


def cmd_train(args) -> int:
    if not Path(args.manifest).exists():
        raise ValidationError(f"manifest not found: {args.manifest}")
    file_cfg = _load_config_file(args.config)
    cfg = _train_config(args, file_cfg)
    enc_cfg, dec_cfg = _model_configs(file_cfg)
    pairs = load_manifest(args.manifest, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = args.log or str(out) + ".log.jsonl"
    t0 = time.perf_counter()
    params, reports = train_offline(pairs, cfg, encoder_config=enc_cfg,
                                    decoder_config=dec_cfg,
                                    checkpoint_path=out, log_path=log_path)
    offline_s = time.perf_counter() - t0
    prov = _provenance(args, cfg, seed=cfg.seed)
    prov["offline_s"] = offline_s
    prov["steps"] = len(reports)
    prov["final_loss"] = reports[-1].loss_total if reports else None
    _write_provenance(out, prov)
    log.info("offline phase: %d steps in %.1f s -> %s", len(reports), offline_s, out)
    return 0


def _load_pair_checked(ax_path, cor_path):
    for p in (ax_path, cor_path):
        if not Path(p).exists():
            raise ValidationError(f"volume not found: {p}")
    try:
        return load_lr_pair_from_volumes(ax_path, cor_path)
    except ValueError as err:
        raise ValidationError(str(err)) from err


def cmd_superres(args, infer: bool = True) -> int:
    if not Path(args.model).exists():
        raise ValidationError(f"checkpoint not found: {args.model}")
    file_cfg = _load_config_file(args.config)
    pair = _load_pair_checked(args.axial, args.coronal)
    params = load_checkpoint(args.model)
    cfg = _train_config(args, file_cfg)

    timing = {"offline_s": None, "finetune_s": 0.0}
    if args.finetune:
        t0 = time.perf_counter()
        params, _ = finetune_online(params, pair, cfg)
        timing["finetune_s"] = time.perf_counter() - t0
        if args.save_model:
            save_checkpoint(params, args.save_model)

    prov = _provenance(args, cfg, seed=cfg.seed)
    if infer:
        inf_overrides = {
            "chunk_size": getattr(args, "chunk_size", None),
            "target_shape": tuple(args.target_shape) if getattr(args, "target_shape", None) else None,
        }
        inf_cfg = _merge_section(file_cfg.get("inference", {}), InferenceConfig, inf_overrides)
        sr, inf_timing = super_resolve_timed(params, pair, inf_cfg)
        timing.update(inf_timing)
        timing["online_s"] = timing["finetune_s"] + inf_timing["total_s"]
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_volume(sr, out)
        _write_provenance(out, prov)
        _write_json(str(out) + ".timing.json", {"timing": timing, "provenance": prov})
        log.info("wrote %s (online %.2f s)", out, timing["online_s"])
    else:
        timing["online_s"] = timing["finetune_s"]
        _write_json(str(args.save_model) + ".timing.json", {"timing": timing, "provenance": prov})
    return 0


def cmd_finetune(args) -> int:
    args.finetune = True
    if not args.save_model:
        raise ValidationError("finetune requires --save-model (tuned checkpoint path)")
    return cmd_superres(args, infer=False)


def _resolve_mask(args, ref) -> Mask:
    if getattr(args, "mask", None):
        if not Path(args.mask).exists():
            raise ValidationError(f"mask not found: {args.mask}")
        return load_mask(args.mask)
    return foreground_mask(ref, threshold=0.0)


def cmd_evaluate(args) -> int:
    for p in (args.pred, args.ref):
        if not Path(p).exists():
            raise ValidationError(f"volume not found: {p}")
    pred = load_volume(args.pred)
    ref = load_volume(args.ref)
    if pred.shape != ref.shape:
        raise ValidationError(f"shape mismatch: pred {pred.shape} vs ref {ref.shape}")
    mask = _resolve_mask(args, ref)
    report = evaluate_method(pred, ref, mask, args.method)
    payload = report.to_dict()
    payload["provenance"] = _provenance(args, seed=args.seed)
    if args.out:
        _write_json(args.out, payload)
    print(json.dumps({k: payload[k] for k in ("psnr_db", "ssim", "mask_voxels", "method")}))
    return 0


def cmd_baseline(args) -> int:
    if args.kind != "cubic":
        raise ValidationError(f"unknown baseline {args.kind!r} (only 'cubic')")
    if not Path(args.ref).exists():
        raise ValidationError(f"volume not found: {args.ref}")
    pair = _load_pair_checked(args.axial, args.coronal)
    ref = load_volume(args.ref)
    if tuple(pair.hr_shape) != ref.shape:
        raise ValidationError(f"pair hr_shape {pair.hr_shape} does not match ref {ref.shape}")
    mask = _resolve_mask(args, ref)
    report = evaluate_method(pair, ref, mask, "cubic-spline")
    payload = report.to_dict()
    payload["provenance"] = _provenance(args, seed=args.seed)
    if args.out:
        _write_json(args.out, payload)
    print(json.dumps({k: payload[k] for k in ("psnr_db", "ssim", "method", "scale")}))
    return 0


def cmd_phantom(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else cache_dir() / "phantoms"
    try:
        volumes = make_phantoms(args.n, args.size, args.seed)
    except ValueError as err:
        raise ValidationError(str(err)) from err
    out_dir.mkdir(parents=True, exist_ok=True)
    prov = _provenance(args, seed=args.seed)
    for i, v in enumerate(volumes):
        path = out_dir / f"phantom_{i:03d}.nii.gz"
        save_volume(v, path)
        _write_provenance(path, prov)
    log.info("wrote %d phantoms to %s", len(volumes), out_dir)
    return 0


def cmd_export_slices(args) -> int:
    volumes = []
    for spec in args.volumes:
        if "=" not in spec:
            raise ValidationError(f"--volumes entries are name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        if not Path(path).exists():
            raise ValidationError(f"volume not found: {path}")
        volumes.append((name, load_volume(path)))
    try:
        written = export_comparison_slices(volumes, args.plane, args.index, args.out)
    except ValueError as err:
        raise ValidationError(str(err)) from err
    prov = _provenance(args, seed=args.seed)
    _write_provenance(args.out, prov)
    log.info("wrote %s", ", ".join(written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisosr",
                                     description="Multi-view anisotropic volume super-resolution")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="TOML config file")

    p = sub.add_parser("simulate", help="degrade an HR volume into an LR pair")
    p.add_argument("--input", required=True)
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="offline patient-agnostic training")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--scale-range", type=float, nargs=2, default=None)
    p.add_argument("--samples-per-patch", type=int, default=None)
    p.add_argument("--steps-per-image", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_train)

    def superres_args(p, with_infer_flags: bool):
        p.add_argument("--model", required=True)
        p.add_argument("--axial", required=True)
        p.add_argument("--coronal", required=True)
        p.add_argument("--ft-epochs", type=int, default=None)
        p.add_argument("--batch", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--samples-per-patch", type=int, default=None)
        p.add_argument("--steps-per-image", type=int, default=None)
        p.add_argument("--save-model", default=None, help="write the tuned checkpoint here")
        if with_infer_flags:
            p.add_argument("--out", required=True)
            p.add_argument("--finetune", action=argparse.BooleanOptionalAction, default=False)
            p.add_argument("--chunk-size", type=int, default=None)
            p.add_argument("--target-shape", type=int, nargs=3, default=None)
        common(p)

    p = sub.add_parser("superres", help="reconstruct the SR volume from an LR pair")
    superres_args(p, with_infer_flags=True)
    p.set_defaults(func=cmd_superres)

    p = sub.add_parser("finetune", help="patient-specific fine-tuning only")
    superres_args(p, with_infer_flags=False)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="masked PSNR/SSIM of a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--method", default="ours")
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="per-view interpolation baseline, metrics averaged")
    p.add_argument("kind", choices=["cubic"])
    p.add_argument("--axial", required=True)
    p.add_argument("--coronal", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("phantom", help="generate synthetic HR phantoms")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out-dir", default=None)
    common(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("export-slices", help="export comparison slices + montage")
    p.add_argument("--volumes", nargs="+", required=True, metavar="NAME=PATH")
    p.add_argument("--plane", choices=["axial", "coronal", "sagittal"], default="sagittal")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_export_slices)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is None:
        args.seed = 0
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as err:
        log.error("%s", err)
        return 2
    except ValueError as err:
        log.error("validation error: %s", err)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        log.error("runtime failure: %s", err)
        return 3


if __name__ == "__main__":
    sys.exit(main())
