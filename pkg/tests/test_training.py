import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from anisosr import (TrainConfig, build_model, coordinate_loss, finetune_online,
                     full_volume_patch, forward, load_checkpoint, matching_sets,
                     ReferenceFrame, save_checkpoint, simulate_lr_pair, train_offline)
from anisosr.phantom import make_phantom

from conftest import TINY_DEC, TINY_ENC


def small_cfg(**kw):
    base = dict(epochs_offline=1, epochs_online=2, batch_patches=2, samples_per_patch=64,
                lr=1e-3, scale_range=(2.0, 2.0), seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def two_pairs():
    phantoms = [make_phantom(24, np.random.default_rng(s)) for s in (1, 2)]
    return [simulate_lr_pair(p, 2.0) for p in phantoms]


def test_coordinate_loss_hand_value():
    report = coordinate_loss([0.5, 0.25], [0.0, 0.25], [], [])
    assert report.loss_ax == pytest.approx(0.125, abs=1e-12)
    assert report.loss_total == pytest.approx(0.125, abs=1e-12)
    assert report.samples_used == 2


def test_coordinate_loss_perfect_fit(rng):
    t = rng.random(10)
    report = coordinate_loss(t, t, t[:5], t[:5])
    assert report.loss_total == 0.0


def test_coordinate_loss_view_swap_symmetry(rng):
    a, ta = rng.random(6), rng.random(6)
    b, tb = rng.random(4), rng.random(4)
    r1 = coordinate_loss(a, ta, b, tb)
    r2 = coordinate_loss(b, tb, a, ta)
    assert r1.loss_total == pytest.approx(r2.loss_total, abs=1e-15)


def test_coordinate_loss_both_empty():
    with pytest.raises(ValueError, match="empty"):
        coordinate_loss([], [], [], [])


def test_coordinate_loss_length_mismatch():
    with pytest.raises(ValueError, match="lengths"):
        coordinate_loss([1.0], [1.0, 2.0], [], [])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_coordinate_loss_permutation_and_duplication(seed):
    rng = np.random.default_rng(seed)
    a, ta = rng.random(8), rng.random(8)
    b, tb = rng.random(8), rng.random(8)
    base = coordinate_loss(a, ta, b, tb)
    perm = rng.permutation(8)
    shuffled = coordinate_loss(a[perm], ta[perm], b, tb)
    assert shuffled.loss_total == pytest.approx(base.loss_total, abs=1e-15)
    doubled = coordinate_loss(np.tile(a, 2), np.tile(ta, 2), np.tile(b, 2), np.tile(tb, 2))
    assert doubled.loss_total == pytest.approx(base.loss_total, rel=1e-12)


def test_train_offline_step_bookkeeping(two_pairs):
    params, reports = train_offline(two_pairs, small_cfg(),
                                    encoder_config=TINY_ENC, decoder_config=TINY_DEC)
    assert len(reports) == 2  # 2 images x 1 epoch x 1 step/image
    assert [r.step for r in reports] == [0, 1]
    assert all(r.loss_total == pytest.approx(0.5 * (r.loss_ax + r.loss_cor)) for r in reports)


def test_train_offline_deterministic(two_pairs):
    run = lambda: train_offline(two_pairs, small_cfg(epochs_offline=2),
                                encoder_config=TINY_ENC, decoder_config=TINY_DEC)[1]
    losses_a = [r.loss_total for r in run()]
    losses_b = [r.loss_total for r in run()]
    assert losses_a == losses_b  # bit-for-bit


def test_train_offline_empty_manifest():
    with pytest.raises(ValueError, match="empty"):
        train_offline([], small_cfg())


def test_train_offline_skips_small_images(two_pairs, rng):
    tiny = simulate_lr_pair(make_phantom(20, rng), 4.0)  # cube 40 > 20
    with pytest.warns(UserWarning, match="skipping"):
        params, reports = train_offline([two_pairs[0], tiny], small_cfg(),
                                        encoder_config=TINY_ENC, decoder_config=TINY_DEC)
    assert len(reports) == 1


def test_zero_lr_leaves_params_unchanged(two_pairs):
    model = build_model(TINY_ENC, TINY_DEC, seed=4)
    before = {k: v.clone() for k, v in model.decoder.state_dict().items()}
    train_offline(two_pairs, small_cfg(lr=0.0), model=model)
    after = model.decoder.state_dict()
    for k in before:
        assert torch.equal(before[k], after[k])


def test_training_log_jsonl(two_pairs, tmp_path):
    log = tmp_path / "log.jsonl"
    train_offline(two_pairs, small_cfg(), encoder_config=TINY_ENC,
                  decoder_config=TINY_DEC, log_path=log)
    lines = [json.loads(l) for l in log.read_text().splitlines()]
    assert len(lines) == 2
    assert set(lines[0]) == {"epoch", "step", "loss_ax", "loss_cor", "loss_total", "samples_used"}


def test_overfit_single_phantom_loss_decreases():
    # 200 steps on one image: smoothed loss at the end beats the start
    phantom = make_phantom(48, np.random.default_rng(7))
    pair = simulate_lr_pair(phantom, 2.0)
    cfg = small_cfg(epochs_offline=200, samples_per_patch=256, lr=1e-3)
    _, reports = train_offline([pair], cfg, encoder_config=TINY_ENC, decoder_config=TINY_DEC)
    losses = np.array([r.loss_total for r in reports])
    assert len(losses) == 200
    assert losses[180:].mean() < losses[:20].mean()


def test_finetune_zero_epochs_is_identity(two_pairs):
    model = build_model(TINY_ENC, TINY_DEC, seed=5)
    tuned, reports = finetune_online(model, two_pairs[0], small_cfg(epochs_online=0))
    assert reports == []
    for (ka, va), (kb, vb) in zip(model.encoder.state_dict().items(),
                                  tuned.encoder.state_dict().items()):
        assert torch.equal(va, vb)
    assert tuned is not model


def test_finetune_improves_matching_loss(two_pairs):
    pair = two_pairs[0]
    model = build_model(TINY_ENC, TINY_DEC, seed=6)

    def matching_mse(params):
        pp = full_volume_patch(pair)
        m_ax, m_cor = matching_sets(pair, ReferenceFrame(pair.hr_shape))
        with torch.no_grad():
            pred_ax = forward(params, pp, m_ax.coords).numpy()
            pred_cor = forward(params, pp, m_cor.coords).numpy()
        return coordinate_loss(pred_ax, m_ax.targets, pred_cor, m_cor.targets).loss_total

    before = matching_mse(model)
    tuned, reports = finetune_online(model, pair,
                                     small_cfg(epochs_online=40, samples_per_patch=512))
    after = matching_mse(tuned)
    assert after < before
    # and the input model was untouched
    assert matching_mse(model) == before


def test_checkpoint_round_trip(tmp_path, tiny_model):
    path = tmp_path / "model.ckpt.npz"
    save_checkpoint(tiny_model, path)
    back = load_checkpoint(path)
    for (ka, va), (kb, vb) in zip(tiny_model.named_arrays().items(),
                                  back.named_arrays().items()):
        assert ka == kb
        assert np.array_equal(va, vb)


def test_checkpoint_fingerprint_guard(tmp_path, tiny_model):
    path = tmp_path / "model.ckpt.npz"
    save_checkpoint(tiny_model, path)
    sidecar_path = tmp_path / "model.ckpt.npz.json"
    sidecar = json.loads(sidecar_path.read_text())
    sidecar["encoder_config"]["growth"] += 1  # altered config, stale fingerprint
    sidecar_path.write_text(json.dumps(sidecar))
    with pytest.raises(ValueError, match="fingerprint mismatch"):
        load_checkpoint(path)


def test_offline_checkpoint_feeds_finetune(tmp_path, two_pairs):
    path = tmp_path / "offline.npz"
    train_offline(two_pairs, small_cfg(), encoder_config=TINY_ENC,
                  decoder_config=TINY_DEC, checkpoint_path=path)
    params = load_checkpoint(path)
    tuned, reports = finetune_online(params, two_pairs[0], small_cfg(epochs_online=1))
    assert len(reports) == 1


def test_manifest_hr_entries_never_read_during_training(tmp_path, two_pairs):
    # manifest references only LR files; a bogus hr path proves HR is not opened
    from anisosr import save_volume
    from anisosr.training import load_manifest
    pair = two_pairs[0]
    save_volume(pair.axial, tmp_path / "ax.nii.gz")
    save_volume(pair.coronal, tmp_path / "cor.nii.gz")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps([
        {"axial": "ax.nii.gz", "coronal": "cor.nii.gz"},
    ]))
    cfg = small_cfg()
    pairs = load_manifest(manifest, cfg)
    params, reports = train_offline(pairs, cfg, encoder_config=TINY_ENC,
                                    decoder_config=TINY_DEC)
    assert len(reports) == 1
