import numpy as np
import pytest
import torch

from anisosr import (DecoderConfig, EncoderConfig, build_model, decode, encode, forward,
                     full_volume_patch, simulate_lr_pair, Volume)
from anisosr.coordinates import index_to_coord

from conftest import TINY_DEC, TINY_ENC


def test_encode_shape_contract(tiny_model, rng):
    fmap = encode(tiny_model, rng.random((20, 20, 10)))
    assert tuple(fmap.shape) == (20, 20, 10, TINY_ENC.feature_channels)
    fmap1 = encode(tiny_model, rng.random((1, 1, 1)))
    assert tuple(fmap1.shape) == (1, 1, 1, TINY_ENC.feature_channels)


def test_encoder_default_width():
    cfg = EncoderConfig()
    assert cfg.feature_channels == 128
    assert (cfg.base_channels, cfg.num_blocks, cfg.layers_per_block, cfg.growth) == (64, 4, 4, 16)


def test_encode_zero_weights_constant(tiny_model, rng):
    for p in tiny_model.encoder.parameters():
        torch.nn.init.zeros_(p)
    with torch.no_grad():
        tiny_model.encoder.out.bias.fill_(0.25)
    fmap = encode(tiny_model, rng.random((6, 6, 6))).detach().numpy()
    assert np.abs(fmap - 0.25).max() <= 1e-7


def test_decoder_widths():
    cfg = DecoderConfig()
    model = build_model(decoder_config=cfg, encoder_config=TINY_ENC, seed=0)
    widths = [(lin.in_features, lin.out_features) for lin in model.decoder.linears]
    assert widths[0] == (256, 512)
    assert widths[1:-1] == [(512, 512)] * 6
    assert widths[-1] == (512, 1)
    assert len(widths) == 8


def test_decode_zero_weights_bias(tiny_model, rng):
    for p in tiny_model.decoder.parameters():
        torch.nn.init.zeros_(p)
    with torch.no_grad():
        tiny_model.decoder.linears[-1].bias.fill_(0.7)
    out = decode(tiny_model, rng.random((5, TINY_DEC.in_features)))
    assert np.abs(out.detach().numpy() - 0.7).max() <= 1e-7


def test_decode_batching_order(tiny_model, rng):
    feats = rng.random((16, TINY_DEC.in_features))
    full = decode(tiny_model, feats).detach().numpy()
    singles = np.array([float(decode(tiny_model, feats[i]).detach()) for i in range(16)])
    assert np.abs(full - singles).max() <= 1e-6


def test_decode_width_mismatch(tiny_model, rng):
    with pytest.raises(ValueError, match="feature width"):
        decode(tiny_model, rng.random((4, TINY_DEC.in_features + 1)))


def test_decoder_residual_changes_output(rng):
    # same seed, residual from hidden vs projected input: different functions
    a = build_model(TINY_ENC, DecoderConfig(in_features=16, hidden=16), seed=1)
    b = build_model(TINY_ENC, DecoderConfig(in_features=16, hidden=16,
                                            residual_source="input"), seed=1)
    feats = rng.random((8, 16))
    out_a = decode(a, feats).detach().numpy()
    out_b = decode(b, feats).detach().numpy()
    assert not np.allclose(out_a, out_b)


def test_forward_node_case(tiny_model, rng):
    hr = Volume(rng.random((16, 16, 16)))
    pair = simulate_lr_pair(hr, 2.0)
    pp = full_volume_patch(pair)
    i, j, k = 3, 4, 6  # j, k even: on both LR grids
    coords = np.array([[index_to_coord(i, 16), index_to_coord(j, 16), index_to_coord(k, 16)]])
    got = float(forward(tiny_model, pp, coords).detach())
    fmap_ax = encode(tiny_model, pp.ax_patch)
    fmap_cor = encode(tiny_model, pp.cor_patch)
    feats = torch.cat([fmap_ax[i, j, k // 2], fmap_cor[i, j // 2, k]]).unsqueeze(0)
    want = float(decode(tiny_model, feats).detach())
    assert abs(got - want) <= 1e-6


def test_forward_permutation_equivariance(tiny_model, pair24, rng):
    pp = full_volume_patch(pair24)
    coords = rng.uniform(-1, 1, size=(32, 3))
    perm = rng.permutation(32)
    out = forward(tiny_model, pp, coords).detach().numpy()
    out_perm = forward(tiny_model, pp, coords[perm]).detach().numpy()
    assert np.allclose(out[perm], out_perm, atol=1e-7)


def test_forward_deterministic(tiny_model, pair24, rng):
    pp = full_volume_patch(pair24)
    coords = rng.uniform(-1, 1, size=(64, 3))
    a = forward(tiny_model, pp, coords).detach().numpy()
    b = forward(tiny_model, pp, coords).detach().numpy()
    assert np.array_equal(a, b)


def test_encoder_receptive_field(tiny_model, rng):
    r = TINY_ENC.receptive_radius
    data = rng.random((16, 6, 6))
    base = encode(tiny_model, data).detach().numpy()
    poked = data.copy()
    poked[2 + r + 1, 2, 2] += 1.0  # just beyond the receptive radius of node 2
    far = encode(tiny_model, poked).detach().numpy()
    assert np.array_equal(base[2, 2, 2], far[2, 2, 2])
    poked2 = data.copy()
    poked2[2 + r - 1, 2, 2] += 1.0  # inside the radius: must influence the node
    near = encode(tiny_model, poked2).detach().numpy()
    assert not np.array_equal(base[2, 2, 2], near[2, 2, 2])


def test_parameter_count_pure_function_of_config():
    a = build_model(TINY_ENC, TINY_DEC, seed=0)
    b = build_model(TINY_ENC, TINY_DEC, seed=123)
    assert a.parameter_count() == b.parameter_count()
    assert a.fingerprint == b.fingerprint


def test_build_model_deterministic_init():
    a = build_model(TINY_ENC, TINY_DEC, seed=9)
    b = build_model(TINY_ENC, TINY_DEC, seed=9)
    for (_, pa), (_, pb) in zip(a.encoder.state_dict().items(), b.encoder.state_dict().items()):
        assert torch.equal(pa, pb)
    c = build_model(TINY_ENC, TINY_DEC, seed=10)
    assert not torch.equal(next(a.encoder.parameters()), next(c.encoder.parameters()))
