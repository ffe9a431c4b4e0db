"""Codec assembly: shapes, parameter counts, FLOPs, width switching."""

import numpy as np
import pytest

from ujscc.codec import (
    BASIC,
    LARGE,
    MORE_SYMBOLS,
    ArchitectureConfig,
    Codec,
    build_codec,
    build_te_bundle,
    count_flops,
    count_params,
    count_params_bundle,
)
from ujscc.data import synthetic_dataset
from ujscc.nn.rng import seeded_rng

# (setting, scheme) -> (total, bn) reference totals
PARAM_TABLE = {
    ("basic", "ujscc"): (258098, 6514),
    ("basic", "me"): (252902, 1318),
    ("basic", "te"): (1203634, 6514),
    ("large", "ujscc"): (1009734, 12998),
    ("large", "me"): (999366, 2630),
    ("large", "te"): (4753478, 12998),
    ("more_symbols", "ujscc"): (344114, 6514),
    ("more_symbols", "me"): (338918, 1318),
    ("more_symbols", "te"): (1633714, 6514),
}

FLOP_TABLE_G = {
    "basic": [(0.205, 0.205), (0.205, 0.206), (0.207, 0.207), (0.209, 0.209), (0.210, 0.210)],
    "large": [(0.807, 0.807), (0.811, 0.811), (0.817, 0.817), (0.824, 0.824), (0.830, 0.830)],
    "more_symbols": [(0.324, 0.324), (0.327, 0.327), (0.334, 0.334), (0.340, 0.340), (0.347, 0.347)],
}

ARCHS = {"basic": BASIC, "large": LARGE, "more_symbols": MORE_SYMBOLS}


@pytest.mark.parametrize("setting,scheme", sorted(PARAM_TABLE))
def test_param_counts_exact(setting, scheme):
    rng = seeded_rng(0)
    arch = ARCHS[setting]
    if scheme == "te":
        count = count_params_bundle(build_te_bundle(arch, rng))
    else:
        count = count_params(build_codec(arch, scheme, rng))
    assert (count.total, count.bn_total) == PARAM_TABLE[(setting, scheme)]
    assert sum(n for _, n in count.per_layer) == count.total


@pytest.mark.parametrize(
    "c1,c2,total,bn", [(48, 96, 552978, 9714), (64, 128, 958450, 12914)]
)
def test_param_counts_wider_channel_variants(c1, c2, total, bn):
    arch = ArchitectureConfig(f"b{c1}", c1=c1, c2=c2, dims=(2, 4, 8, 12, 16), n_symbols=256)
    count = count_params(build_codec(arch, "ujscc", seeded_rng(0)))
    assert (count.total, count.bn_total) == (total, bn)


@pytest.mark.parametrize("setting", sorted(FLOP_TABLE_G))
def test_flops_within_two_percent_of_table(setting):
    codec = build_codec(ARCHS[setting], "ujscc", seeded_rng(0))
    for k, (enc_ref, dec_ref) in enumerate(FLOP_TABLE_G[setting], start=1):
        fc = count_flops(codec, k)
        assert abs(fc.encoder / 1e9 - enc_ref) / enc_ref < 0.02
        assert abs(fc.decoder / 1e9 - dec_ref) / dec_ref < 0.02


def test_inner_encoder_flops_scale_with_width():
    codec = build_codec(BASIC, "ujscc", seeded_rng(0))
    inner = codec.inner_enc[0]
    h, w = BASIC.feat_hw
    assert inner.flops(h, w, 5) == 8 * inner.flops(h, w, 1)  # D_5 / D_1


def test_te_flops_match_ujscc_path(subtests=None):
    rng = seeded_rng(0)
    ujscc = build_codec(BASIC, "ujscc", rng)
    for k, te in enumerate(build_te_bundle(BASIC, rng), start=1):
        assert count_flops(te, k).encoder == count_flops(ujscc, k).encoder
        assert count_flops(te, k).decoder == count_flops(ujscc, k).decoder


@pytest.mark.parametrize(
    "arch,k,expected",
    [(BASIC, 1, (256, 2)), (BASIC, 3, (256, 8)), (MORE_SYMBOLS, 5, (1024, 16))],
)
def test_encode_shapes(arch, k, expected):
    codec = build_codec(arch, "ujscc", seeded_rng(0))
    x = synthetic_dataset(1, 0).images[0]
    y = codec.encode(x, k)
    assert y.shape == expected
    assert np.all(np.abs(y) < 1.0)  # tanh range, strictly inside


def test_me_encode_width_is_always_top():
    codec = build_codec(BASIC, "me", seeded_rng(0))
    x = synthetic_dataset(1, 1).images[0]
    for k in (1, 3, 5):
        assert codec.encode(x, k).shape == (256, 16)


def test_decode_shape_and_roundtrip_shapes():
    codec = build_codec(BASIC, "ujscc", seeded_rng(0))
    x = synthetic_dataset(1, 2).images[0]
    for k in range(1, 6):
        y = codec.encode(x, k)
        x_hat = codec.decode(y, k)
        assert x_hat.shape == (3, 32, 32)
        assert np.all(np.isfinite(x_hat))


def test_decode_zero_features_fresh_model_finite():
    codec = build_codec(BASIC, "ujscc", seeded_rng(0))
    x_hat = codec.decode(np.zeros((256, 8)), 3)
    assert np.all(np.isfinite(x_hat))
    assert np.all(np.abs(x_hat) < 1.0)


def test_decode_rejects_wrong_width():
    codec = build_codec(BASIC, "ujscc", seeded_rng(0))
    with pytest.raises(ValueError, match="carries"):
        codec.decode(np.zeros((256, 16)), 1)


def test_encode_rejects_bad_order_and_shape():
    codec = build_codec(BASIC, "ujscc", seeded_rng(0))
    x = synthetic_dataset(1, 0).images[0]
    with pytest.raises(ValueError, match="order index"):
        codec.encode(x, 6)
    with pytest.raises(ValueError, match="image shape"):
        codec.encode(np.zeros((3, 16, 16)), 1)


def test_unused_inner_filters_get_exactly_zero_grad(small_codec):
    x = synthetic_dataset(2, 3).images
    k = 2  # uses 2 of 3 inner filters
    y = small_codec.encode(x, k, training=True)
    small_codec.encode_backward(np.ones_like(y))
    enc_inner_w = small_codec.inner_enc[0].w
    d_k = small_codec.arch.dims[k - 1]
    assert np.all(enc_inner_w.grad[d_k:] == 0.0)
    assert np.any(enc_inner_w.grad[:d_k] != 0.0)

    x_hat = small_codec.decode(y, k, training=True)
    small_codec.decode_backward(np.ones_like(x_hat))
    dec_inner_w = small_codec.inner_dec[1].w
    assert np.all(dec_inner_w.grad[d_k:] == 0.0)
    assert np.any(dec_inner_w.grad[:d_k] != 0.0)


def _clone_path_to_standalone(ujscc: Codec, k: int) -> Codec:
    """Standalone codec with inner width D_k, weights and path-k BN state
    copied from the switched codec."""
    solo = Codec(ujscc.arch, "te", seeded_rng(99), te_index=k)
    u_entries = dict(ujscc.state_entries())
    for name, arr_s in solo.state_entries():
        if not name.endswith(".w"):
            continue  # BN state is copied per path below
        src = u_entries[name]
        arr_s[...] = src if src.shape == arr_s.shape else src[: arr_s.shape[0]]
    # switched codec carries K BN paths; keep only path k's state
    for bn_u, bn_s in zip(ujscc.bn_layers(), solo.bn_layers()):
        i = k - 1 if bn_u.paths > 1 else 0
        bn_s.gamma[0].value[...] = bn_u.gamma[i].value[: bn_s.dims[0]]
        bn_s.beta[0].value[...] = bn_u.beta[i].value[: bn_s.dims[0]]
        bn_s.running_mean[0][...] = bn_u.running_mean[i][: bn_s.dims[0]]
        bn_s.running_std[0][...] = bn_u.running_std[i][: bn_s.dims[0]]
    return solo


@pytest.mark.parametrize("k", [1, 2, 3])
def test_path_equivalent_to_standalone_codec(small_codec, k):
    """Path k of the switched codec computes the same function as a
    standalone codec built at width D_k from the same weights."""
    solo = _clone_path_to_standalone(small_codec, k)
    x = synthetic_dataset(2, 5).images
    y_u = small_codec.encode(x, k, training=False)
    y_s = solo.encode(x, k, training=False)
    np.testing.assert_allclose(y_u, y_s, atol=1e-12)
    x_u = small_codec.decode(y_u, k, training=False)
    x_s = solo.decode(y_s, k, training=False)
    np.testing.assert_allclose(x_u, x_s, atol=1e-12)


def test_state_entries_roundtrip_are_live_views(small_codec):
    entries = dict(small_codec.state_entries())
    key = next(iter(entries))
    entries[key][...] = 42.0
    assert np.all(dict(small_codec.state_entries())[key] == 42.0)


def test_init_is_seed_deterministic():
    a = build_codec(BASIC, "ujscc", seeded_rng(5))
    b = build_codec(BASIC, "ujscc", seeded_rng(5))
    for (n1, v1), (n2, v2) in zip(a.state_entries(), b.state_entries()):
        assert n1 == n2
        assert np.array_equal(v1, v2)
