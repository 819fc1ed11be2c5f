import numpy as np
import pytest

from sadre.harness.corpus import synth_corpus
from sadre.metrics import psnr
from sadre.pixelio import _quantize
from sadre.watermarkers import (
    METHODS,
    EmbedConfig,
    Payload,
    block_assignment,
    bra,
    embed,
    extract,
    pn_sequences,
)


def test_bra_counting():
    p = Payload.random(32, 1)
    assert bra(p, p) == 1.0
    flipped = Payload(tuple(1 - b for b in p.bits))
    assert bra(flipped, p) == 0.0
    eight = Payload(tuple(1 - b if i < 8 else b for i, b in enumerate(p.bits)))
    assert bra(eight, p) == 0.75
    with pytest.raises(ValueError, match="length"):
        bra(Payload((1, 0)), p)


def test_payload_hex_round_trip():
    p = Payload.from_hex("deadbeef")
    assert len(p) == 32 and p.bits[:4] == (1, 1, 0, 1)
    assert p.to_hex() == "deadbeef"
    assert Payload.from_hex("0xF0", 4).bits == (1, 1, 1, 1)
    assert Payload((1, 0, 1)).to_hex() == "a"
    with pytest.raises(ValueError):
        Payload.from_hex("xyz")
    with pytest.raises(ValueError):
        Payload.from_hex("ab", 12)


def test_payload_validation():
    with pytest.raises(ValueError):
        Payload(())
    with pytest.raises(ValueError):
        Payload((0, 2))


def test_config_validation():
    assert EmbedConfig("DwtDct").method == "dwtdct"
    assert EmbedConfig("DwtDctSvd").k == 0.12
    assert EmbedConfig().k == 0.04
    with pytest.raises(ValueError):
        EmbedConfig("rivagan")
    with pytest.raises(ValueError):
        EmbedConfig("dwtdctsvd", strength=0.0)
    with pytest.raises(ValueError):
        EmbedConfig("dwtdct", strength=-0.1)
    with pytest.raises(ValueError):
        EmbedConfig(payload_len=0)


@pytest.mark.parametrize("method", METHODS)
def test_round_trip_random_planes(method, rng):
    for i in range(20):
        x = rng.random((256, 256))
        p = Payload.random(32, i)
        cfg = EmbedConfig(method, seed=i)
        assert bra(extract(embed(x, p, cfg), cfg), p) == 1.0


@pytest.mark.parametrize("method", METHODS)
def test_embedding_psnr_floor(method, corpus8):
    for i, x in enumerate(corpus8):
        cfg = EmbedConfig(method, seed=i)
        assert psnr(x, embed(x, Payload.random(32, i), cfg)) >= 38.0


def test_zero_strength_is_identity(corpus8):
    x = corpus8[0]
    cfg = EmbedConfig("dwtdct", strength=0.0)
    x_w = embed(x, Payload.random(32, 0), cfg)
    np.testing.assert_array_equal(_quantize(x_w), _quantize(x))
    np.testing.assert_array_equal(x_w, x)


@pytest.mark.parametrize("method", METHODS)
def test_seed_changes_output(method, corpus8):
    x = corpus8[1]
    p = Payload.random(32, 3)
    a = embed(x, p, EmbedConfig(method, seed=1))
    b = embed(x, p, EmbedConfig(method, seed=2))
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("method", METHODS)
def test_unmarked_image_is_chance(method):
    scores = []
    for i, c in enumerate(synth_corpus(50, 128, seed=31)):
        cfg = EmbedConfig(method, seed=i)
        scores.append(bra(extract(c.plane, cfg), Payload.random(32, 1000 + i)))
    assert abs(np.mean(scores) - 0.5) <= 0.15


@pytest.mark.parametrize("method", METHODS)
def test_survives_one_level_noise(method, corpus8, rng):
    for i, x in enumerate(corpus8):
        cfg = EmbedConfig(method, seed=i)
        p = Payload.random(32, i)
        noisy = embed(x, p, cfg) + rng.uniform(-1 / 255, 1 / 255, size=x.shape)
        assert bra(extract(np.clip(noisy, 0, 1), cfg), p) == 1.0


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("size", [128, 192, 200])
@pytest.mark.parametrize("bits", [1, 32, 64])
def test_round_trip_sizes_and_lengths(method, size, bits):
    for i, c in enumerate(synth_corpus(3, size, seed=size + bits)):
        cfg = EmbedConfig(method, seed=i, payload_len=bits)
        p = Payload.random(bits, i)
        x_w = embed(c.plane, p, cfg)
        assert x_w.shape == c.plane.shape
        assert bra(extract(_quantize(x_w) / 255.0, cfg), p) == 1.0


@pytest.mark.parametrize("method", METHODS)
def test_psnr_non_increasing_in_strength(method, corpus8):
    x = corpus8[2]
    p = Payload.random(32, 5)
    grid = [0.02, 0.04, 0.08, 0.16] if method == "dwtdct" else [0.06, 0.12, 0.24, 0.48]
    scores = [psnr(x, embed(x, p, EmbedConfig(method, strength=k))) for k in grid]
    assert all(b <= a + 1e-9 for a, b in zip(scores, scores[1:]))


def test_changes_confined_to_embedding_region():
    x = synth_corpus(1, 100, seed=3)[0].plane  # region is 96x96
    cfg = EmbedConfig("dwtdct")
    x_w = embed(x, Payload.random(32, 0), cfg)
    np.testing.assert_array_equal(x_w[96:, :], x[96:, :])
    np.testing.assert_array_equal(x_w[:, 96:], x[:, 96:])


def test_too_small_raises_with_minimum():
    with pytest.raises(ValueError, match="minimum"):
        embed(np.zeros((32, 32)), Payload.random(32, 0), EmbedConfig())
    with pytest.raises(ValueError, match="minimum"):
        embed(np.zeros((64, 64)), Payload.random(64, 0), EmbedConfig(payload_len=64))
    with pytest.raises(ValueError, match="minimum"):
        extract(np.zeros((40, 40)), EmbedConfig())


def test_payload_length_mismatch():
    with pytest.raises(ValueError, match="expects"):
        embed(np.zeros((128, 128)), Payload.random(16, 0), EmbedConfig())


def test_block_streams_are_layout_free():
    np.testing.assert_array_equal(pn_sequences(10, 4)[:6], pn_sequences(6, 4))
    owner = block_assignment(64, EmbedConfig(payload_len=32))
    assert np.bincount(owner).tolist() == [2] * 32


def test_extraction_needs_only_marked_image(corpus8):
    x = corpus8[3]
    cfg = EmbedConfig("dwtdctsvd", seed=9)
    p = Payload.random(32, 9)
    x_w = embed(x, p, cfg)
    del x
    assert extract(x_w.copy(), cfg) == extract(x_w, cfg) == p
