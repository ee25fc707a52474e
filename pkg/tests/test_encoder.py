import numpy as np
import pytest

from tmsc import tensor as T
from tmsc.encoder import (
    EncoderConfig,
    block_size,
    encode,
    encode_batch,
    init_params,
    patchify,
    unpatchify,
)

CFG = EncoderConfig(image_side=24, patch_size=4, depth=2, heads=2, embed_dim=32)


def _image(seed=0, side=24):
    return np.random.default_rng(seed).uniform(size=(side, side))


def test_config_rejects_bad_geometry():
    with pytest.raises(ValueError):
        EncoderConfig(image_side=25, patch_size=4)
    with pytest.raises(ValueError):
        EncoderConfig(embed_dim=30, heads=4)
    assert CFG.num_tokens == 37


def test_patchify_shape_and_order():
    tokens = patchify(_image(), 4)
    assert tokens.shape == (36, 16)
    img = np.arange(64.0).reshape(8, 8)
    t = patchify(img, 4)
    np.testing.assert_array_equal(t[1].reshape(4, 4), img[0:4, 4:8])
    np.testing.assert_array_equal(t[2].reshape(4, 4), img[4:8, 0:4])


def test_patchify_constant_and_inverse():
    tokens = patchify(np.full((24, 24), 0.3), 4)
    assert np.all(tokens == tokens[0])
    img = _image(3)
    back = unpatchify(patchify(img, 4), 4, 24, 24)[:, :, 0]
    assert back.tobytes() == img.tobytes()


def test_patchify_rejects_indivisible():
    with pytest.raises(ValueError):
        patchify(np.zeros((10, 10)), 4)


def test_encode_shapes_and_attention_rows():
    params = init_params(CFG, 0)
    z, attn = encode(_image(), params)
    assert z.shape == (32,)
    assert len(attn) == 2
    for layer in attn.layers:
        assert layer.shape == (37, 37)
        assert np.all(layer >= 0) and np.all(layer <= 1)
        np.testing.assert_allclose(layer.sum(axis=1), 1.0, atol=1e-5)


def test_encode_rejects_wrong_shape():
    with pytest.raises(T.ShapeError):
        encode(np.zeros((20, 20)), init_params(CFG, 0))
    with pytest.raises(ValueError):
        encode(_image(), init_params(CFG, 0), EncoderConfig(image_side=16))


def test_encode_is_deterministic():
    a = encode(_image(), init_params(CFG, 5))
    b = encode(_image(), init_params(CFG, 5))
    assert a[0].data.tobytes() == b[0].data.tobytes()
    for x, y in zip(a[1].layers, b[1].layers):
        assert x.tobytes() == y.tobytes()


def test_batch_matches_single():
    params = init_params(CFG, 1)
    imgs = np.stack([_image(i) for i in range(3)])
    zb, ab = encode_batch(imgs, params)
    for i in range(3):
        z, a = encode(imgs[i], params)
        np.testing.assert_allclose(zb.data[i], z.data, atol=1e-5)
        np.testing.assert_allclose(ab.sample(i).layers[-1], a.layers[-1], atol=1e-6)


def test_init_is_seeded():
    a, b, c = init_params(CFG, 0), init_params(CFG, 0), init_params(CFG, 1)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a.tensors)
    assert any(not np.array_equal(a[k].data, c[k].data) for k in a.tensors)


def test_init_statistics():
    params = init_params(CFG, 0)
    for name, t in params.tensors.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            assert np.all(t.data == 1)
        elif leaf == "b":
            assert np.all(t.data == 0)
        else:
            fan_in = t.shape[0] if t.data.ndim == 2 and name != "pos" else CFG.embed_dim
            sigma = 1 / np.sqrt(fan_in)
            assert np.all(np.abs(t.data) <= 2 * sigma + 1e-6)
            # truncated normal at 2 sigma has std ~0.88 sigma, so 3 sigma / sqrt(n) is loose enough
            assert abs(t.data.mean()) <= 3 * sigma / np.sqrt(t.size)


def test_depth_changes_count_by_block_size():
    shallow = init_params(EncoderConfig(depth=2), 0).count()
    deep = init_params(EncoderConfig(depth=4), 0).count()
    assert deep - shallow == 2 * block_size(CFG)


def test_lrn_and_hrn_parameters_are_disjoint():
    a, b = init_params(CFG, 0), init_params(CFG, 1)
    ids = {id(t) for t in a.parameters()}
    assert not ids & {id(t) for t in b.parameters()}


def test_permutation_covariance_without_positions():
    params = init_params(CFG, 2)
    params.tensors["pos"].data[...] = 0
    img = _image(4)
    perm = np.random.default_rng(0).permutation(36)
    tiles = patchify(img, 4)[perm]
    shuffled = unpatchify(tiles, 4, 24, 24)[:, :, 0]
    with T.precision(np.float64):
        for t in params.parameters():
            t.data = t.data.astype(np.float64)
        z1, a1 = encode(img, params)
        z2, a2 = encode(shuffled, params)
    np.testing.assert_allclose(z1.data, z2.data, atol=1e-9)
    order = np.concatenate([[0], perm + 1])
    for x, y in zip(a1.layers, a2.layers):
        np.testing.assert_allclose(x[np.ix_(order, order)], y, atol=1e-9)
