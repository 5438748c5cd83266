import numpy as np
import pytest

from gazelab import tensor as T
from gazelab.errors import ConfigError, ShapeError, StateError
from gazelab.model import (NetworkConfig, backward, build_network, default_channel_plan,
                           encoder_features, forward, layer_specs)
from gradcheck import max_rel_error, numerical_grad


def tiny_net(size=8, channels=(2, 3), seed=3):
    return build_network(NetworkConfig.toy(size, channels, seed=seed))


def test_default_channel_plan():
    assert default_channel_plan(512, 4) == (256, 128, 64, 64)
    assert default_channel_plan(16, 2) == (8, 8)
    assert default_channel_plan(16, 1) == (8,)
    assert default_channel_plan(16, 0) == ()


def test_vgg16_config_shapes():
    cfg = NetworkConfig.vgg16()
    assert cfg.feature_shape == (15, 20, 512)
    assert cfg.decoder_channel_plan == (256, 128, 64, 64)
    names = [n for n, _ in layer_specs(cfg)]
    assert names[:2] == ["enc1_1", "enc1_2"] and names[-1] == "head"
    assert sum(n.startswith("enc") for n in names) == 13


def test_toy_shapes(rng):
    net = tiny_net(64, (8, 16))
    img = rng.uniform(size=(64, 64, 3))
    assert encoder_features(net, img).shape == (16, 16, 16)
    out, cache = forward(net, img)
    assert out.shape == (64, 64)
    assert cache.encoder_output.shape == (16, 16, 16)


def test_config_errors():
    with pytest.raises(ConfigError):
        NetworkConfig(30, 32, ((2, 8), (2, 16)), pool_count=2)
    with pytest.raises(ConfigError):
        NetworkConfig(32, 32, ((2, 8),), pool_count=2)
    with pytest.raises(ConfigError):
        NetworkConfig(32, 32, ((2, 8),), pool_count=1, decoder_blocks=2)
    with pytest.raises(ConfigError):
        NetworkConfig(32, 32, (), pool_count=0)
    with pytest.raises(ConfigError):
        NetworkConfig(32, 32, ((2, 8),), pool_count=1, decoder_channel_plan=(4, 4))


def test_wrong_image_shape():
    net = tiny_net()
    with pytest.raises(ShapeError):
        forward(net, np.zeros((8, 8, 1)))


def test_deterministic_init_and_forward(rng):
    img = rng.uniform(size=(8, 8, 3))
    a, b = tiny_net(seed=5), tiny_net(seed=5)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].weights, b.params[k].weights)
    np.testing.assert_array_equal(forward(a, img)[0], forward(b, img)[0])
    c = tiny_net(seed=6)
    assert not np.array_equal(a.params["enc1_1"].weights, c.params["enc1_1"].weights)


def test_zero_weights_give_head_bias(rng):
    net = tiny_net()
    for p in net.params.values():
        p.weights[...] = 0.0
    net.params["head"].bias[...] = 0.37
    out, _ = forward(net, rng.uniform(size=(8, 8, 3)))
    assert np.all(out == 0.37)


def test_zero_second_conv_leaves_skip_path(rng):
    net = tiny_net(8, (3,))
    for name in ("dec1_conv",):
        net.params[name].weights[...] = 0.0
        net.params[name].bias[...] = 0.0
    img = rng.uniform(size=(8, 8, 3))
    out, _ = forward(net, img)
    p = net.params
    f1 = T.relu(T.conv2d(encoder_features(net, img), p["dec1_reduce"]))
    expected = T.conv2d(T.relu(T.deconv2d(f1, p["dec1_deconv"])), p["head"])[..., 0]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_pool_count_zero(rng):
    net = build_network(NetworkConfig(6, 6, ((1, 2),), pool_count=0))
    out, _ = forward(net, rng.uniform(size=(6, 6, 3)))
    assert out.shape == (6, 6)
    assert [n for n in net.params] == ["enc1_1", "head"]


@pytest.mark.parametrize("size,channels", [(8, (2, 3)), (16, (2, 2))])
def test_network_finite_differences(rng, size, channels):
    net = tiny_net(size, channels, seed=11)
    for p in net.params.values():
        p.bias[...] = rng.normal(scale=0.1, size=p.bias.shape)
    img = rng.uniform(size=(size, size, 3))
    proj = rng.normal(size=(size, size))
    out, cache = forward(net, img)
    grads, g_img = backward(net, cache, proj, with_input=True)
    f = lambda: float(np.sum(forward(net, img, record=False)[0] * proj))
    for name, p in net.params.items():
        assert max_rel_error(grads[name].weights, numerical_grad(f, p.weights)) < 1e-4, name
        assert max_rel_error(grads[name].bias, numerical_grad(f, p.bias)) < 1e-4, name
    assert max_rel_error(g_img, numerical_grad(f, img)) < 1e-4


def test_stale_cache_rejected(rng):
    net = tiny_net()
    img = rng.uniform(size=(8, 8, 3))
    _, cache = forward(net, img)
    net.touch()
    with pytest.raises(StateError):
        backward(net, cache, np.ones((8, 8)))
    _, cache = forward(net, img, record=False)
    with pytest.raises(StateError):
        backward(net, cache, np.ones((8, 8)))
    _, cache = forward(net, img)
    with pytest.raises(StateError):
        backward(net.copy(), cache, np.ones((8, 8)))


def test_backward_grad_shape(rng):
    net = tiny_net()
    _, cache = forward(net, rng.uniform(size=(8, 8, 3)))
    with pytest.raises(ShapeError):
        backward(net, cache, np.ones((4, 4)))


def test_copy_is_independent():
    net = tiny_net()
    other = net.copy()
    other.params["head"].weights[...] = 0.0
    assert np.any(net.params["head"].weights)
    assert net.n_parameters() == other.n_parameters()
