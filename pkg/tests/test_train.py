import numpy as np
import pytest

from gazelab.data import BlobSpec, synth_dataset
from gazelab.errors import ConfigError, NumericError, ShapeError
from gazelab.model import NetworkConfig, build_network
from gazelab.tensor import KernelSet
from gazelab.train import AdamState, TrainConfig, TrainingDiverged, adam_step, predict_map, train

SMALL = BlobSpec(max_shapes=2, min_radius=2, max_radius=4, n_fixations=15)


def params(rng):
    return {"a": KernelSet(rng.normal(size=(3, 3, 2, 2)), rng.normal(size=2)),
            "b": KernelSet(rng.normal(size=(2, 2, 2, 1)), rng.normal(size=1))}


def grads_like(p, fill):
    return {k: KernelSet(np.full(v.weights.shape, fill), np.full(v.bias.shape, fill)) for k, v in p.items()}


def small_setup(count=10, seed=0):
    net = build_network(NetworkConfig.toy(16, (2, 4), seed=seed))
    return net, synth_dataset(seed, count, 16, 16, SMALL)


def test_zero_gradient_is_noop(rng):
    p = params(rng)
    before = {k: v.copy() for k, v in p.items()}
    adam_step(p, grads_like(p, 0.0), AdamState(), 1e-3)
    for k in p:
        np.testing.assert_array_equal(p[k].weights, before[k].weights)
        np.testing.assert_array_equal(p[k].bias, before[k].bias)


def test_first_step_is_minus_lr(rng):
    p = params(rng)
    before = {k: v.copy() for k, v in p.items()}
    state = AdamState()
    adam_step(p, grads_like(p, 1.0), state, 1e-3)
    assert state.t == 1
    for k in p:
        np.testing.assert_allclose(p[k].weights - before[k].weights, -1e-3 / (1 + 1e-8), rtol=1e-12)


def test_step_bound(rng):
    p = params(rng)
    state = AdamState()
    lr = 1e-2
    for _ in range(20):
        before = {k: v.copy() for k, v in p.items()}
        g = {k: KernelSet(rng.normal(scale=10, size=v.weights.shape), rng.normal(size=v.bias.shape))
             for k, v in p.items()}
        adam_step(p, g, state, lr)
        for k in p:
            assert np.max(np.abs(p[k].weights - before[k].weights)) <= lr / (1 - 0.9) + 1e-15


def test_adam_matches_reference(rng):
    """Compare against a plain scalar transcription of the published update."""
    p = params(rng)
    w0 = p["a"].weights[0, 0, 0, 0]
    state = AdamState()
    m = v = 0.0
    w = w0
    for t in range(1, 6):
        g = float(rng.normal())
        gr = grads_like(p, 0.0)
        gr["a"].weights[0, 0, 0, 0] = g
        adam_step(p, gr, state, 0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert p["a"].weights[0, 0, 0, 0] == pytest.approx(w, rel=1e-12)


def test_non_finite_gradient_aborts(rng):
    p = params(rng)
    state = AdamState()
    adam_step(p, grads_like(p, 0.5), state, 1e-3)
    before = {k: v.copy() for k, v in p.items()}
    m_before = state.m["a"].weights.copy()
    bad = grads_like(p, 0.1)
    bad["b"].bias[0] = np.inf
    with pytest.raises(NumericError):
        adam_step(p, bad, state, 1e-3)
    assert state.t == 1
    np.testing.assert_array_equal(state.m["a"].weights, m_before)
    for k in p:
        np.testing.assert_array_equal(p[k].weights, before[k].weights)


def test_gradient_shape_mismatch(rng):
    p = params(rng)
    g = grads_like(p, 0.0)
    g["a"] = KernelSet.zeros(3, 3, 2, 1)
    with pytest.raises(ShapeError):
        adam_step(p, g, AdamState(), 1e-3)


def test_lr_schedule():
    cfg = TrainConfig()
    assert cfg.lr_at(0) == 5e-5
    assert cfg.lr_at(1) == pytest.approx(5e-6, rel=1e-12)
    cfg = TrainConfig(lr0=1e-2, lr_decay=0.5, epochs=4)
    assert [cfg.lr_at(e) for e in range(4)] == [1e-2, 5e-3, 2.5e-3, 1.25e-3]


def test_train_config_errors():
    with pytest.raises(ConfigError):
        TrainConfig(lr0=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(lr_decay=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(betas=(1.0, 0.999))


def test_zero_lr_leaves_parameters():
    net, data = small_setup()
    before = net.copy()
    _, hist = train(net, data, TrainConfig(lr0=0.0, epochs=1))
    assert len(hist) == 1 and hist[0].epoch == 1 and hist[0].lr == 0.0
    assert np.isfinite(hist[0].mean_loss)
    for k in net.params:
        np.testing.assert_array_equal(net.params[k].weights, before.params[k].weights)


def test_training_is_deterministic():
    cfg = TrainConfig(lr0=1e-3, epochs=2, batch_size=4, seed=7)
    net_a, data = small_setup()
    net_b, _ = small_setup()
    _, ha = train(net_a, data, cfg)
    _, hb = train(net_b, data, cfg)
    assert [h.as_dict() for h in ha] == [h.as_dict() for h in hb]
    for k in net_a.params:
        np.testing.assert_array_equal(net_a.params[k].weights, net_b.params[k].weights)
    assert [h.lr for h in ha] == [1e-3, pytest.approx(1e-4)]


def test_on_epoch_callback_and_version():
    net, data = small_setup()
    seen = []
    train(net, data, TrainConfig(lr0=1e-3, epochs=2), on_epoch=lambda e, n, s: seen.append((e.epoch, s.t)))
    assert [e for e, _ in seen] == [1, 2]
    assert seen[-1][1] == 2  # 8 training samples, one batch per epoch
    assert net.version == 2


def test_divergence_keeps_partial_log():
    net, data = small_setup()
    # huge head bias makes the exponential loss overflow immediately
    net.params["head"].bias[...] = 1e3
    with pytest.raises(TrainingDiverged) as exc:
        train(net, data, TrainConfig(lr0=1e-3, epochs=2))
    assert exc.value.history == []


def test_train_rejects_bad_data():
    net, _ = small_setup()
    with pytest.raises(ConfigError):
        train(net, [], TrainConfig())
    with pytest.raises(ShapeError):
        train(net, synth_dataset(0, 2, 32, 32, SMALL), TrainConfig())


def test_bce_predictions_are_probabilities():
    net, data = small_setup(2)
    out = predict_map(net, data[0].image, "bce")
    assert np.all((out > 0) & (out < 1))
