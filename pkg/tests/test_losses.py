import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gazelab.errors import DomainError, NumericError, ShapeError
from gazelab.losses import KINDS, LossKind, loss_grad, loss_value, pixel_losses, sigmoid
from gradcheck import max_rel_error, numerical_grad


@pytest.mark.parametrize("name", ["ead", "l1", "l2"])
def test_perfect_prediction_is_free(name, rng):
    g = rng.uniform(size=(4, 5))
    assert loss_value(name, g, g) == 0.0
    assert not loss_grad(name, g, g).any()


def test_ead_closed_form():
    assert loss_value("ead", [1.0], [0.0]) == pytest.approx(math.e - 1, abs=1e-12)
    assert loss_value("ead", [0.0], [1.0]) == pytest.approx(math.e - 1, abs=1e-12)


def test_bce_half_target_is_ln2():
    assert loss_value("bce", [0.0], [0.5]) == pytest.approx(math.log(2), abs=1e-15)
    assert loss_value("bce", [40.0], [1.0]) < 1e-15


def test_gradient_at_small_difference():
    ead = loss_grad("ead", [0.1], [0.0])[0]
    l2 = loss_grad("l2", [0.1], [0.0])[0]
    assert ead == pytest.approx(math.exp(0.1), abs=1e-12)
    assert l2 == pytest.approx(0.2, abs=1e-12)
    assert ead > l2


def test_grad_closed_forms():
    p, g = np.array([0.3, -0.2]), np.array([0.0, 0.5])
    np.testing.assert_allclose(loss_grad("l1", p, g), [1.0, -1.0])
    np.testing.assert_allclose(loss_grad("l2", p, g), 2 * (p - g))
    np.testing.assert_allclose(loss_grad("bce", p, g), sigmoid(p) - g)
    np.testing.assert_allclose(loss_grad("ead", p, g), [math.exp(0.3), -math.exp(0.7)])


def test_mean_reduction(rng):
    p, g = rng.normal(size=(3, 4)), rng.uniform(size=(3, 4))
    for name in KINDS:
        kind = LossKind(name, "mean")
        assert loss_value(kind, p, g) == pytest.approx(loss_value(name, p, g) / 12, rel=1e-12)
        np.testing.assert_allclose(loss_grad(kind, p, g), loss_grad(name, p, g) / 12)


@pytest.mark.parametrize("name", KINDS)
@pytest.mark.parametrize("reduction", ["sum", "mean"])
def test_grad_finite_differences(rng, name, reduction):
    kind = LossKind(name, reduction)
    g = rng.uniform(size=(5, 6))
    p = g + rng.choice([-1, 1], size=g.shape) * rng.uniform(0.05, 1.5, size=g.shape)
    f = lambda: loss_value(kind, p, g)
    assert max_rel_error(loss_grad(kind, p, g), numerical_grad(f, p, h=1e-6), floor=1e-8) < 1e-6


def test_errors():
    with pytest.raises(ShapeError):
        loss_value("ead", np.zeros(3), np.zeros(4))
    with pytest.raises(DomainError):
        loss_value("l2", [0.0], [1.5])
    with pytest.raises(DomainError):
        LossKind("huber")
    with pytest.raises(DomainError):
        LossKind("ead", "max")
    with pytest.raises(NumericError):
        loss_value("ead", [800.0], [0.0])


def test_bce_stable_on_extreme_logits():
    p = np.linspace(-500, 500, 101)
    for gt in (0.0, 0.3, 1.0):
        v = pixel_losses("bce", p, np.full_like(p, gt))
        assert np.all(np.isfinite(v)) and np.all(v >= 0)
        assert np.all(np.isfinite(loss_grad("bce", p, np.full_like(p, gt))))


def test_ead_dominates_l1(rng):
    d = rng.uniform(-3, 3, size=200)
    g = np.full_like(d, 0.5)
    p = g + d
    assert np.all(pixel_losses("ead", p, g) >= pixel_losses("l1", p, g))


pairs = st.integers(1, 12).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-5, 5)),
    arrays(np.float64, n, elements=st.floats(0, 1))))


@settings(max_examples=80, deadline=None)
@given(pairs)
def test_non_negative_and_symmetric(pg):
    p, g = pg
    for name in KINDS:
        assert loss_value(name, p, g) >= 0.0
    q = np.clip(p, 0, 1)
    for name in ("ead", "l1", "l2"):
        assert loss_value(name, q, g) == pytest.approx(loss_value(name, g, q), rel=1e-12, abs=1e-15)
    for name in ("ead", "l1"):  # squares of tiny differences underflow, so L2 is left out
        assert (loss_value(name, q, g) == 0.0) == bool(np.all(q == g))
