import math

import numpy as np
import pytest
from scipy import stats

from mixgrad.errors import DimensionError, InvariantError
from mixgrad.losses import (
    DELTA,
    LOSS_NAMES,
    LOSSES,
    attribute_kernel,
    bce,
    make_loss,
    mse,
    ngmg_entropy,
    ngmg_weights,
    shannon,
    weighted_entropy,
    well_weights,
)
from mixgrad.ngmg import deficit, ngmg_norm

LN2 = math.log(2.0)


def _numeric_grad(f, p, h=1e-6):
    g = np.zeros_like(p)
    for idx in np.ndindex(p.shape):
        up, down = p.copy(), p.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (f(up) - f(down)) / (2 * h)
    return g


@pytest.fixture
def batch(rng):
    targets = (rng.uniform(size=(6, 4)) > 0.5).astype(float)
    targets[0] = [1.0, 0.0, 0.0, 0.0]
    preds = rng.uniform(0.1, 0.9, size=(6, 4))
    return targets, preds


def test_shannon_ln2():
    assert shannon([1.0, 0.0], [0.5, 0.5]).value == pytest.approx(LN2)


def test_bce_ln2():
    assert bce([1.0], [0.5]).value == pytest.approx(LN2)
    assert bce([[1.0, 0.0]], [[0.5, 0.5]]).value == pytest.approx(LN2)


def test_bce_clamps_certain_mistakes():
    v = bce([1.0], [0.0]).value
    assert math.isfinite(v)
    assert v == pytest.approx(-math.log(DELTA))


def test_ngmg_literal_two_outputs():
    k = attribute_kernel(2, 1.0)
    phi1 = stats.norm.pdf(1.0)
    w_up, w_down = ngmg_weights([1.0, 0.0], [0.5, 0.5], k)
    np.testing.assert_allclose(w_up, [0.0, 0.5 * phi1], atol=1e-12)
    np.testing.assert_allclose(w_down, [0.5 * phi1, 0.0], atol=1e-12)
    v = ngmg_entropy([1.0, 0.0], [0.5, 0.5], k, mode="literal").value
    assert v == pytest.approx(0.5 * phi1 * LN2, rel=1e-9)
    assert v == pytest.approx(0.0838607, abs=1e-6)


def test_two_sided_pushes_each_output_towards_its_target():
    k = attribute_kernel(2, 1.0)
    phi1 = stats.norm.pdf(1.0)
    w_up, w_down = well_weights([1.0, 0.0], [0.5, 0.5], k)
    np.testing.assert_allclose(w_up, [0.5 * phi1, 0.0], atol=1e-12)
    np.testing.assert_allclose(w_down, [0.0, 0.5 * phi1], atol=1e-12)
    g = ngmg_entropy([1.0, 0.0], [0.5, 0.5], k, mode="two_sided", floor=0.0).gradient
    assert g[0] < 0 < g[1]


def test_two_sided_gradient_never_opposes_bce(batch):
    t, p = batch
    k = attribute_kernel(4, 1.0)
    two_sided = ngmg_entropy(t, p, k, mode="two_sided", floor=1.0).gradient
    plain = bce(t, p).gradient
    np.testing.assert_array_equal(np.sign(two_sided), np.sign(plain))
    assert np.all(np.abs(two_sided) >= np.abs(plain))
    assert np.any(np.abs(two_sided) > np.abs(plain))


def test_well_weights_carry_the_ngmg_norm(batch):
    t, p = batch
    k = attribute_kernel(4, 1.0)
    w_up, w_down = well_weights(t, p, k)
    for ti, pi, up, down in zip(t, p, w_up, w_down):
        assert up.sum() == pytest.approx(ngmg_norm(k, deficit(pi, ti)), rel=1e-9)
        assert down.sum() == pytest.approx(ngmg_norm(k, deficit(ti, pi)), rel=1e-9)
        assert not np.any((up > 0) & (down > 0))


def test_matching_prediction_leaves_only_floor():
    k = attribute_kernel(2, 1.0)
    t, p = [1.0, 1.0], [0.5, 0.5]
    w_up, w_down = ngmg_weights(t, p, k)
    assert not w_up.any() and not w_down.any()
    assert ngmg_entropy(t, p, k, mode="literal").value == 0.0

    t = p = [0.3, 0.6]
    w_up, w_down = well_weights(t, p, k)
    assert not w_up.any() and not w_down.any()
    v = ngmg_entropy(t, p, k, mode="two_sided", floor=0.5).value
    assert v == pytest.approx(0.5 * bce(t, p).value)


def test_all_zero_target_row_contributes_no_weights():
    k = attribute_kernel(3, 1.0)
    w_up, w_down = ngmg_weights([0.0, 0.0, 0.0], [0.2, 0.5, 0.7], k)
    np.testing.assert_array_equal(w_up, 0.0)
    assert np.all(w_down > 0)
    w_up, w_down = well_weights([0.0, 0.0, 0.0], [0.2, 0.5, 0.7], k)
    np.testing.assert_array_equal(w_up, 0.0)
    assert np.all(w_down > 0)


@pytest.mark.parametrize("loss", [shannon, bce, mse])
def test_plain_loss_gradients(batch, loss):
    t, p = batch
    analytic = loss(t, p).gradient
    numeric = _numeric_grad(lambda x: loss(t, x).value, p)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("weights,mode,floor", [
    (ngmg_weights, "literal", 0.0),
    (well_weights, "two_sided", 0.0),
    (well_weights, "two_sided", 1.0),
    (ngmg_weights, "two_sided", 0.05),
])
def test_weighted_entropy_gradients(batch, weights, mode, floor):
    t, p = batch
    w_up, w_down = weights(t, p, attribute_kernel(4, 1.0))
    analytic = weighted_entropy(t, p, w_up, w_down, mode, floor).gradient
    numeric = _numeric_grad(lambda x: weighted_entropy(t, x, w_up, w_down, mode, floor).value, p)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


def test_batch_shapes(batch):
    t, p = batch
    k = attribute_kernel(4)
    for value in (bce(t, p), ngmg_entropy(t, p, k), mse(t, p), shannon(t, p)):
        assert isinstance(value.value, float)
        assert value.gradient.shape == p.shape
    single = bce(t[0], p[0])
    assert single.gradient.shape == (4,)


def test_batch_value_is_row_mean(batch):
    t, p = batch
    rows = [bce(ti, pi).value for ti, pi in zip(t, p)]
    assert bce(t, p).value == pytest.approx(np.mean(rows))


def test_mse_is_squared_norm():
    v = mse([0.0, 0.0], [3.0, 4.0])
    assert v.value == 25.0
    np.testing.assert_array_equal(v.gradient, [6.0, 8.0])


def test_rejects_bad_inputs():
    k = attribute_kernel(2)
    with pytest.raises(InvariantError):
        ngmg_entropy([1.0, 0.0], [0.5, 0.5], k, mode="sideways")
    with pytest.raises(InvariantError):
        weighted_entropy([1.0, 0.0], [0.5, 0.5], np.zeros(2), np.zeros(2), mode="sideways")
    with pytest.raises(DimensionError):
        bce([1.0, 0.0], [0.5])
    with pytest.raises(DimensionError):
        ngmg_weights([1.0, 0.0, 1.0], [0.5, 0.5, 0.5], k)
    with pytest.raises(DimensionError):
        well_weights([1.0, 0.0, 1.0], [0.5, 0.5, 0.5], k)
    with pytest.raises(InvariantError):
        attribute_kernel(1)


def test_make_loss_registry(batch):
    t, p = batch
    assert LOSS_NAMES == tuple(LOSSES) == ("bce", "ngmg_literal", "ngmg_two_sided", "mse")
    for name in LOSS_NAMES:
        fn = make_loss(name, 4)
        assert fn(t, p).gradient.shape == p.shape
    assert make_loss("bce", 4)(t, p).value == bce(t, p).value
    with pytest.raises(InvariantError):
        make_loss("hinge", 4)
