import numpy as np
import pytest

from mixgrad.errors import DimensionError, InvariantError, NumericalError
from mixgrad.net import (
    BatchSampler,
    Mlp,
    Adam,
    Sgd,
    TrainConfig,
    backward,
    cosine_rate,
    forward,
    forward_cached,
    init_mlp,
    make_optimizer,
    sgd_step,
    train,
)


def _zeros(sizes, **kw):
    return Mlp(sizes, [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
               [np.zeros(b) for b in sizes[1:]], **kw)


def _params(m):
    return [*m.weights, *m.biases]


def _numeric_param_grads(m, f, h=1e-6):
    out = []
    for p in _params(m):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            keep = p[idx]
            p[idx] = keep + h
            up = f()
            p[idx] = keep - h
            down = f()
            p[idx] = keep
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


# ---------- structure ----------
def test_zero_network_outputs_half():
    m = _zeros([3, 4, 2])
    np.testing.assert_array_equal(forward(m, np.ones((5, 3))), np.full((5, 2), 0.5))


def test_identity_layer():
    m = Mlp([2, 2], [np.eye(2)], [np.zeros(2)], output_activation="identity")
    x = np.array([[1.5, -2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(forward(m, x), x)
    np.testing.assert_array_equal(forward(m, x[0]), x[0])


def test_mlp_invariants():
    with pytest.raises(InvariantError):
        _zeros([3])
    with pytest.raises(InvariantError):
        _zeros([3, 2], hidden_activation="gelu")
    with pytest.raises(DimensionError):
        Mlp([3, 2], [np.zeros((2, 3))], [np.zeros(2)])
    with pytest.raises(DimensionError):
        forward(_zeros([3, 2]), np.ones((4, 2)))


def test_init_is_seeded_and_bounded():
    a = init_mlp([4, 8, 2], seed=3)
    b = init_mlp([4, 8, 2], seed=3)
    c = init_mlp([4, 8, 2], seed=4)
    for pa, pb in zip(_params(a), _params(b)):
        np.testing.assert_array_equal(pa, pb)
    assert not np.array_equal(a.weights[0], c.weights[0])
    assert np.all(np.abs(a.weights[0]) <= 0.5)
    assert np.all(np.abs(a.weights[1]) <= 1 / np.sqrt(8))
    assert a.n_parameters == 4 * 8 + 8 + 8 * 2 + 2


def test_init_zero_last_layer():
    m = init_mlp([3, 5, 2], zero_last=True)
    assert not m.weights[-1].any() and not m.biases[-1].any()
    assert m.weights[0].any()


# ---------- gradients ----------
def test_backward_zero_upstream(rng):
    m = init_mlp([3, 6, 2], seed=1)
    x = rng.normal(size=(4, 3))
    grads = backward(m, x, np.zeros((4, 2)))
    for g in [*grads.weights, *grads.biases, grads.inputs]:
        assert not g.any()


def test_single_layer_gradient_is_outer_product(rng):
    m = Mlp([3, 2], [rng.normal(size=(3, 2))], [rng.normal(size=2)], output_activation="identity")
    x, up = rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    grads = backward(m, x, up)
    np.testing.assert_allclose(grads.weights[0], x.T @ up, rtol=1e-12)
    np.testing.assert_allclose(grads.biases[0], up.sum(axis=0), rtol=1e-12)
    np.testing.assert_allclose(grads.inputs, up @ m.weights[0].T, rtol=1e-12)


@pytest.mark.parametrize("hidden", ["relu", "tanh"])
@pytest.mark.parametrize("output", ["sigmoid", "identity"])
def test_backward_matches_finite_differences(rng, hidden, output):
    m = init_mlp([3, 5, 4, 2], hidden, output, seed=11)
    x, up = rng.normal(size=(3, 3)), rng.normal(size=(3, 2))
    grads = backward(m, x, up)
    numeric = _numeric_param_grads(m, lambda: float(np.sum(up * forward(m, x))))
    for analytic, approx in zip([*grads.weights, *grads.biases], numeric):
        np.testing.assert_allclose(analytic, approx, rtol=1e-4, atol=1e-7)


def test_hidden_gradients_feed_back(rng):
    m = init_mlp([3, 5, 4, 2], "tanh", "sigmoid", seed=5)
    x, up = rng.normal(size=(3, 3)), rng.normal(size=(3, 2))
    extra = rng.normal(size=(3, 5))

    def objective():
        out, cache = forward_cached(m, x)
        return float(np.sum(up * out) + np.sum(extra * cache.post[1]))

    grads = backward(m, x, up, hidden_grads={1: extra})
    numeric = _numeric_param_grads(m, objective)
    for analytic, approx in zip([*grads.weights, *grads.biases], numeric):
        np.testing.assert_allclose(analytic, approx, rtol=1e-4, atol=1e-7)
    with pytest.raises(DimensionError):
        backward(m, x, up, hidden_grads={1: np.zeros((3, 4))})


def test_sgd_step_moves_against_gradient(rng):
    m = init_mlp([2, 3, 1], seed=2)
    before = m.copy()
    grads = backward(m, rng.normal(size=(4, 2)), np.ones((4, 1)))
    sgd_step(m, grads, 0.1)
    for w0, w1, g in zip(before.weights, m.weights, grads.weights):
        np.testing.assert_allclose(w1, w0 - 0.1 * g)



def test_adam_first_step_moves_by_the_learning_rate(rng):
    m = init_mlp([2, 3, 1], seed=2)
    before = m.copy()
    grads = backward(m, rng.normal(size=(4, 2)), np.ones((4, 1)))
    opt = make_optimizer("adam", m)
    assert isinstance(opt, Adam)
    opt.step(m, grads, 0.01)
    assert opt.steps == 1
    for w0, w1, g in zip(before.weights, m.weights, grads.weights):
        moved = np.abs(g) > 1e-3
        np.testing.assert_allclose(w1[moved], (w0 - 0.01 * np.sign(g))[moved], atol=1e-6)


def test_optimizer_names():
    assert isinstance(make_optimizer("sgd", init_mlp([1, 2])), Sgd)
    with pytest.raises(InvariantError):
        make_optimizer("rmsprop", init_mlp([1, 2]))


def test_cosine_rate():
    assert cosine_rate(0.1, 0, 100) == pytest.approx(0.1)
    assert cosine_rate(0.1, 50, 100) == pytest.approx(0.05)
    assert cosine_rate(0.1, 100, 100) == pytest.approx(0.0, abs=1e-15)
    assert cosine_rate(0.1, 0, 0) == pytest.approx(0.1)

# ---------- training ----------
def _separable(n=400, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, 1))
    return x, (x > 0.5).astype(float)


def test_zero_iterations_leave_model_unchanged():
    m = init_mlp([1, 8, 1], seed=0)
    x, y = _separable()
    result = train(m, x, y, TrainConfig(iterations=0))
    assert result.losses == []
    assert result.model is not m
    for a, b in zip(_params(m), _params(result.model)):
        np.testing.assert_array_equal(a, b)


def test_bce_training_reduces_loss():
    m = init_mlp([1, 16, 1], seed=0)
    x, y = _separable()
    before = m.copy()
    result = train(m, x, y, TrainConfig(iterations=1500, learning_rate=0.5, batch_size=32))
    assert np.mean(result.losses[-100:]) < np.mean(result.losses[:100])
    # the caller's model is not touched
    np.testing.assert_array_equal(m.weights[0], before.weights[0])


def test_training_is_reproducible():
    x, y = _separable()
    config = TrainConfig(iterations=200, seed=9, loss_name="ngmg_two_sided")
    m = init_mlp([1, 8, 2], seed=9)
    y2 = np.hstack([y, 1.0 - y])
    a, b = train(m, x, y2, config), train(m, x, y2, config)
    assert a.losses == b.losses
    for pa, pb in zip(_params(a.model), _params(b.model)):
        np.testing.assert_array_equal(pa, pb)


def test_train_rejects_mismatched_data():
    m = init_mlp([1, 4, 2])
    x, y = _separable()
    with pytest.raises(DimensionError):
        train(m, x, y, TrainConfig(iterations=1))
    with pytest.raises(DimensionError):
        train(m, x[:10], np.zeros((5, 2)), TrainConfig(iterations=1))


def test_train_config_rejects():
    with pytest.raises(InvariantError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(InvariantError):
        TrainConfig(loss_name="hinge")


def test_divergence_raises():
    m = init_mlp([1, 8, 1], output_activation="identity", seed=0)
    x, y = _separable()
    with np.errstate(all="ignore"), pytest.raises(NumericalError):
        train(m, x * 100, y, TrainConfig(iterations=500, learning_rate=1e3, loss_name="mse"))


def test_batch_sampler_covers_each_epoch():
    sampler = BatchSampler(10, 5, np.random.default_rng(0))
    first = np.concatenate([sampler.next(), sampler.next()])
    assert sorted(first) == list(range(10))
    assert sampler.epoch == 1
    sampler.next()
    assert sampler.epoch == 2
