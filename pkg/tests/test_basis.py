import math
import warnings

import numpy as np
import pytest
from scipy import stats

from mixgrad.basis import (
    Basis,
    WeightVector,
    build_basis,
    cdf_at,
    density_at,
    fit_weights,
    initial_weights,
    sample_mixture,
    total_mass,
)
from mixgrad.errors import DegenerateFitWarning, DimensionError, InvariantError


def test_build_basis_evenly_spread():
    b = build_basis(5, 0.0, 4.0, scale=0.5, support_pad=4.0)
    np.testing.assert_array_equal(b.means, [0, 1, 2, 3, 4])
    assert (b.support_lo, b.support_hi) == (-2.0, 6.0)
    assert b.spacing == 1.0


@pytest.mark.parametrize("n,lo,hi,scale,means", [
    (2, 0.0, 1.0, 0.01, [0.0, 1.0]),
    (3, -1.0, 1.0, 0.3, [-1.0, 0.0, 1.0]),
])
def test_build_basis_small(n, lo, hi, scale, means):
    b = build_basis(n, lo, hi, scale=scale, support_pad=4.0)
    np.testing.assert_allclose(b.means, means, atol=1e-15)
    assert b.support_lo < b.means[0] and b.support_hi > b.means[-1]


def test_build_basis_defaults_scale_to_spacing():
    b = build_basis(11, 0.0, 1.0)
    assert b.scale == pytest.approx(0.1)


@pytest.mark.parametrize("kwargs", [
    dict(n_components=1, data_min=0.0, data_max=1.0),
    dict(n_components=4, data_min=0.0, data_max=math.inf),
    dict(n_components=4, data_min=1.0, data_max=1.0),
    dict(n_components=4, data_min=0.0, data_max=1.0, scale=0.0),
    dict(n_components=4, data_min=0.0, data_max=1.0, scale=-1.0),
])
def test_build_basis_rejects(kwargs):
    with pytest.raises(InvariantError):
        build_basis(**kwargs)


def test_basis_invariants():
    with pytest.raises(InvariantError, match="evenly"):
        Basis(np.array([0.0, 1.0, 3.0]), 0.5, -2.0, 5.0)
    with pytest.raises(InvariantError, match="increasing"):
        Basis(np.array([1.0, 0.0]), 0.5, -2.0, 5.0)
    with pytest.raises(InvariantError, match="support"):
        Basis(np.array([0.0, 1.0]), 0.5, 0.0, 5.0)


def test_weight_vector_invariants():
    WeightVector(np.array([0.25, 0.75]))
    with pytest.raises(InvariantError):
        WeightVector(np.array([-0.1, 1.1]))
    with pytest.raises(InvariantError):
        WeightVector(np.array([0.3, 0.3]))
    with pytest.raises(InvariantError):
        WeightVector(np.array([np.nan, 1.0]))


def test_initial_weights_uniform(basis8):
    np.testing.assert_array_equal(initial_weights(basis8).weights, np.full(8, 1 / 8))


def test_fit_point_mass_matches_pdf_oracle():
    b = build_basis(5, 0.0, 4.0, scale=0.2)
    w = fit_weights(b, [2.0]).weights
    l = stats.norm.pdf(2.0, loc=np.arange(5.0), scale=0.2)
    np.testing.assert_allclose(w, l / l.sum(), rtol=1e-12)
    assert np.argmax(w) == 2
    # each neighbour carries exp(-12.5) of the centre's likelihood
    assert w.sum() - w[2] < 1e-5


def test_fit_symmetric_data():
    b = build_basis(3, -1.0, 1.0, scale=0.5)
    w = fit_weights(b, [-0.5, 0.5]).weights
    assert w[0] == pytest.approx(w[2], abs=1e-12)


def test_fit_permutation_invariant(rng, basis8):
    data = rng.uniform(0, 7, size=500)
    a = fit_weights(basis8, data)
    b = fit_weights(basis8, rng.permutation(data))
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.weights, fit_weights(basis8, data).weights)


def test_fit_random_data_is_valid(rng, basis8):
    for _ in range(20):
        w = fit_weights(basis8, rng.normal(3.5, 2.0, size=rng.integers(1, 200)))
        assert np.all(w.weights >= 0)
        assert abs(w.weights.sum() - 1.0) <= 1e-9


def test_fit_counts_act_as_multiplicities(basis8):
    a = fit_weights(basis8, [1.0, 1.0, 1.0, 4.5])
    b = fit_weights(basis8, [1.0, 4.5], counts=[3, 1])
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-12)
    with pytest.raises(DimensionError):
        fit_weights(basis8, [1.0, 2.0], counts=[1.0])


def test_fit_off_index_mass_shrinks_with_sigma():
    off = []
    for sigma in (0.5, 0.4, 0.3, 0.2):
        w = fit_weights(build_basis(5, 0.0, 4.0, scale=sigma), np.full(10, 2.0)).weights
        off.append(1.0 - w[2])
    assert all(a > b for a, b in zip(off, off[1:]))


def test_fit_rejects_bad_data(basis8):
    with pytest.raises(InvariantError):
        fit_weights(basis8, [])
    with pytest.raises(InvariantError):
        fit_weights(basis8, [1.0, np.inf])


def test_fit_degenerate_returns_uniform_with_warning():
    b = build_basis(3, 0.0, 1.0, scale=0.01)
    with pytest.warns(DegenerateFitWarning):
        w = fit_weights(b, [1e6])
    np.testing.assert_array_equal(w.weights, np.full(3, 1 / 3))


def test_density_peak_of_one_hot():
    b = build_basis(5, 0.0, 4.0, scale=0.5)
    w = WeightVector(np.eye(5)[3])
    assert density_at(b, w, 3.0) == pytest.approx(1 / (0.5 * math.sqrt(2 * math.pi)), rel=1e-12)


def test_density_symmetric_for_symmetric_basis():
    b = build_basis(5, -2.0, 2.0, scale=0.7)
    w = initial_weights(b)
    xs = np.linspace(0.0, 3.0, 13)
    np.testing.assert_allclose(density_at(b, w, xs), density_at(b, w, -xs), rtol=1e-12)


def test_density_integrates_to_one(rng, basis8):
    w = WeightVector(rng.dirichlet(np.ones(8)))
    assert total_mass(basis8, w) == pytest.approx(1.0, abs=1e-4)


def test_cdf_at_spans_zero_to_one(basis8):
    w = initial_weights(basis8)
    assert cdf_at(basis8, w, basis8.support_lo) < 1e-4
    assert cdf_at(basis8, w, basis8.support_hi) > 1 - 1e-4


def test_sample_mixture_follows_weights(rng, basis8):
    w = WeightVector(np.eye(8)[5])
    x = sample_mixture(basis8, w, 20000, rng)
    assert x.mean() == pytest.approx(5.0, abs=0.02)
    assert x.std() == pytest.approx(0.5, rel=0.03)


def test_dimension_mismatch(basis8):
    with pytest.raises(DimensionError):
        density_at(basis8, WeightVector(np.array([0.5, 0.5])), 0.0)


def test_no_warnings_on_regular_fit(basis8):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit_weights(basis8, [0.5, 3.3, 6.1])
