import math

import numpy as np
import pytest

from mixgrad.errors import ConfigError, DimensionError, InvariantError
from mixgrad.experiments import (
    DefectReport,
    FeatureVsClassConfig,
    NgmgVsBceConfig,
    defect_rate,
    make_threshold_dataset,
    nearest_distances,
    reference_tau,
    run_feature_vs_class,
    run_feature_vs_class_trial,
    run_ngmg_vs_bce,
    run_ngmg_vs_bce_trial,
    sign_test,
    summarize,
)

TINY_FVC = dict(n_seeds=1, n_train=120, n_held_out=40, n_reference=400, n_generated=40, iterations=20,
                batch_size=16, t_max=10, hidden=(8, 4, 8), code_len=2)


@pytest.fixture
def support(rng):
    return rng.uniform(-1, 1, size=(500, 2))


# ---------- defect rate ----------
def test_points_inside_support_are_not_defects(support):
    report = defect_rate(support[:100], support, tau=0.01)
    assert report.n_defects == 0 and report.defect_rate == 0.0
    assert report.n_samples == 100


def test_far_points_are_defects(support):
    tau = 0.05
    far = support[:50] + 10 * tau + 2.0
    assert defect_rate(far, support, tau).defect_rate == 1.0


def test_half_displaced(support):
    tau = 0.05
    generated = np.vstack([support[:50], support[:50] + 10 * tau * 10])
    report = defect_rate(generated, support, tau)
    assert report.defect_rate == 0.5
    assert report.n_defects == 50


def test_defect_rate_monotone_in_tau(support, rng):
    generated = rng.uniform(-1.5, 1.5, size=(300, 2))
    rates = [defect_rate(generated, support, tau).defect_rate for tau in (0.01, 0.05, 0.1, 0.2, 0.5)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_per_condition_breakdown(support):
    generated = np.vstack([support[:4], support[:4] + 100.0])
    labels = ["a", "b", "a", "b", "a", "b", "a", "b"]
    report = defect_rate(generated, support, 0.1, conditions=labels)
    assert set(report.per_condition) == {"a", "b"}
    assert report.per_condition["a"].n_samples == 4
    assert report.per_condition["a"].defect_rate == 0.5
    with pytest.raises(DimensionError):
        defect_rate(generated, support, 0.1, conditions=["a"])


def test_defect_rate_rejects(support):
    with pytest.raises(InvariantError):
        defect_rate(support, support, 0.0)
    with pytest.raises(InvariantError):
        defect_rate(np.empty((0, 2)), support, 0.1)
    with pytest.raises(DimensionError):
        nearest_distances(np.zeros((3, 3)), support)
    with pytest.raises(InvariantError):
        DefectReport(n_samples=4, n_defects=1, defect_rate=0.5, tau=1.0)


def test_reference_tau(support, rng):
    held_out = rng.uniform(-1, 1, size=(200, 2))
    tau = reference_tau(support, held_out, 0.95)
    d = nearest_distances(held_out, support)
    assert tau == pytest.approx(np.quantile(d, 0.95))
    assert np.mean(d <= tau) >= 0.95
    with pytest.raises(InvariantError):
        reference_tau(support, support)
    with pytest.raises(InvariantError):
        reference_tau(support, held_out, 0.0)


# ---------- statistics ----------
def test_summarize():
    s = summarize([1.0, 2.0, 3.0])
    assert s.mean == 2.0 and s.n == 3
    assert s.stderr == pytest.approx(1.0 / math.sqrt(3))
    assert summarize([4.0]).stderr == 0.0
    with pytest.raises(InvariantError):
        summarize([])


def test_sign_test():
    assert sign_test(5, 5) == pytest.approx(1 / 32)
    assert sign_test(0, 5) == pytest.approx(1.0)
    assert sign_test(0, 0) == 1.0


# ---------- ngmg vs bce ----------
def test_threshold_dataset():
    x, y = make_threshold_dataset(500, 4, seed=2)
    assert x.shape == (500, 1) and y.shape == (500, 4)
    # attributes switch on in order as x grows
    assert np.all(np.diff(y, axis=1) <= 0)
    np.testing.assert_array_equal(y.sum(axis=1), np.floor(x[:, 0] * 5))
    with pytest.raises(InvariantError):
        make_threshold_dataset(10, 1)


def test_untrained_arms_have_equal_error():
    config = NgmgVsBceConfig(n_trials=3, iterations=0, n_samples=100)
    result = run_ngmg_vs_bce(config)
    for a, b in zip(result.trials["bce"], result.trials["ngmg_two_sided"]):
        assert a.test_mse == b.test_mse
        assert a.seed == b.seed
    assert result.wins == (0, 0)
    assert result.p_value == 1.0


def test_trial_summaries():
    config = NgmgVsBceConfig(n_trials=1, iterations=40, n_samples=100, hidden=(8,))
    bce_arm, ngmg_arm = run_ngmg_vs_bce_trial(config, 0)
    assert (bce_arm.loss_name, ngmg_arm.loss_name) == ("bce", "ngmg_two_sided")
    assert len(bce_arm.losses) == 40 and bce_arm.final_loss == bce_arm.losses[-1]
    assert bce_arm.test_mse >= 0 and bce_arm.test_batch_sse >= 0
    assert "losses" not in bce_arm.row()


def test_ngmg_vs_bce_reproducible():
    config = NgmgVsBceConfig(n_trials=2, iterations=30, n_samples=120, hidden=(8, 8), seed=7)
    a, b = run_ngmg_vs_bce(config), run_ngmg_vs_bce(config)
    assert a.trial_rows() == b.trial_rows()
    rows = a.summary_rows()
    assert [r["loss_name"] for r in rows] == ["bce", "ngmg_two_sided"]
    assert rows[0]["n_trials"] == 2
    assert a.mean_curve("bce").shape == (30,)


def test_ngmg_vs_bce_parallel_matches_serial():
    config = NgmgVsBceConfig(n_trials=2, iterations=20, n_samples=80, hidden=(4,))
    assert run_ngmg_vs_bce(config, workers=2).trial_rows() == run_ngmg_vs_bce(config).trial_rows()


def test_ngmg_vs_bce_config_rejects():
    with pytest.raises(ConfigError):
        NgmgVsBceConfig(n_trials=0)
    with pytest.raises(ConfigError):
        NgmgVsBceConfig(test_fraction=1.0)
    with pytest.raises(ConfigError):
        NgmgVsBceConfig(arms=("bce", "bce"))


# ---------- feature vs class ----------
def test_identical_labelings_give_identical_reports():
    config = FeatureVsClassConfig(class_labeling="features", **TINY_FVC)
    trial = run_feature_vs_class_trial(config, 0)
    assert trial.feature == trial.klass
    assert trial.tau > 0


def test_feature_vs_class_small_run():
    config = FeatureVsClassConfig(**{**TINY_FVC, "n_seeds": 2})
    result = run_feature_vs_class(config)
    assert [t.trial for t in result.trials] == [0, 1]
    assert [t.seed for t in result.trials] == [0, 1]
    for t in result.trials:
        assert t.feature.n_samples == t.klass.n_samples == 40
        assert 0 <= t.feature.defect_rate <= 1 and 0 <= t.klass.defect_rate <= 1
    rows = result.summary_rows()
    assert [r["arm"] for r in rows] == ["feature", "class"]
    assert len(result.trial_rows()) == 2
    assert run_feature_vs_class(config).trial_rows() == result.trial_rows()


def test_feature_vs_class_config_rejects():
    with pytest.raises(ConfigError):
        FeatureVsClassConfig(n_seeds=0)
    with pytest.raises(ConfigError):
        FeatureVsClassConfig(class_labeling="pixels")


# ---------- full protocols ----------
@pytest.mark.slow
def test_ngmg_vs_bce_full_protocol():
    result = run_ngmg_vs_bce(NgmgVsBceConfig())
    for arm in ("bce", "ngmg_two_sided"):
        assert len(result.trials[arm]) == 20
        assert all(len(t.losses) == 1500 for t in result.trials[arm])
        assert all(math.isfinite(t.test_mse) for t in result.trials[arm])
        curve = result.mean_curve(arm)
        assert np.mean(curve[-100:]) < np.mean(curve[:100])
    assert result.summary("ngmg_two_sided").mean < result.summary("bce").mean
    assert result.p_value < 0.05


@pytest.mark.slow
def test_feature_vs_class_full_protocol():
    result = run_feature_vs_class(FeatureVsClassConfig())
    assert len(result.trials) == 5
    # at least 80% of every trained feature-conditioned model's samples land within tau
    assert all(t.feature.defect_rate <= 0.2 for t in result.trials)
    assert result.feature_summary.mean <= result.class_summary.mean


@pytest.mark.slow
def test_trained_denoisers_generate_inside_support():
    base = dict(n_seeds=2, n_train=1000, n_reference=5000, n_generated=300, iterations=3000)
    trained = run_feature_vs_class(FeatureVsClassConfig(**base))
    untrained = run_feature_vs_class(FeatureVsClassConfig(**{**base, "iterations": 0}))
    assert trained.feature_summary.mean < untrained.feature_summary.mean
    assert trained.class_summary.mean < untrained.class_summary.mean
