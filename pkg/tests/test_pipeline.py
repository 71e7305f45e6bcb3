"""End-to-end adaptation runs and the evaluation helpers."""

import numpy as np
import pytest

from subot.datamodel import LabeledDataset, default_toy_config, generate_toy
from subot.errors import EmptyTrainingSet, LengthMismatch
from subot.ot import OtParams
from subot.pipeline import (
    AdaptationConfig,
    confusion_matrix,
    evaluate_accuracy,
    nn_baseline,
    nn_classify,
    otda_baseline,
    sot_adapt,
)

FAST = AdaptationConfig(k_t=6, k_range=(1, 3), restarts=2, rng_seed=0)


@pytest.fixture(scope="module")
def toy_pair():
    return generate_toy(default_toy_config(0))


class TestNnClassify:
    def test_exact_training_point(self):
        train = np.array([[0.0, 0.0], [5.0, 5.0]])
        labels = np.array([3, 7])
        assert nn_classify(train, labels, np.array([[5.0, 5.0]]))[0] == 7

    def test_single_training_point(self):
        out = nn_classify(np.array([[1.0]]), np.array([4]), np.array([[0.0], [9.0]]))
        assert out.tolist() == [4, 4]

    def test_tie_breaks_to_lowest_index(self):
        train = np.array([[0.0], [2.0]])
        labels = np.array([0, 1])
        assert nn_classify(train, labels, np.array([[1.0]]))[0] == 0

    def test_empty_training_set(self):
        with pytest.raises(EmptyTrainingSet):
            nn_classify(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros((1, 2)))


class TestEvaluation:
    def test_all_correct(self):
        assert evaluate_accuracy(np.array([1, 0, 2]), np.array([1, 0, 2])) == 1.0

    def test_three_quarters(self):
        assert evaluate_accuracy(
            np.array([0, 1, 1, 0]), np.array([0, 1, 0, 0])
        ) == pytest.approx(0.75)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            evaluate_accuracy(np.array([0, 1]), np.array([0]))

    def test_confusion_rows_sum_to_truth_counts(self):
        truth = np.array([0, 0, 1, 2, 2, 2])
        pred = np.array([0, 1, 1, 2, 0, 2])
        conf = confusion_matrix(pred, truth, 3)
        np.testing.assert_array_equal(conf.sum(axis=1), [2, 1, 3])
        assert conf[2, 0] == 1 and conf[2, 2] == 2


class TestSotAdapt:
    def test_identical_domains_perfect_accuracy(self, toy_pair):
        source, _ = toy_pair
        target = LabeledDataset(source.features, source.labels, source.class_count)
        result = sot_adapt(source, target, FAST)
        assert result.accuracy == 1.0

    def test_beats_sample_level_baseline_on_toy(self, toy_pair):
        source, target = toy_pair
        result = sot_adapt(source, target, FAST)
        baseline = otda_baseline(source, target, FAST.ot)
        assert result.accuracy >= 0.95
        assert result.accuracy > baseline.accuracy

    def test_stage_consistency(self, toy_pair):
        source, target = toy_pair
        result = sot_adapt(source, target, FAST)
        k_s, k_t = result.coupling.plan.shape
        assert k_t == FAST.k_t
        assert result.source_weights.shape == (k_s,)
        # the weighting output is exactly the row marginal of the coupling
        np.testing.assert_allclose(
            result.coupling.plan.sum(axis=1), result.source_weights, atol=1e-7
        )
        assert result.substructure_labels.shape == (k_t,)
        assert result.mapped_sources.shape[0] == k_s

    def test_predictions_in_class_range(self, toy_pair):
        source, target = toy_pair
        result = sot_adapt(source, target, FAST)
        assert set(np.unique(result.predicted_labels)) <= set(range(source.class_count))

    def test_label_propagation_pure_function_of_assignment(self, toy_pair):
        source, target = toy_pair
        result = sot_adapt(source, target, FAST)
        np.testing.assert_array_equal(
            result.predicted_labels,
            result.substructure_labels[result.target_assignments],
        )

    def test_deterministic_per_seed(self, toy_pair):
        source, target = toy_pair
        a = sot_adapt(source, target, FAST)
        b = sot_adapt(source, target, FAST)
        np.testing.assert_array_equal(a.predicted_labels, b.predicted_labels)
        np.testing.assert_array_equal(a.coupling.plan, b.coupling.plan)
        np.testing.assert_array_equal(a.source_weights, b.source_weights)

    def test_timings_cover_stages(self, toy_pair):
        source, target = toy_pair
        result = sot_adapt(source, target, FAST)
        assert {"source_gmm", "target_gmm", "cost", "weighting", "coupling"} <= set(
            result.timings
        )

    def test_k_t_below_class_count_rejected(self, toy_pair):
        source, target = toy_pair
        with pytest.raises(ValueError, match="class count"):
            sot_adapt(source, target, AdaptationConfig(k_t=1))

    def test_variant_gaussian_runs(self, toy_pair):
        source, target = toy_pair
        cfg = AdaptationConfig(
            variant="sot_g", k_t=6, k_range=(1, 3), restarts=2, rng_seed=0
        )
        result = sot_adapt(source, target, cfg)
        assert result.accuracy >= 0.9

    def test_scale_invariance_with_coscaled_params(self, toy_pair):
        # joint scaling of features by s with (lambda1, lambda, eta) times s^2
        # leaves the center-variant predictions unchanged (normalization off;
        # data variances far above the covariance floor)
        source, target = toy_pair
        s = 2.0
        base_cfg = AdaptationConfig(
            k_t=6, k_range=(1, 3), restarts=2, rng_seed=0, normalize=False
        )
        scaled_cfg = AdaptationConfig(
            k_t=6,
            k_range=(1, 3),
            restarts=2,
            rng_seed=0,
            normalize=False,
            ot=OtParams(lambda1=s**2, lambda_=s**2, eta=0.5 * s**2),
        )
        src_scaled = LabeledDataset(source.features * s, source.labels, source.class_count)
        tgt_scaled = LabeledDataset(target.features * s, target.labels, target.class_count)
        a = sot_adapt(source, target, base_cfg)
        b = sot_adapt(src_scaled, tgt_scaled, scaled_cfg)
        assert np.mean(a.predicted_labels == b.predicted_labels) >= 0.99


class TestOtdaBaseline:
    def test_identical_domains_perfect_accuracy(self):
        rng = np.random.default_rng(0)
        feats = np.vstack([rng.normal(0, 1, (30, 2)), rng.normal(6, 1, (30, 2))])
        labels = np.repeat([0, 1], 30)
        ds = LabeledDataset(feats, labels, 2)
        result = otda_baseline(ds, ds, OtParams())
        assert result.accuracy == 1.0

    def test_extreme_lambda_sweep(self, toy_pair):
        # large lambda: the plan tends to the independent coupling and every
        # mapped source collapses toward the target mean; small lambda: the
        # near-unregularized plan overfits sample noise and accuracy drops
        source, target = toy_pair
        tight = otda_baseline(source, target, OtParams(lambda_=0.3, eta=0.0))
        moderate = otda_baseline(source, target, OtParams(lambda_=10.0, eta=0.0))
        flat = otda_baseline(source, target, OtParams(lambda_=1e4, eta=0.0))

        def spread(result):
            centered = result.mapped_sources - result.mapped_sources.mean(axis=0)
            return float(np.linalg.norm(centered, axis=1).max())

        assert spread(flat) < 1e-3 < spread(moderate) < spread(tight)
        assert tight.accuracy < moderate.accuracy

    def test_substructure_labels_are_sample_predictions(self, toy_pair):
        source, target = toy_pair
        result = otda_baseline(source, target, OtParams())
        np.testing.assert_array_equal(result.substructure_labels, result.predicted_labels)


class TestNnBaseline:
    def test_identical_domains(self):
        rng = np.random.default_rng(1)
        ds = LabeledDataset(rng.normal(size=(20, 2)), np.tile([0, 1], 10), 2)
        predicted, accuracy, _ = nn_baseline(ds, ds)
        assert accuracy == 1.0
        assert predicted.shape == (20,)
