import numpy as np
import pytest
from numpy.testing import assert_array_equal

from modules_script.m_attack_fcn import (
    AttackFCNSpec,
    AttackHyperparams,
    as_series,
    build_attack_fcn,
    check_both_classes,
    evaluate_accuracy,
    member_probabilities,
    predict_membership,
    score_decisions,
    train_attack,
)
from modules_script.m_errors import ConfigError, DataError, ShapeError
from modules_script.m_feature_extraction import FeatureMatrix


SMALL_CHANNELS = (8, 8, 8)
FAST = AttackHyperparams(batch_size=20, learning_rate=0.01, epochs=40, seed=3)


def separable_features(rng, n_per_side=50, width=5, split="attack_train") -> FeatureMatrix:
    members = rng.uniform(0.8, 1.0, size=(n_per_side, width))
    nonmembers = rng.uniform(0.0, 0.2, size=(n_per_side, width))
    rows = np.concatenate([members, nonmembers])
    labels = np.repeat([True, False], n_per_side)
    return FeatureMatrix("true_label", np.arange(2 * n_per_side), labels, rows, list(range(1, width + 1)), split)


class TestAttackFCNSpec:
    def test_default_stored_values(self):
        net = build_attack_fcn(5)
        assert net.param_count() == 265_986
        assert net.spec.trainable_count() == 265_986 - 2 * (128 + 256 + 128)

    @pytest.mark.parametrize("input_len", [5, 10, 30])
    def test_size_independent_of_input_length(self, input_len):
        assert build_attack_fcn(input_len).param_count() == 265_986

    def test_layout(self):
        kinds = [layer.kind for layer in AttackFCNSpec(7).to_network_spec().layers]
        assert kinds == ["Conv1D", "BatchNorm1D", "ReLU"] * 3 + ["GlobalAvgPool1D", "Dense", "Softmax"]

    def test_single_epoch_trajectory(self):
        net = build_attack_fcn(1, channels=SMALL_CHANNELS)
        assert member_probabilities(net.eval(), np.array([[0.3]])).shape == (1,)

    def test_exactly_three_blocks(self):
        with pytest.raises(ConfigError):
            AttackFCNSpec(5, channels=(8, 8), kernels=(3, 3))

    def test_invalid_length(self):
        with pytest.raises(ConfigError):
            AttackFCNSpec(0)

    def test_hyperparams(self):
        with pytest.raises(ConfigError):
            AttackHyperparams(batch_size=0)
        with pytest.raises(ConfigError):
            AttackHyperparams(optimizer="lbfgs")


class TestTrainAttack:
    def test_separable_fixture(self, rng):
        model, history = train_attack(separable_features(rng), FAST, channels=SMALL_CHANNELS)
        assert len(history) == FAST.epochs
        assert model.frozen
        assert evaluate_accuracy(model, separable_features(rng, split="attack_test")).accuracy >= 0.99

    def test_deterministic(self, rng):
        features = separable_features(rng, n_per_side=20)
        hp = AttackHyperparams(batch_size=10, learning_rate=0.01, epochs=3, seed=1)
        a, _ = train_attack(features, hp, channels=SMALL_CHANNELS)
        b, _ = train_attack(features, hp, channels=SMALL_CHANNELS)
        assert_array_equal(a.flat_parameters(), b.flat_parameters())

    def test_single_class(self, rng):
        features = separable_features(rng)
        features.members[:] = True
        with pytest.raises(DataError):
            train_attack(features, FAST, channels=SMALL_CHANNELS)

    def test_empty_set(self):
        with pytest.raises(DataError):
            check_both_classes(np.zeros(0, dtype=bool))

    def test_permutation_invariance(self, rng):
        model, _ = train_attack(separable_features(rng, n_per_side=20), AttackHyperparams(batch_size=10, epochs=2, seed=0), channels=SMALL_CHANNELS)
        test = separable_features(np.random.default_rng(5), n_per_side=15)
        order = np.random.default_rng(6).permutation(len(test))
        shuffled = FeatureMatrix(test.kind, test.sample_ids[order], test.members[order], test.rows[order], test.epochs)
        assert evaluate_accuracy(model, test) == evaluate_accuracy(model, shuffled)


class TestEvaluation:
    def test_constant_predictor(self):
        members = np.repeat([True, False], 50)
        assert score_decisions(np.ones(100, bool), members).accuracy == 0.5
        assert score_decisions(np.zeros(100, bool), members).accuracy == 0.5

    def test_random_predictor(self):
        rng = np.random.default_rng(11)
        members = np.repeat([True, False], 5000)
        assert abs(score_decisions(rng.random(10_000) < 0.5, members).accuracy - 0.5) <= 0.02

    def test_confusion_counts(self):
        result = score_decisions([True, True, False, False, True], [True, False, False, True, True])
        assert (result.true_positive, result.false_positive, result.true_negative, result.false_negative) == (2, 1, 1, 1)
        assert result.accuracy == pytest.approx(0.6)
        assert result.to_dict()["confusion"]["true_positive"] == 2

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            score_decisions([True], [True, False])

    def test_empty_test_set(self):
        with pytest.raises(DataError):
            score_decisions([], [])

    def test_member_probability_range(self, rng):
        net = build_attack_fcn(4, channels=SMALL_CHANNELS).eval()
        probabilities = member_probabilities(net, rng.normal(size=(6, 4)))
        assert np.all((probabilities >= 0) & (probabilities <= 1))
        row = rng.normal(size=4)
        assert predict_membership(net, row) == pytest.approx(member_probabilities(net, row[None, :])[0])

    def test_row_length_mismatch(self, rng):
        net = build_attack_fcn(4, channels=SMALL_CHANNELS).eval()
        with pytest.raises(ShapeError):
            member_probabilities(net, rng.normal(size=(2, 5)))
        with pytest.raises(ShapeError):
            predict_membership(net, rng.normal(size=(2, 4)))

    def test_as_series(self):
        assert as_series(np.zeros((3, 5))).shape == (3, 1, 5)
        assert as_series(np.zeros(5)).shape == (1, 1, 5)
