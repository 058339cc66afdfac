import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from modules_script.m_attack_fcn import AttackHyperparams, evaluate_accuracy, member_probabilities, predict_membership
from modules_script.m_baseline_attack import (
    DEFAULT_BASELINE_HYPERPARAMS,
    baseline_input_size,
    baseline_network_spec,
    build_baseline_features,
    build_baseline_input,
    build_baseline_network,
    build_baseline_split,
    train_baseline_attack,
)
from modules_script.m_data_pipeline import AuxiliaryDataset, AuxiliarySplit
from modules_script.m_errors import CapabilityError, ConfigError, DataError
from modules_script.m_feature_extraction import FeatureMatrix
from modules_script.m_losses import loss_cross_entropy
from modules_script.m_network import mlp_spec
from modules_script.m_training import PREDICT_CHUNK_VALUES, rows_per_chunk

from conftest import make_trace


H = 1e-3


def random_mlp_spec(rng: np.random.Generator):
    hidden = [int(h) for h in rng.integers(1, 6, size=int(rng.integers(0, 3)))]
    return mlp_spec(int(rng.integers(1, 5)), hidden, int(rng.integers(2, 5)))


def labeled_split(rng, n=6, dim=4, classes=3, labels=True):
    members = np.arange(n) % 2 == 0
    return AuxiliarySplit(
        "attack_train", np.arange(n), rng.normal(size=(n, dim)),
        rng.integers(0, classes, size=n) if labels else None, members,
    )


class TestInputSize:
    @pytest.mark.parametrize("args,expected", [
        ((10, (5, 3), 2, 3), 41),
        ((0, (), 1, 4), 5),
        ((1542, (20, 10), 5, 10), 7875),
    ])
    def test_formula(self, args, expected):
        assert baseline_input_size(*args) == expected

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            baseline_input_size(10, (5,), 0, 3)
        with pytest.raises(ConfigError):
            baseline_input_size(-1, (5,), 1, 3)

    def test_constructed_length_matches_formula(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            spec = random_mlp_spec(rng)
            n_targets = int(rng.integers(1, 4))
            trace = make_trace(spec, range(1, n_targets + 1), seed=int(rng.integers(1000)))
            x = rng.normal(size=spec.input_shape)
            built = build_baseline_input(trace, x, int(rng.integers(0, spec.class_count)))
            expected = baseline_input_size(spec.trainable_count(), spec.layer_output_sizes(), n_targets, spec.class_count)
            assert built.values.size == expected

    def test_desk_mlp_ratio(self):
        spec = mlp_spec(50, [64], 20)
        n_targets = 5
        size = baseline_input_size(spec.trainable_count(), spec.layer_output_sizes(), n_targets, spec.class_count)
        assert spec.trainable_count() == 4564
        assert size == 23_685
        assert size / n_targets >= 100


class TestBaselineInput:
    def test_one_hot_block(self, small_mlp_spec, rng):
        built = build_baseline_input(make_trace(small_mlp_spec, [1, 2]), rng.normal(size=4), 2)
        assert_array_equal(built.one_hot, [0.0, 0.0, 1.0])

    def test_blocks(self, small_mlp_spec, rng):
        trace = make_trace(small_mlp_spec, [3, 6])
        x, y = rng.normal(size=4), 1
        built = build_baseline_input(trace, x, y)
        for k, snapshot in enumerate(trace.models()):
            _, loss, outputs = built.epoch_block(k)
            scores, tapped = snapshot.forward(x[None, :], taps=range(1, snapshot.spec.depth + 1))
            assert loss == pytest.approx(loss_cross_entropy(scores, [y]), rel=1e-6)
            expected = np.concatenate([tapped[i].reshape(-1) for i in range(1, snapshot.spec.depth + 1)])
            assert_allclose(outputs, expected, rtol=1e-6, atol=1e-7)

    def test_gradient_block_matches_finite_differences(self, small_mlp_spec, rng):
        trace = make_trace(small_mlp_spec, [1])
        x, y = rng.normal(size=4), 0
        gradients, _, _ = build_baseline_input(trace, x, y).epoch_block(0)

        work = trace.models()[0].copy().eval()
        numeric = []
        for _, _, tensor in work.named_parameters():
            flat = tensor.data.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + H
                f_plus = loss_cross_entropy(work.forward(x[None, :])[0], [y])
                flat[j] = original - H
                f_minus = loss_cross_entropy(work.forward(x[None, :])[0], [y])
                flat[j] = original
                numeric.append((f_plus - f_minus) / (2 * H))
        numeric = np.array(numeric)
        error = np.linalg.norm(gradients - numeric) / (np.linalg.norm(gradients) + np.linalg.norm(numeric))
        assert error < 1e-4

    def test_trace_is_not_mutated(self, small_mlp_spec, rng):
        trace = make_trace(small_mlp_spec, [1, 2])
        before = [m.flat_parameters().copy() for m in trace.models()]
        build_baseline_split(trace, labeled_split(rng))
        for model, values in zip(trace.models(), before):
            assert model.frozen
            assert_array_equal(model.flat_parameters(), values)

    def test_missing_label(self, small_mlp_spec, rng):
        with pytest.raises(CapabilityError):
            build_baseline_input(make_trace(small_mlp_spec, [1]), rng.normal(size=4), None)

    def test_label_out_of_range(self, small_mlp_spec, rng):
        with pytest.raises(DataError):
            build_baseline_input(make_trace(small_mlp_spec, [1]), rng.normal(size=4), 3)

    def test_split_rows(self, small_mlp_spec, rng):
        trace = make_trace(small_mlp_spec, [1, 2])
        split = labeled_split(rng)
        features = build_baseline_split(trace, split, class_count=3)
        assert features.kind == "baseline"
        assert features.rows.dtype == np.float32
        assert_array_equal(features.members, split.members)
        for row, x, y in zip(features.rows, split.inputs, split.labels):
            assert_array_equal(row, build_baseline_input(trace, x, int(y)).values)

    def test_label_free_auxiliary(self, small_mlp_spec, rng):
        split = labeled_split(rng, labels=False)
        auxiliary = AuxiliaryDataset(split, split, class_count=3, labels_available=False)
        with pytest.raises(CapabilityError):
            build_baseline_features(make_trace(small_mlp_spec, [1]), auxiliary)


class TestBaselineNetwork:
    def test_layout(self):
        spec = baseline_network_spec(20)
        assert [layer.kind for layer in spec.layers] == ["Conv1D", "BatchNorm1D", "ReLU"] * 2 + ["Flatten", "BatchNorm1D", "Dense"]
        assert spec.layer_shapes()[-1] == (1,)

    def test_two_blocks_only(self):
        with pytest.raises(ConfigError):
            baseline_network_spec(20, conv_channels=(4,), kernels=(3,))

    def test_default_hyperparameters(self):
        assert (DEFAULT_BASELINE_HYPERPARAMS.batch_size, DEFAULT_BASELINE_HYPERPARAMS.epochs) == (16, 30)

    def test_separable_fixture(self):
        width = 12

        def fixture(n):
            rows = np.concatenate([np.ones((n, width)), np.zeros((n, width))])
            members = np.repeat([True, False], n)
            return FeatureMatrix("baseline", np.arange(2 * n), members, rows, [1])

        hp = AttackHyperparams(batch_size=8, learning_rate=0.01, epochs=30, seed=0)
        model, history = train_baseline_attack(fixture(30), hp)
        assert history[-1] < history[0]
        assert evaluate_accuracy(model, fixture(20)).accuracy >= 0.99

    def test_single_class(self):
        features = FeatureMatrix("baseline", [0, 1], [True, True], np.ones((2, 4)), [1])
        with pytest.raises(DataError):
            train_baseline_attack(features, AttackHyperparams(epochs=1))

    def test_desk_width_scored_in_bounded_chunks(self):
        width = 23_685
        net = build_baseline_network(width).eval()
        chunk = rows_per_chunk(net.spec)
        assert chunk * 8 * 3 * width <= PREDICT_CHUNK_VALUES

        rows = np.random.default_rng(0).normal(size=(2 * chunk + 1, width))
        probabilities = member_probabilities(net, rows)
        assert probabilities.shape == (2 * chunk + 1,)
        assert probabilities[0] == pytest.approx(predict_membership(net, rows[0]))
        assert probabilities[-1] == pytest.approx(predict_membership(net, rows[-1]))
