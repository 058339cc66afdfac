import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from modules_script.m_data_pipeline import AuxiliaryDataset, AuxiliarySplit
from modules_script.m_errors import CapabilityError, DataError, StageDependencyError
from modules_script.m_layers import BatchNorm1D, Dense, ReLU, Softmax
from modules_script.m_network import NetworkSpec
from modules_script.m_feature_extraction import (
    FeatureMatrix,
    entropy_of_scores,
    entropy_trajectory,
    extract_features,
    extract_split,
    features_to_csv,
    load_features,
    max_score_trajectory,
    metadata_path,
    save_features,
    score_vectors,
    true_label_trajectory,
)

from conftest import constant_score_trace, make_trace


X = np.zeros(2)


def aux_split(name, inputs, labels, members, start=0):
    n = inputs.shape[0]
    return AuxiliarySplit(name, np.arange(start, start + n), inputs, labels, np.asarray(members, bool))


@pytest.fixture
def auxiliary(rng):
    inputs = rng.normal(size=(6, 4))
    labels = np.array([0, 1, 2, 0, 1, 2])
    members = [True, False, True, False, True, False]
    return AuxiliaryDataset(
        attack_train=aux_split("attack_train", inputs, labels, members),
        attack_test=aux_split("attack_test", inputs[:4], labels[:4], members[:4], start=10),
        class_count=3,
    )


class TestTrajectories:
    def test_one_hot_true_label(self):
        trace = constant_score_trace([0.0, 1.0, 0.0])
        assert_allclose(true_label_trajectory(trace, X, 1), [1.0, 1.0, 1.0])

    def test_uniform_true_label(self):
        trace = constant_score_trace(np.full(10, 0.1), epochs=(1, 2))
        assert_allclose(true_label_trajectory(trace, X, 7), [0.1, 0.1])

    def test_entropy_examples(self):
        assert_allclose(entropy_trajectory(constant_score_trace(np.full(4, 0.25)), X), np.log(4))
        assert_allclose(entropy_trajectory(constant_score_trace([0.5, 0.5, 0.0]), X), np.log(2))
        assert_allclose(entropy_trajectory(constant_score_trace([1.0, 0.0, 0.0]), X), 0.0, atol=1e-12)

    def test_max_score(self):
        assert_allclose(max_score_trajectory(constant_score_trace([0.2, 0.7, 0.1]), X), 0.7)

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            true_label_trajectory(constant_score_trace([0.5, 0.5]), X, 2)

    def test_length_is_number_of_epochs(self, small_mlp_spec, rng):
        trace = make_trace(small_mlp_spec, [3, 7, 11, 15])
        x = rng.normal(size=4)
        assert true_label_trajectory(trace, x, 0).shape == (4,)
        assert entropy_trajectory(trace, x).shape == (4,)

    def test_values_in_range(self, small_mlp_spec, rng):
        trace = make_trace(small_mlp_spec, [1, 2, 3])
        for x in rng.normal(0, 5, size=(10, 4)):
            assert np.all((0 <= true_label_trajectory(trace, x, 2)) & (true_label_trajectory(trace, x, 2) <= 1))
            assert np.all((0 <= entropy_trajectory(trace, x)) & (entropy_trajectory(trace, x) <= np.log(3) + 1e-12))
            assert np.all(max_score_trajectory(trace, x) >= 1 / 3 - 1e-12)

    def test_entropy_clipped(self):
        assert_array_equal(entropy_of_scores(np.array([[1.0, 0.0]])), [0.0])

    def test_score_vectors_shape(self, small_mlp_spec, rng):
        trace = make_trace(small_mlp_spec, [1, 2])
        assert score_vectors(trace, rng.normal(size=(5, 4))).shape == (2, 5, 3)


class TestExtractFeatures:
    def test_rows_match_per_sample_trajectories(self, small_mlp_spec, auxiliary):
        trace = make_trace(small_mlp_spec, [2, 4, 6])
        features = extract_features(trace, auxiliary, "true_label")
        split = auxiliary.attack_train
        assert features.epochs == [2, 4, 6]
        assert_array_equal(features.sample_ids, split.sample_ids)
        assert_array_equal(features.members, split.members)
        for row, x, y in zip(features.rows, split.inputs, split.labels):
            assert_allclose(row, true_label_trajectory(trace, x, int(y)))

    def test_attack_test_split(self, small_mlp_spec, auxiliary):
        features = extract_features(make_trace(small_mlp_spec, [1]), auxiliary, "max_score", split="attack_test")
        assert features.split == "attack_test"
        assert len(features) == 4
        assert int(features.members.sum()) == 2

    def test_label_free_adversary(self, small_mlp_spec, auxiliary):
        trace = make_trace(small_mlp_spec, [1, 2])
        unlabeled = AuxiliaryDataset(
            attack_train=aux_split("attack_train", auxiliary.attack_train.inputs, None, auxiliary.attack_train.members),
            attack_test=auxiliary.attack_test,
            class_count=3,
            labels_available=False,
        )
        with pytest.raises(CapabilityError):
            extract_features(trace, unlabeled, "true_label")
        with pytest.raises(CapabilityError):
            extract_features(trace, unlabeled, "baseline")
        assert extract_features(trace, unlabeled, "entropy").rows.shape == (6, 2)
        with pytest.raises(CapabilityError):
            extract_split(trace, unlabeled.attack_train, "true_label")

    def test_misaligned_rows(self):
        with pytest.raises(DataError):
            FeatureMatrix("entropy", [1, 2], [True, False], np.zeros((3, 2)), [1, 2])

    def test_row_width_must_match_epochs(self):
        with pytest.raises(DataError):
            FeatureMatrix("entropy", [1, 2], [True, False], np.zeros((2, 3)), [1, 2])


class TestFeatureFiles:
    def test_csv_layout(self):
        features = FeatureMatrix("true_label", [4, 9], [True, False], [[0.5, 0.25], [1.0, 0.0]], [1, 2])
        assert features_to_csv(features).splitlines() == ["sample_id,member,f_1,f_2", "4,1,0.5,0.25", "9,0,1,0"]

    def test_saved_and_loaded(self, small_mlp_spec, auxiliary, tmp_path):
        features = extract_features(make_trace(small_mlp_spec, [1, 5]), auxiliary, "entropy")
        path = str(tmp_path / "features_entropy.csv")
        save_features(features, path)
        loaded = load_features(path)

        assert loaded.kind == "entropy" and loaded.epochs == [1, 5] and loaded.class_count == 3
        assert_array_equal(loaded.sample_ids, features.sample_ids)
        assert_array_equal(loaded.members, features.members)
        assert_array_equal(loaded.rows, features.rows)

    def test_baseline_rows_are_float32(self, tmp_path):
        rows = np.random.default_rng(0).normal(size=(3, 5))
        features = FeatureMatrix("baseline", [0, 1, 2], [True, False, True], rows, [1])
        path = str(tmp_path / "features_baseline.csv")
        save_features(features, path)
        loaded = load_features(path)
        assert loaded.rows.dtype == np.float32
        assert_array_equal(loaded.rows, rows.astype(np.float32))

    def test_missing_file_names_stage(self, tmp_path):
        with pytest.raises(StageDependencyError) as excinfo:
            load_features(str(tmp_path / "features_true_label.csv"))
        assert "extract-features" in str(excinfo.value)

    def test_metadata_mismatch(self, tmp_path):
        features = FeatureMatrix("max_score", [0, 1], [True, False], [[0.5], [0.75]], [3])
        path = str(tmp_path / "features_max_score.csv")
        save_features(features, path)
        with open(path, "a") as f:
            f.write("2,1,0.5\n")
        with pytest.raises(DataError):
            load_features(path)

    def test_metadata_path(self):
        assert metadata_path("out/features_entropy.csv") == "out/features_entropy.meta.json"


class TestExtractionInvariants:
    @pytest.fixture
    def bn_trace(self):
        spec = NetworkSpec([Dense(4, 5), BatchNorm1D(5), ReLU(), Dense(5, 3), Softmax()], (4,))
        return make_trace(spec, [1, 2, 3])

    @pytest.mark.parametrize("kind", ["true_label", "entropy", "max_score"])
    def test_trace_is_not_mutated(self, bn_trace, auxiliary, kind):
        before = [(m.mode, m.flat_parameters().tobytes()) for m in bn_trace.models()]
        extract_features(bn_trace, auxiliary, kind)
        extract_features(bn_trace, auxiliary, kind, split="attack_test")
        assert [(m.mode, m.flat_parameters().tobytes()) for m in bn_trace.models()] == before
        assert all(m.frozen for m in bn_trace.models())

    @pytest.mark.parametrize("kind", ["true_label", "entropy", "max_score"])
    def test_rows_independent_of_sample_order(self, bn_trace, auxiliary, kind):
        split = auxiliary.attack_train
        order = np.random.default_rng(9).permutation(len(split.sample_ids))
        shuffled = AuxiliarySplit(split.name, split.sample_ids[order], split.inputs[order], split.labels[order], split.members[order])

        plain = extract_split(bn_trace, split, kind)
        permuted = extract_split(bn_trace, shuffled, kind)
        by_id = {int(i): row for i, row in zip(permuted.sample_ids, permuted.rows)}
        for sample_id, row in zip(plain.sample_ids, plain.rows):
            assert_allclose(by_id[int(sample_id)], row, rtol=1e-12, atol=1e-15)
        assert_array_equal(permuted.members, split.members[order])
