import os

import pytest

import main
from helper_script.json_helper import read_json
from modules_script.m_errors import EXIT_CONFIG_ERROR, EXIT_DATA_ERROR, EXIT_OK


def cli(config_path, out, *command):
    return main.run([*command, "-c", config_path, "--out", str(out), "-q"])


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


class TestRun:
    def test_run_writes_every_output(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path, "run") == EXIT_OK
        for name in (
            "trace.fltr", "trace_full.fltr", "fl_accuracy.csv", "auxiliary_split.json",
            "features_true_label_attack_train.csv", "features_baseline_attack_test.csv",
            "features_entropy_attack_test.meta.json",
            "attack_max_score.fltr", "attack_baseline_loss.json", "report.json",
        ):
            assert os.path.exists(tmp_path / name), name
        assert cli(small_config_file, tmp_path, "report") == EXIT_OK

    def test_deterministic_for_fixed_seed(self, small_config_file, tmp_path):
        first, second = tmp_path / "first", tmp_path / "second"
        for out in (first, second):
            assert cli(small_config_file, out, "run", "-k", "true_label", "baseline") == EXIT_OK
        for name in ("features_true_label_attack_test.csv", "features_baseline_attack_train.csv", "trace.fltr", "attack_true_label.fltr"):
            assert read_bytes(first / name) == read_bytes(second / name), name

        reports = [read_json(str(out / "report.json")) for out in (first, second)]
        for report in reports:
            del report["run_info"]
        assert reports[0] == reports[1]

    def test_seed_changes_trace(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path / "a", "fl-train") == EXIT_OK
        assert main.run(["fl-train", "-c", small_config_file, "--out", str(tmp_path / "b"), "--seed", "3", "-q"]) == EXIT_OK
        assert read_bytes(tmp_path / "a" / "trace.fltr") != read_bytes(tmp_path / "b" / "trace.fltr")


class TestExitCodes:
    def test_invalid_weights(self, small_config_dict, write_config, tmp_path):
        small_config_dict["fl"]["weights"] = [0.5, 0.6]
        assert cli(write_config(small_config_dict), tmp_path, "fl-train") == EXIT_CONFIG_ERROR

    def test_missing_config(self, tmp_path):
        assert cli(str(tmp_path / "absent.json"), tmp_path, "fl-train") == EXIT_CONFIG_ERROR

    def test_stage_out_of_order(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path, "extract-features") == EXIT_DATA_ERROR
        assert not os.path.exists(tmp_path / "features_entropy_attack_train.csv")

    def test_report_before_eval(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path, "report") == EXIT_DATA_ERROR

    def test_plot_before_sliding_window(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path, "fl-train") == EXIT_OK
        assert cli(small_config_file, tmp_path, "plot") == EXIT_DATA_ERROR

    def test_single_sweep_set(self, small_config_dict, write_config, tmp_path):
        small_config_dict["report"]["sweep_epoch_sets"] = [[1, 2]]
        path = write_config(small_config_dict)
        assert cli(path, tmp_path, "fl-train") == EXIT_OK
        assert cli(path, tmp_path, "report", "--sweep", "observed-epochs") == EXIT_CONFIG_ERROR

    def test_unknown_kind_rejected_by_parser(self, small_config_file, tmp_path):
        with pytest.raises(SystemExit):
            cli(small_config_file, tmp_path, "extract-features", "-k", "loss")


class TestLabelFreeAdversary:
    def test_label_attacks_refused(self, small_config_dict, write_config, tmp_path):
        small_config_dict["auxiliary"]["labels_available"] = False
        path = write_config(small_config_dict)
        assert cli(path, tmp_path, "run") == EXIT_DATA_ERROR
        assert cli(path, tmp_path, "extract-features", "-k", "entropy", "max_score") == EXIT_OK
        assert cli(path, tmp_path, "attack-train", "-k", "entropy") == EXIT_OK
        assert cli(path, tmp_path, "attack-eval", "-k", "entropy") == EXIT_OK
        assert set(read_json(str(tmp_path / "report.json"))["attacks"]) == {"entropy"}


class TestReportAndPlot:
    def test_sweep_sliding_and_plots(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path, "fl-train") == EXIT_OK
        assert cli(small_config_file, tmp_path, "extract-features", "-k", "true_label") == EXIT_OK
        assert cli(small_config_file, tmp_path, "report", "--sweep", "observed-epochs", "--with-baseline") == EXIT_OK
        assert cli(small_config_file, tmp_path, "report", "--sliding-window") == EXIT_OK
        assert cli(small_config_file, tmp_path, "plot") == EXIT_OK
        for name in ("sweep_observed_epochs.csv", "sliding_accuracy.csv", "accuracy_over_time.svg", "member_gap.svg"):
            assert os.path.exists(tmp_path / name), name

    def test_explicit_window(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path, "fl-train") == EXIT_OK
        assert cli(small_config_file, tmp_path, "report", "--sliding-window", "3") == EXIT_OK
        with open(tmp_path / "sliding_accuracy.csv") as f:
            lines = f.read().splitlines()
        rows = [line.split(",") for line in lines[1:]]
        assert [(end, window) for end, window, _ in rows] == [("3", "3"), ("5", "3")]

    def test_window_longer_than_training(self, small_config_file, tmp_path):
        assert cli(small_config_file, tmp_path, "fl-train") == EXIT_OK
        assert cli(small_config_file, tmp_path, "report", "--sliding-window", "7") == EXIT_CONFIG_ERROR
