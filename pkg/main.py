import sys
import os
import argparse
import contextlib
import traceback

from typing import Any, Dict, List, Optional, Sequence
from prettytable import PrettyTable

from setting import DEFAULT_CONFIG_FILE, check_and_get_config

from helper_script.func_timer import MultipleTimer, SingleTimer, format_runtime
from helper_script.progress_helper import set_progress_enabled

from modules_script import m_experiment
from modules_script.m_errors import EXIT_OK, EXIT_UNEXPECTED, ConfigError, DataError, NumericError, exit_code_for
from modules_script.m_experiment import ATTACK_KINDS, ExperimentConfig


COMMANDS = ("fl-train", "extract-features", "attack-train", "attack-eval", "report", "plot", "run")


# MARK: Util functions
def get_command_line_arg(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments using argparse
    """
    parser = argparse.ArgumentParser(description="Federated learning simulator and passive membership inference attack workbench")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c", "--config",
        default=str(DEFAULT_CONFIG_FILE),
        help="Path to the experiment config (default: config.json)"
    )
    common.add_argument(
        "--seed",
        type=int,
        help="Master seed, replaces the config's seed"
    )
    common.add_argument(
        "--out",
        help="Output directory, replaces FLMIA_OUTPUT_DIR and path.output_dir"
    )
    common.add_argument(
        "-q", "--quiet",
        action="store_true",
        help="Suppress output"
    )

    kinds = argparse.ArgumentParser(add_help=False)
    kinds.add_argument(
        "-k", "--kind",
        nargs="+",
        choices=ATTACK_KINDS,
        help="Attack kinds to process (default: attack.kinds of the config)"
    )

    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("fl-train", parents=[common], help="Run FedAvg and record the target client's models")
    subparsers.add_parser("extract-features", parents=[common, kinds], help="Build attack inputs from the recorded models")
    subparsers.add_parser("attack-train", parents=[common, kinds], help="Train the attack models")
    subparsers.add_parser("attack-eval", parents=[common, kinds], help="Evaluate the attack models and write report.json")
    subparsers.add_parser("run", parents=[common, kinds], help="fl-train, extract-features, attack-train and attack-eval in sequence")

    report = subparsers.add_parser("report", parents=[common], help="Print report.json or run a sweep")
    report.add_argument(
        "--sweep",
        choices=["observed-epochs"],
        help="Retrain the attack for each of report.sweep_epoch_sets"
    )
    report.add_argument(
        "--with-baseline",
        action="store_true",
        help="Also run the baseline attack in the observed-epoch sweep"
    )
    report.add_argument(
        "--sliding-window",
        nargs="?",
        type=int,
        const=0,
        metavar="W",
        help="Attack accuracy over windows of W epochs (default: report.sliding_window)"
    )

    subparsers.add_parser("plot", parents=[common], help="Write SVG plots from the report stage outputs")

    return parser.parse_args(argv)


def print_settings(cfg: ExperimentConfig, config_path: str) -> None:
    print(f"=== Settings === (Config in {config_path})\n")

    print(f"OUTPUT_DIR\t\t: {cfg.output_dir}")
    print(f"SEED\t\t\t: {cfg.seed}")
    print(f"DATASET\t\t\t: {cfg.dataset.source}")
    print()

    print(f"CLIENTS\t\t\t: {cfg.fl.n_clients} (target {cfg.fl.target_client})")
    print(f"ROUNDS\t\t\t: {cfg.fl.rounds}")
    print(f"OPTIMIZER\t\t: {cfg.fl.optimizer}, batch {cfg.fl.batch_size}, schedule {list(cfg.fl.lr_schedule)}")
    print(f"OBSERVED_EPOCHS\t\t: {list(cfg.fl.observed_epochs)}")
    print()

    print(f"ATTACK_KINDS\t\t: {', '.join(cfg.attack.kinds)}")
    print(f"LABELS_AVAILABLE\t: {cfg.labels_available}")
    print(f"ALL_CLIENTS\t\t: {cfg.attack.all_clients}")
    print()


def print_timer(timer: SingleTimer, newline: bool = True) -> None:
    print(f"  ({format_runtime(timer.get_time_and_restart())})")
    if newline:
        print()


# MARK: Summary tables
def print_fl_summary(result) -> None:
    observed = set(result.trace.epochs)
    summary_table = PrettyTable(["Round", "Train acc", "Test acc", "Train loss", "Observed"])
    summary_table.align = "l"
    for record in result.accuracy_log:
        if record.round in observed or record.round == result.accuracy_log[-1].round:
            summary_table.add_row([
                record.round,
                f"{record.train_acc:.4f}",
                f"{record.test_acc:.4f}",
                f"{record.train_loss:.4f}",
                "*" if record.round in observed else "",
            ])
    print(summary_table)


def print_report_summary(report: Dict[str, Any]) -> None:
    attack_table = PrettyTable(["Kind", "Accuracy", "TP", "FP", "TN", "FN", "Input length", "Member gap"])
    attack_table.align = "l"
    for kind, result in report["attacks"].items():
        confusion = result["confusion"]
        gap = report["member_gap"].get(kind)
        attack_table.add_row([
            kind,
            f"{result['accuracy']:.4f}",
            confusion["true_positive"],
            confusion["false_positive"],
            confusion["true_negative"],
            confusion["false_negative"],
            result["input_len"],
            f"{gap:.4f}" if gap is not None else "-",
        ])
    print(attack_table)
    print()

    if report["all_clients"]:
        for kind, result in report["all_clients"].items():
            per_client = ", ".join(f"{c}: {acc:.4f}" for c, acc in result["per_client"].items())
            print(f"{kind} accuracy over all clients: mean {result['mean']:.4f} ({per_client})")
        print()

    comparison = report["costs"]["comparison"]
    cost_table = PrettyTable(["Model", "Input length", "Stored values", "Memory (MB)", "MACs"])
    cost_table.align = "l"
    for side in ("a", "b"):
        cost = comparison[side]
        cost_table.add_row([cost["name"], cost["input_len"], cost["param_count"], f"{cost['memory_bytes'] / 1e6:.3f}", cost["macs"]])
    print(cost_table)
    ratios = comparison["ratios"]
    print(f"baseline / trajectory: memory x{ratios['memory']:.2f}, MACs x{ratios['macs']:.2f}, input x{ratios['input']:.1f}")
    print()


# MARK: Commands
def command_fl_train(cfg: ExperimentConfig, args: argparse.Namespace, timer: MultipleTimer) -> None:
    print("=== FedAvg training ===\n")
    result = m_experiment.stage_fl_train(cfg)
    print_timer(timer.timer["command"])
    print_fl_summary(result)


def command_extract_features(cfg: ExperimentConfig, args: argparse.Namespace, timer: MultipleTimer) -> None:
    print("=== Feature extraction ===\n")
    written = m_experiment.stage_extract_features(cfg, args.kind)
    print(f"  {len(written)} feature files written")
    print_timer(timer.timer["command"])


def command_attack_train(cfg: ExperimentConfig, args: argparse.Namespace, timer: MultipleTimer) -> None:
    print("=== Attack training ===\n")
    histories = m_experiment.stage_attack_train(cfg, args.kind)
    print_timer(timer.timer["command"])

    loss_table = PrettyTable(["Kind", "Epochs", "First loss", "Final loss"])
    loss_table.align = "l"
    for kind, history in histories.items():
        loss_table.add_row([kind, len(history), f"{history[0]:.4f}", f"{history[-1]:.4f}"])
    print(loss_table)


def command_attack_eval(cfg: ExperimentConfig, args: argparse.Namespace, timer: MultipleTimer) -> None:
    print("=== Attack evaluation ===\n")
    report = m_experiment.stage_attack_eval(cfg, args.kind)
    print_timer(timer.timer["command"])
    print_report_summary(report)


def command_run(cfg: ExperimentConfig, args: argparse.Namespace, timer: MultipleTimer) -> None:
    command_fl_train(cfg, args, timer)
    print()
    command_extract_features(cfg, args, timer)
    command_attack_train(cfg, args, timer)
    print()
    command_attack_eval(cfg, args, timer)


def command_report(cfg: ExperimentConfig, args: argparse.Namespace, timer: MultipleTimer) -> None:
    if args.sweep is None and args.sliding_window is None:
        print("=== Report ===\n")
        print_report_summary(m_experiment.read_report(m_experiment.layout_for(cfg).report()))
        return

    if args.sweep == "observed-epochs":
        print("=== Observed-epoch sweep ===\n")
        rows = m_experiment.stage_sweep_observed_epochs(cfg, include_baseline=args.with_baseline)
        print_timer(timer.timer["command"])

        columns = ["Set", "Epochs", "Kind", "Accuracy"] + (["Baseline accuracy"] if args.with_baseline else [])
        sweep_table = PrettyTable(columns)
        sweep_table.align = "l"
        for row in rows:
            values = [row["set"], " ".join(map(str, row["epochs"])), row["kind"], f"{row['accuracy']:.4f}"]
            if args.with_baseline:
                values.append(f"{row['baseline_accuracy']:.4f}")
            sweep_table.add_row(values)
        print(sweep_table)
        print()

    if args.sliding_window is not None:
        print("=== Sliding-window attack ===\n")
        results = m_experiment.stage_sliding_window(cfg, args.sliding_window or None)
        print_timer(timer.timer["command"])
        for end, accuracy in results:
            print(f"  t = {end:<5}: {accuracy:.4f}")
        print()


def command_plot(cfg: ExperimentConfig, args: argparse.Namespace, timer: MultipleTimer) -> None:
    print("=== Plots ===\n")
    for path in m_experiment.stage_plot(cfg):
        print(f"  {path}")
    print_timer(timer.timer["command"])


COMMAND_FUNCTIONS = {
    "fl-train": command_fl_train,
    "extract-features": command_extract_features,
    "attack-train": command_attack_train,
    "attack-eval": command_attack_eval,
    "report": command_report,
    "plot": command_plot,
    "run": command_run,
}


# MARK: Main
def main(args: argparse.Namespace) -> int:
    print("==================================")
    print()

    stop_on_error = True
    try:
        raw_config = check_and_get_config(args.config)
        cfg = ExperimentConfig.from_dict(raw_config, seed=args.seed, out=args.out)
        stop_on_error = cfg.stop_on_error
        set_progress_enabled(cfg.show_progress and not args.quiet)

        print_settings(cfg, args.config)

        # Start timer
        main_timer = MultipleTimer(["command"])
        COMMAND_FUNCTIONS[args.command](cfg, args, main_timer)

    except (ConfigError, DataError, NumericError, FileNotFoundError) as e:
        print(f"\nError in {args.command} ({type(e).__name__}): {e}\n", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        if stop_on_error:
            raise
        print(f"\nUnexpected error in {args.command} ({type(e).__name__}): {e}\n", file=sys.stderr)
        traceback.print_exc()
        return EXIT_UNEXPECTED

    print("\n=== Summary ===\n")
    print(f"Total runtime: {format_runtime(main_timer.main.get_time_and_restart())}")
    print()
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    cmd_arg = get_command_line_arg(argv)

    if cmd_arg.quiet:
        with open(os.devnull, "w") as f, contextlib.redirect_stdout(f):
            return main(cmd_arg)
    return main(cmd_arg)


if __name__ == "__main__":
    sys.exit(run())
