import argparse
import logging
import sys

from pathlib import Path

import yaml

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from greensel.check import AcceptanceCheck
from greensel.core import SplitSpec, accuracy, split
from greensel.energy import METER_CHOICES
from greensel.experiment import (
    DIGITS_CSV,
    DIGITS_MAX_PIXEL,
    Experiment,
    ExperimentConfig,
    StageError,
    load_digits_csv,
)
from greensel.models import (
    DecisionTree,
    FeedforwardNet,
    NetConfig,
    NotFittedError,
    TreeConfig,
    load_model,
)
from greensel.report import emit_report, emit_sweep


logger = logging.getLogger("greensel")
error_console = Console(stderr=True)

DEFAULT_SWEEP = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"


def configure_logging(verbosity: int):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG

    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=error_console, show_path=False)],
        force=True,
    )
    logging.captureWarnings(True)


def parse_epsilons(text: str) -> list[float]:
    try:
        return [float(value) for value in text.split(",") if value.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Epsilons must be comma-separated numbers: {text}") from None


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merges the optional yaml config with command line overrides"""

    settings = ExperimentConfig.from_file(args.config).model_dump() if args.config else {}
    overrides = {
        "dataset_path": args.data,
        "epsilon": getattr(args, "epsilon", None),
        "repeats": args.repeats,
        "meter": args.meter,
        "proxy_power_watts": args.power,
        "counter_path": args.counter,
        "format": getattr(args, "format", None),
    }
    settings.update({key: value for key, value in overrides.items() if value is not None})

    config = ExperimentConfig(**settings)
    if args.seed is not None:
        config = config.model_copy(
            update={
                section: getattr(config, section).model_copy(update={"seed": args.seed})
                for section in ("split", "net", "router")
            }
        )
    return config


def bench_run(args: argparse.Namespace) -> int:
    experiment = Experiment(experiment_config(args))
    rows = experiment.run()
    print(emit_report(rows, experiment.config.format, args.carbon_intensity), end="")

    if args.export_models:
        for path in experiment.export_models(args.export_models):
            logger.info("Wrote %s", path)

    if args.check:
        messages = AcceptanceCheck(rows).check_all()
        for message in messages:
            error_console.print(f"check failed: {message}", markup=False)
        if messages:
            return 1
    return 0


def bench_sweep(args: argparse.Namespace) -> int:
    experiment = Experiment(experiment_config(args))
    print(emit_sweep(experiment.sweep(args.epsilons)), end="")
    return 0


def model_train(args: argparse.Namespace) -> int:
    train, _, _ = split(load_digits_csv(args.data), SplitSpec(seed=args.seed))

    if args.kind == "tree":
        model = DecisionTree(TreeConfig(max_depth=args.max_depth)).fit(train)
    else:
        config = NetConfig(seed=args.seed, input_scale=float(DIGITS_MAX_PIXEL))
        if args.epochs is not None:
            config = config.model_copy(update={"epochs": args.epochs})
        model = FeedforwardNet(config).fit(train)

    model.save(args.out)
    logger.info("Wrote %s model to %s", args.kind, args.out)
    return 0


def model_eval(args: argparse.Namespace) -> int:
    _, _, test = split(load_digits_csv(args.data), SplitSpec(seed=args.seed))
    model = load_model(args.model)
    predictions = model.predict_batch(test.features)
    print(f"{model.kind} accuracy on {test.n} test instances: {accuracy(predictions, test.labels):.4f}")
    return 0


def add_experiment_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="Experiment yaml file")
    parser.add_argument("--data", type=Path, help="Digits csv file (defaults to the bundled copy)")
    parser.add_argument("--repeats", type=int, help="Full test-set passes to average time and energy over")
    parser.add_argument("--meter", choices=METER_CHOICES, help="Energy meter")
    parser.add_argument("--power", type=float, help="Constant power (W) assumed by the proxy meter")
    parser.add_argument("--counter", type=Path, help="OS energy counter file in microjoules")
    parser.add_argument("--seed", type=int, help="Seed for the split, network and router")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greensel",
        description="Energy-aware dynamic model selection: cascading and routing benchmarks",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="Increase output verbosity (-vv for debug)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    bench = commands.add_parser("bench", help="Reproduce the tree / network / cascade / routing comparison")
    bench_commands = bench.add_subparsers(dest="bench_command", required=True)

    run = bench_commands.add_parser("run", help="Measure the four classifiers")
    add_experiment_arguments(run)
    run.add_argument("--epsilon", type=float, help="Confidence tolerance of the cascade")
    run.add_argument("--format", choices=["table", "csv", "json"], help="Report format")
    run.add_argument("--carbon-intensity", type=float, help="gCO2e per kWh; adds a carbon column")
    run.add_argument("--export-models", type=Path, metavar="DIR", help="Write model json files to DIR")
    run.add_argument("--check", action="store_true", help="Check the report against published trends")
    run.set_defaults(handler=bench_run)

    sweep = bench_commands.add_parser("sweep", help="Evaluate the cascade over several epsilons")
    add_experiment_arguments(sweep)
    sweep.add_argument(
        "--epsilons", type=parse_epsilons, default=parse_epsilons(DEFAULT_SWEEP),
        help=f"Comma-separated epsilons (default {DEFAULT_SWEEP})",
    )
    sweep.set_defaults(handler=bench_sweep)

    model = commands.add_parser("model", help="Single-model utilities")
    model_commands = model.add_subparsers(dest="model_command", required=True)

    train = model_commands.add_parser("train", help="Train one model on the train split")
    train.add_argument("--kind", choices=["tree", "net"], required=True)
    train.add_argument("--data", type=Path, default=DIGITS_CSV)
    train.add_argument("--seed", type=int, default=42)
    train.add_argument("--max-depth", type=int, default=5)
    train.add_argument("--epochs", type=int)
    train.add_argument("--out", type=Path, required=True, help="Model json file to write")
    train.set_defaults(handler=model_train)

    evaluate = model_commands.add_parser("eval", help="Accuracy of a saved model on the test split")
    evaluate.add_argument("--model", type=Path, required=True)
    evaluate.add_argument("--data", type=Path, default=DIGITS_CSV)
    evaluate.add_argument("--seed", type=int, default=42)
    evaluate.set_defaults(handler=model_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    """
    Run a greensel command.

    Command line arguments:
        bench run: Measure tree, network, cascading and routing on the digits data.
        bench sweep: Evaluate the cascade over a list of epsilons as csv.
        model train: Train a tree or network and write its json document.
        model eval: Report a saved model's test accuracy.
        -v, --verbose: Increase output verbosity.
    """

    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        return args.handler(args)
    except StageError as e:
        error_console.print(f"Failed during stage '{e.stage}': {e}", markup=False)
    except ValidationError as e:
        error_console.print("Invalid settings or parameters:", markup=False)
        error_console.print(str(e), markup=False)
    except yaml.YAMLError as e:
        error_console.print(f"Config file is not valid yaml: {e}", markup=False)
    except FileNotFoundError as e:
        error_console.print(f"File not found: {e}", markup=False)
    except (ValueError, NotFittedError) as e:
        error_console.print(f"Error: {e}", markup=False)
    return 1


if __name__ == "__main__":
    sys.exit(main())
