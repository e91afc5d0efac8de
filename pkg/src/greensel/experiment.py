import logging
import os
import time
import warnings

from collections import Counter
from contextlib import contextmanager
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator, Literal, Sequence

import yaml

from pydantic import BaseModel, ConfigDict, Field, field_validator

from greensel.cascade import (
    CascadeConfig,
    ModelChain,
    cascade_evaluate,
    frozen_clock,
    single_evaluate,
)
from greensel.core import Dataset, SplitSpec, split
from greensel.energy import (
    METER_CHOICES,
    Clock,
    CostModel,
    EnergyMeter,
    EnergySource,
    select_meter,
)
from greensel.models import (
    DecisionTree,
    FeedforwardNet,
    NetConfig,
    SoftmaxConfig,
    TreeConfig,
)
from greensel.report import ReportRow, SweepRow
from greensel.router import RouterModel, route_evaluate, train_router


logger = logging.getLogger(__name__)

DIGITS_CSV = Path(__file__).parent / "data" / "digits.csv"
DIGITS_FEATURES = 64
DIGITS_CLASSES = 10
DIGITS_MAX_PIXEL = 16

# published whole-test-set energies (µWh) over the 359-instance test split
PUBLISHED_TEST_SIZE = 359
PUBLISHED_TREE_ENERGY = 0.13
PUBLISHED_NET_ENERGY = 40.80

ROW_NAMES = ("Decision Tree", "Neural Network", "Cascading", "Routing")

CONFIG_ALIASES = {
    "dataset_path": ["dataset_path", "dataset", "data", "path"],
    "split": ["split", "split_spec"],
    "epsilon": ["epsilon", "eps"],
    "repeats": ["repeats", "reps", "passes"],
    "meter": ["meter", "energy_meter"],
    "proxy_power_watts": ["proxy_power_watts", "power", "watts"],
    "counter_path": ["counter_path", "counter"],
    "costs": ["costs", "cost_model"],
    "tree": ["tree"],
    "net": ["net", "network"],
    "router": ["router"],
    "input_scale": ["input_scale", "scale"],
    "format": ["format", "output_format"],
    "timing": ["timing", "clock"],
    "seed": ["seed"],
}


class StageError(RuntimeError):
    """An experiment failure, tagged with the stage it happened in"""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def resolve_aliases(input_dict: dict[str, Any], alias_dict: dict[str, list]) -> dict[str, Any]:
    """Maps user keys (case-insensitive, any listed alias) to canonical names

    Raises:
        ValueError: For keys that match no alias
    """

    lowered = {str(key).lower(): value for key, value in input_dict.items()}
    resolved, used = {}, set()
    for param, aliases in alias_dict.items():
        for alias in aliases:
            if alias in lowered:
                resolved[param] = lowered[alias]
                used.add(alias)
                break

    unknown = sorted(set(lowered) - used)
    if unknown:
        raise ValueError(f"Unrecognized experiment settings: {unknown}")
    return resolved


def default_costs() -> CostModel:
    """Per-prediction costs derived from the published test-set energies

    The router is charged like the tree: both are a handful of comparisons
    or a single small linear map.
    """

    tree_cost = PUBLISHED_TREE_ENERGY / PUBLISHED_TEST_SIZE
    return CostModel(
        per_model_cost=(tree_cost, PUBLISHED_NET_ENERGY / PUBLISHED_TEST_SIZE),
        router_cost=tree_cost,
    )


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce the tree / network / cascade / routing comparison"""

    model_config = ConfigDict(frozen=True)

    dataset_path: Path = DIGITS_CSV
    split: SplitSpec = SplitSpec()
    epsilon: float = 0.2
    repeats: int = Field(1000, ge=1)
    meter: str = "auto"
    proxy_power_watts: float | None = Field(None, ge=0.0)
    counter_path: Path | None = None
    costs: CostModel = Field(default_factory=default_costs)
    tree: TreeConfig = TreeConfig()
    net: NetConfig = NetConfig()
    router: SoftmaxConfig = SoftmaxConfig()
    input_scale: float = Field(float(DIGITS_MAX_PIXEL), gt=0.0)
    format: Literal["table", "csv", "json"] = "table"
    timing: Literal["auto", "wallclock", "frozen"] = "auto"

    @field_validator("epsilon")
    @classmethod
    def check_epsilon(cls, epsilon: float) -> float:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1]: {epsilon}")
        return epsilon

    @field_validator("meter")
    @classmethod
    def check_meter(cls, meter: str) -> str:
        meter = meter.lower()
        if meter not in METER_CHOICES:
            raise ValueError(f"Unknown meter: {meter}. Choose one of {', '.join(METER_CHOICES)}")
        return meter

    @field_validator("costs")
    @classmethod
    def check_costs(cls, costs: CostModel) -> CostModel:
        if costs.k != 2:
            raise ValueError(f"The benchmark chain has 2 models; got {costs.k} costs")
        return costs

    @classmethod
    def from_dict(cls, settings: dict[str, Any]) -> "ExperimentConfig":
        """Builds a config from user settings, resolving aliases

        A top-level ``seed`` sets the split, network and router seeds at once.
        """

        settings = resolve_aliases(settings or {}, CONFIG_ALIASES)
        seed = settings.pop("seed", None)
        if seed is not None:
            for section in ("split", "net", "router"):
                settings[section] = {**(settings.get(section) or {}), "seed": seed}
        return cls(**settings)

    @classmethod
    def from_file(cls, filepath: Path | str) -> "ExperimentConfig":
        """Builds a config from a yaml file; a relative dataset path is taken from the file's directory"""

        config = cls.from_dict(load_experiment_yaml(filepath))
        if not config.dataset_path.is_absolute():
            config = config.model_copy(update={"dataset_path": Path(filepath).parent / config.dataset_path})
        return config

    @property
    def frozen_timing(self) -> bool:
        if self.timing == "auto":
            return self.meter == "modeled"
        return self.timing == "frozen"


def load_experiment_yaml(filepath: Path | str) -> dict:
    """Loads an experiment yaml file into a dictionary

    Args:
        filepath: The path to the yaml file

    Returns:
        dict: The experiment settings
    """

    if not os.path.exists(filepath):
        raise FileNotFoundError(f"File does not exist: {filepath}")

    with open(filepath, "r") as f:
        settings = yaml.safe_load(f)

    if settings is None:
        return {}
    if not isinstance(settings, dict):
        raise ValueError(f"Experiment file must contain a mapping: {filepath}")
    return settings


def load_digits_csv(path: Path | str = DIGITS_CSV) -> Dataset:
    """Loads the 8x8 digits collection from its CSV export

    Each line holds 64 pixel intensities in [0, 16] followed by the digit
    label in [0, 9], comma separated.

    Args:
        path: The CSV file

    Returns:
        Dataset: feature_dim 64, num_classes 10, one instance per line

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: For a malformed line, naming the file and line number
    """

    if not os.path.exists(path):
        raise FileNotFoundError(f"File does not exist: {path}")

    features, labels = [], []
    with open(path, "r") as f:
        for line_number, line in enumerate(f, start=1):
            fields = line.strip().split(",")
            if len(fields) != DIGITS_FEATURES + 1:
                raise ValueError(
                    f"{path}:{line_number}: expected {DIGITS_FEATURES + 1} comma-separated values, "
                    f"found {len(fields) if line.strip() else 0}"
                )

            try:
                values = [int(field) for field in fields]
            except ValueError:
                raise ValueError(f"{path}:{line_number}: values must be integers") from None

            pixels, label = values[:-1], values[-1]
            for column, pixel in enumerate(pixels, start=1):
                if not 0 <= pixel <= DIGITS_MAX_PIXEL:
                    raise ValueError(
                        f"{path}:{line_number}: column {column} value {pixel} outside [0, {DIGITS_MAX_PIXEL}]"
                    )
            if not 0 <= label < DIGITS_CLASSES:
                raise ValueError(
                    f"{path}:{line_number}: label {label} outside [0, {DIGITS_CLASSES - 1}]"
                )

            features.append(pixels)
            labels.append(label)

    if not features:
        raise ValueError(f"{path}: no instances found")

    logger.debug("Loaded %d digits from %s", len(features), path)
    return Dataset(features=features, labels=labels, num_classes=DIGITS_CLASSES)


class Experiment:
    """Trains the tree and network, then measures the four Table-1 style rows

    Every split access is counted in ``split_reads`` so tests can confirm the
    cascade never touches the validation set.
    """

    def __init__(self, config: ExperimentConfig | None = None):
        self.config = config or ExperimentConfig()
        self.split_reads: Counter = Counter()
        self._meter: EnergyMeter | None = None

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        logger.info("Stage %s", name)
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, f"{type(e).__name__}: {e}") from e

    @property
    def clock(self) -> Clock:
        return frozen_clock if self.config.frozen_timing else time.perf_counter

    @cached_property
    def dataset(self) -> Dataset:
        with self.stage("load"):
            return load_digits_csv(self.config.dataset_path)

    @cached_property
    def _splits(self) -> tuple[Dataset, Dataset, Dataset]:
        dataset = self.dataset
        with self.stage("split"):
            return split(dataset, self.config.split)

    @property
    def train(self) -> Dataset:
        self.split_reads["train"] += 1
        return self._splits[0]

    @property
    def val(self) -> Dataset:
        self.split_reads["val"] += 1
        return self._splits[1]

    @property
    def test(self) -> Dataset:
        self.split_reads["test"] += 1
        return self._splits[2]

    @cached_property
    def tree(self) -> DecisionTree:
        train = self.train
        with self.stage("train-tree"):
            return DecisionTree(self.config.tree).fit(train)

    @cached_property
    def net(self) -> FeedforwardNet:
        train = self.train
        with self.stage("train-net"):
            config = self.config.net.model_copy(update={"input_scale": self.config.input_scale})
            return FeedforwardNet(config).fit(train)

    @cached_property
    def chain(self) -> ModelChain:
        return ModelChain(
            models=(self.tree, self.net), declared_costs=self.config.costs.per_model_cost
        )

    @cached_property
    def router(self) -> RouterModel:
        chain, val = self.chain, self.val
        with self.stage("train-router"):
            config = self.config.router.model_copy(update={"input_scale": self.config.input_scale})
            return train_router(chain, val, config)

    @property
    def meter(self) -> EnergyMeter:
        if self._meter is None:
            with self.stage("meter"):
                config = self.config
                self._meter = select_meter(
                    config.meter, config.costs, config.proxy_power_watts, config.counter_path, self.clock
                )
                if self._meter.source is EnergySource.WALLCLOCK_PROXY:
                    warnings.warn(
                        f"Energy is estimated as {self._meter.describe()}, not measured", UserWarning
                    )
        return self._meter

    def evaluate_baseline(self, index: int) -> ReportRow:
        chain, test, meter = self.chain, self.test, self.meter
        name = ROW_NAMES[index - 1]
        with self.stage(f"evaluate-{name.lower().replace(' ', '-')}"):
            metrics = single_evaluate(chain, index, test, meter, self.config.repeats, self.clock)
            return ReportRow.from_metrics(name, metrics, baseline=True)

    def evaluate_cascade(self, epsilon: float | None = None) -> ReportRow:
        chain, test, meter = self.chain, self.test, self.meter
        epsilon = self.config.epsilon if epsilon is None else epsilon
        with self.stage("evaluate-cascading"):
            metrics = cascade_evaluate(
                chain, CascadeConfig(epsilon=epsilon), test, meter, self.config.repeats, self.clock
            )
            return ReportRow.from_metrics("Cascading", metrics)

    def evaluate_routing(self) -> ReportRow:
        router, test, meter = self.router, self.test, self.meter
        with self.stage("evaluate-routing"):
            metrics = route_evaluate(router, test, meter, self.config.repeats, self.clock)
            return ReportRow.from_metrics("Routing", metrics)

    def run(self) -> list[ReportRow]:
        """Returns the tree, network, cascading and routing rows in that order"""

        return [
            self.evaluate_baseline(1),
            self.evaluate_baseline(2),
            self.evaluate_cascade(),
            self.evaluate_routing(),
        ]

    def sweep(self, epsilons: Sequence[float]) -> list[SweepRow]:
        """One cascade evaluation per epsilon over the same trained chain, sorted by epsilon"""

        if not epsilons:
            raise StageError("sweep", "At least one epsilon is required")

        rows = []
        for epsilon in sorted(set(epsilons)):
            with self.stage("sweep"):
                epsilon = CascadeConfig(epsilon=epsilon).epsilon
            row = self.evaluate_cascade(epsilon)
            rows.append(
                SweepRow(
                    epsilon=epsilon,
                    accuracy=row.accuracy,
                    energy_uwh=row.energy_uwh,
                    fraction_of_g=row.fraction_of_g,
                    energy_source=row.energy_source,
                )
            )
        return rows

    def export_models(self, directory: Path | str) -> list[Path]:
        """Writes tree.json, net.json and router.json into directory"""

        tree, net, router = self.tree, self.net, self.router
        with self.stage("export"):
            directory = Path(directory)
            if not directory.is_dir():
                raise FileNotFoundError(f"Directory does not exist: {directory}")

            paths = [directory / "tree.json", directory / "net.json", directory / "router.json"]
            tree.save(paths[0])
            net.save(paths[1])
            router.save(paths[2])
            return paths


def run_experiment(config: ExperimentConfig | None = None) -> list[ReportRow]:
    return Experiment(config).run()


def sweep_epsilon(config: ExperimentConfig | None, epsilons: Sequence[float]) -> list[SweepRow]:
    return Experiment(config).sweep(epsilons)
