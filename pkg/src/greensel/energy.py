"""Energy meters.

Three interchangeable meters measure a code section:

- ``ModeledMeter`` charges a declared cost per model invocation. It is
  exact and noise free, which makes it the oracle for accounting tests.
- ``ProxyMeter`` multiplies wall-clock duration by a constant power.
- ``OsCounterMeter`` reads a cumulative package energy counter in
  microjoules, such as the Linux powercap files.

Energies are microwatt-hours and durations milliseconds throughout.
"""

import logging
import math
import os
import threading
import time

from abc import ABC, abstractmethod
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Callable, ClassVar, Iterator, Mapping, Sequence

from pydantic import BaseModel, ConfigDict, Field, field_validator


logger = logging.getLogger(__name__)

MICROJOULES_PER_MICROWATT_HOUR = 3600.0
DEFAULT_PROXY_WATTS = 10.0
DEFAULT_COUNTER_PATH = "/sys/class/powercap/intel-rapl:0/energy_uj"
COUNTER_ENV = "GREENSEL_ENERGY_COUNTER"
PROXY_WATTS_ENV = "GREENSEL_PROXY_WATTS"

Clock = Callable[[], float]


class MeterError(RuntimeError):
    """Raised when a meter is used out of order"""


class MeterUnavailableError(MeterError):
    """Raised when a platform energy counter cannot be read"""


class EnergySource(str, Enum):
    MODELED = "modeled"
    WALLCLOCK_PROXY = "wallclock_proxy"
    OS_COUNTER = "os_counter"


class EnergySample(BaseModel):
    model_config = ConfigDict(frozen=True)

    energy_uwh: float = Field(..., ge=0.0)
    duration_ms: float = Field(..., ge=0.0)
    source: EnergySource


class CostModel(BaseModel):
    """Declared energy per single prediction of each chain member and of the router"""

    model_config = ConfigDict(frozen=True)

    per_model_cost: tuple[float, ...]
    router_cost: float = Field(0.0, ge=0.0)

    @field_validator("per_model_cost")
    @classmethod
    def check_costs(cls, costs: tuple[float, ...]) -> tuple[float, ...]:
        if not costs:
            raise ValueError("At least one model cost is required")
        for cost in costs:
            if not math.isfinite(cost) or cost < 0:
                raise ValueError(f"Model costs must be finite and non-negative: {costs}")
        return costs

    @field_validator("router_cost")
    @classmethod
    def check_router_cost(cls, cost: float) -> float:
        if not math.isfinite(cost):
            raise ValueError(f"Router cost must be finite: {cost}")
        return cost

    @property
    def k(self) -> int:
        return len(self.per_model_cost)

    @classmethod
    def from_totals(cls, totals: Sequence[float], instances: int, router_total: float = 0.0) -> "CostModel":
        """Derives per-prediction costs from energies measured over a whole test set"""

        if instances < 1:
            raise ValueError("instances must be positive")
        return cls(
            per_model_cost=tuple(total / instances for total in totals),
            router_cost=router_total / instances,
        )


def uj_to_uwh(microjoules: float) -> float:
    return microjoules / MICROJOULES_PER_MICROWATT_HOUR


def uwh_to_uj(microwatt_hours: float) -> float:
    return microwatt_hours * MICROJOULES_PER_MICROWATT_HOUR


def counter_delta(before: int, after: int, max_range: int | None = None) -> int:
    """Difference of two cumulative counter readings, correcting one wraparound

    Args:
        before: Reading at the start of the section
        after: Reading at the end of the section
        max_range: The counter's declared range; required when it wrapped

    Returns:
        int: The increment in counter units
    """

    if after >= before:
        return after - before
    if max_range is None:
        raise MeterError(f"Counter went backwards ({before} -> {after}) and no range is known")
    return after - before + max_range


def proxy_energy_uwh(duration_ms: float, power_watts: float) -> float:
    """Energy of a section drawing constant power: ms * W / 3.6 gives µWh"""

    return duration_ms * power_watts / 3.6


def modeled_measure(
    cost_model: CostModel,
    counts: Sequence[int] | Mapping[int, int],
    router_invocations: int = 0,
    duration_ms: float = 0.0,
) -> EnergySample:
    """Charges the declared cost for every recorded invocation

    Args:
        cost_model: Per-model and router costs
        counts: Invocations per model, either a sequence aligned with the
            chain or a mapping from 1-based model index to count
        router_invocations: Number of router decisions
        duration_ms: Wall-clock duration to attach to the sample

    Returns:
        EnergySample: The exact modeled energy

    Raises:
        ValueError: For negative counts or an unknown model index
    """

    if not isinstance(counts, Mapping):
        counts = {index: count for index, count in enumerate(counts, start=1)}

    energy = 0.0
    for index, count in sorted(counts.items()):
        if not 1 <= index <= cost_model.k:
            raise ValueError(f"Unknown model index {index} for a chain of {cost_model.k} models")
        if count < 0:
            raise ValueError(f"Invocation counts must be non-negative: {count}")
        energy += count * cost_model.per_model_cost[index - 1]

    if router_invocations < 0:
        raise ValueError(f"Router invocations must be non-negative: {router_invocations}")
    energy += router_invocations * cost_model.router_cost

    return EnergySample(energy_uwh=energy, duration_ms=duration_ms, source=EnergySource.MODELED)


def to_carbon(sample: EnergySample, intensity: float) -> float:
    """Grams of CO2e for the sample's energy at ``intensity`` gCO2e/kWh"""

    if intensity < 0:
        raise ValueError(f"Carbon intensity must be non-negative: {intensity}")
    return sample.energy_uwh * 1e-9 * intensity


class Measurement:
    """Holder filled with the sample once a measured section ends"""

    sample: EnergySample | None = None


class EnergyMeter(ABC):
    """Measures the energy of the section between begin() and end()"""

    source: ClassVar[EnergySource]

    def __init__(self, clock: Clock = time.perf_counter):
        self.clock = clock
        self._started_at: float | None = None

    @property
    def active(self) -> bool:
        return self._started_at is not None

    def begin(self):
        if self.active:
            raise MeterError(f"{type(self).__name__} is already measuring a section")
        self._start()
        self._started_at = self.clock()

    def end(self) -> EnergySample:
        if not self.active:
            raise MeterError(f"{type(self).__name__}.end() called without begin()")
        duration_ms = max(self.clock() - self._started_at, 0.0) * 1e3
        self._started_at = None
        return self._stop(duration_ms)

    def abort(self):
        """Drops the open section without taking a reading"""
        self._started_at = None

    def record_model_invocation(self, model_index: int, count: int = 1):
        """Only the modeled meter charges invocations; physical meters ignore them"""

    def record_router_invocation(self, count: int = 1):
        """Only the modeled meter charges router decisions"""

    @contextmanager
    def measure(self) -> Iterator[Measurement]:
        measurement = Measurement()
        self.begin()
        try:
            yield measurement
        except BaseException:
            self.abort()
            raise
        measurement.sample = self.end()

    def describe(self) -> str:
        return self.source.value

    def _start(self):
        pass

    @abstractmethod
    def _stop(self, duration_ms: float) -> EnergySample:
        ...


class ModeledMeter(EnergyMeter):
    """Deterministic meter charging the cost model for each recorded invocation

    Recording is guarded by a lock, so concurrent callers may record into the
    same section.
    """

    source = EnergySource.MODELED

    def __init__(self, cost_model: CostModel, clock: Clock = time.perf_counter):
        super().__init__(clock)
        self.cost_model = cost_model
        self._lock = threading.Lock()
        self._counts: dict[int, int] = {}
        self._router_invocations = 0

    def _start(self):
        with self._lock:
            self._counts = {}
            self._router_invocations = 0

    def record_model_invocation(self, model_index: int, count: int = 1):
        if not 1 <= model_index <= self.cost_model.k:
            raise ValueError(
                f"Unknown model index {model_index} for a chain of {self.cost_model.k} models"
            )
        with self._lock:
            self._counts[model_index] = self._counts.get(model_index, 0) + count

    def record_router_invocation(self, count: int = 1):
        with self._lock:
            self._router_invocations += count

    def _stop(self, duration_ms: float) -> EnergySample:
        with self._lock:
            return modeled_measure(self.cost_model, self._counts, self._router_invocations, duration_ms)


class ProxyMeter(EnergyMeter):
    """Estimates energy as wall-clock duration times a constant power draw"""

    source = EnergySource.WALLCLOCK_PROXY

    def __init__(self, power_watts: float | None = None, clock: Clock = time.perf_counter):
        super().__init__(clock)
        if power_watts is None:
            power_watts = float(os.getenv(PROXY_WATTS_ENV, DEFAULT_PROXY_WATTS))
        if not math.isfinite(power_watts) or power_watts < 0:
            raise ValueError(f"Proxy power must be finite and non-negative: {power_watts}")
        self.power_watts = power_watts

    def _stop(self, duration_ms: float) -> EnergySample:
        return EnergySample(
            energy_uwh=proxy_energy_uwh(duration_ms, self.power_watts),
            duration_ms=duration_ms,
            source=self.source,
        )

    def describe(self) -> str:
        return f"{self.source.value} at {self.power_watts:g} W"


def read_counter(path: Path | str) -> int:
    """Reads an ASCII integer counter file

    Raises:
        MeterUnavailableError: If the file is missing, unreadable or malformed
    """

    try:
        with open(path, "r") as f:
            return int(f.read().strip())
    except FileNotFoundError as e:
        raise MeterUnavailableError(f"Energy counter not found: {path}") from e
    except PermissionError as e:
        raise MeterUnavailableError(f"Permission denied reading energy counter: {path}") from e
    except ValueError as e:
        raise MeterUnavailableError(f"Energy counter is not an integer: {path}") from e


class OsCounterMeter(EnergyMeter):
    """Reads a cumulative microjoule energy counter exposed by the OS

    The counter's range is read from ``max_energy_range_uj`` next to the
    counter file when present and used to undo a single wraparound.
    """

    source = EnergySource.OS_COUNTER

    def __init__(self, path: Path | str | None = None, clock: Clock = time.perf_counter):
        super().__init__(clock)
        self.path = Path(path or os.getenv(COUNTER_ENV) or DEFAULT_COUNTER_PATH)
        range_path = self.path.with_name("max_energy_range_uj")
        self.max_range = read_counter(range_path) if range_path.exists() else None
        self._before: int | None = None

        # fail early so callers can fall back before measuring anything
        read_counter(self.path)

    def _start(self):
        self._before = read_counter(self.path)

    def abort(self):
        super().abort()
        self._before = None

    def _stop(self, duration_ms: float) -> EnergySample:
        after = read_counter(self.path)
        delta = counter_delta(self._before, after, self.max_range)
        self._before = None
        return EnergySample(energy_uwh=uj_to_uwh(delta), duration_ms=duration_ms, source=self.source)

    def describe(self) -> str:
        return f"{self.source.value} ({self.path})"


def _measure_section(meter: EnergyMeter, section: Callable[[], Any]) -> EnergySample:
    with meter.measure() as measurement:
        section()
    return measurement.sample


def proxy_measure(
    section: Callable[[], Any], power_watts: float | None = None, clock: Clock = time.perf_counter
) -> EnergySample:
    return _measure_section(ProxyMeter(power_watts, clock), section)


def oscounter_measure(section: Callable[[], Any], path: Path | str | None = None) -> EnergySample:
    return _measure_section(OsCounterMeter(path), section)


METER_CHOICES = ("auto", "modeled", "proxy", "oscounter")


def select_meter(
    choice: str = "auto",
    cost_model: CostModel | None = None,
    power_watts: float | None = None,
    counter_path: Path | str | None = None,
    clock: Clock = time.perf_counter,
) -> EnergyMeter:
    """Builds the requested meter

    ``auto`` tries the OS counter and falls back to the wall-clock proxy;
    each step is logged. An explicit ``oscounter`` choice does not fall back.

    Raises:
        ValueError: For an unknown choice or a modeled meter without costs
        MeterUnavailableError: If ``oscounter`` was requested but cannot be read
    """

    choice = choice.lower()
    if choice == "modeled":
        if cost_model is None:
            raise ValueError("The modeled meter needs a cost model")
        logger.info("Using modeled energy meter with costs %s", cost_model.per_model_cost)
        return ModeledMeter(cost_model, clock)

    if choice == "proxy":
        meter = ProxyMeter(power_watts, clock)
        logger.info("Using %s", meter.describe())
        return meter

    if choice == "oscounter":
        meter = OsCounterMeter(counter_path, clock)
        logger.info("Using %s", meter.describe())
        return meter

    if choice == "auto":
        try:
            meter = OsCounterMeter(counter_path, clock)
            logger.info("Using %s", meter.describe())
            return meter
        except MeterUnavailableError as e:
            meter = ProxyMeter(power_watts, clock)
            logger.warning("%s; falling back to %s", e, meter.describe())
            return meter

    raise ValueError(f"Unknown meter: {choice}. Choose one of {', '.join(METER_CHOICES)}")
