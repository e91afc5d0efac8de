import logging
import math
import time

from collections import Counter
from typing import Callable, Sequence

import numpy as np

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from greensel.core import Dataset, Prediction, RunMetrics, accuracy
from greensel.energy import Clock, CostModel, EnergyMeter
from greensel.models import Classifier, NotFittedError


logger = logging.getLogger(__name__)


def frozen_clock() -> float:
    """A clock that never advances; makes timings reproducible under the modeled meter"""

    return 0.0


class ModelChain(BaseModel):
    """Classifiers ordered by non-decreasing per-prediction energy cost

    Model indices are 1-based everywhere outside this object.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    models: tuple[Classifier, ...]
    declared_costs: tuple[float, ...]

    @field_validator("declared_costs")
    @classmethod
    def check_costs(cls, costs: tuple[float, ...]) -> tuple[float, ...]:
        for cost in costs:
            if not math.isfinite(cost) or cost < 0:
                raise ValueError(f"Declared costs must be finite and non-negative: {costs}")
        if any(later < earlier for earlier, later in zip(costs, costs[1:])):
            raise ValueError(f"Models must be ordered by increasing energy cost: {costs}")
        return costs

    @model_validator(mode="after")
    def check_length(self) -> "ModelChain":
        if len(self.models) < 2:
            raise ValueError(f"A chain needs at least 2 models, got {len(self.models)}")
        if len(self.declared_costs) != len(self.models):
            raise ValueError(
                f"Number of models {len(self.models)} and costs {len(self.declared_costs)} must be the same"
            )
        return self

    @property
    def k(self) -> int:
        return len(self.models)

    def __len__(self) -> int:
        return self.k

    def model(self, index: int) -> Classifier:
        """Returns the chain member with 1-based index"""

        if not 1 <= index <= self.k:
            raise IndexError(f"Model index {index} outside chain of {self.k} models")
        return self.models[index - 1]

    def ensure_fitted(self):
        for index, model in enumerate(self.models, start=1):
            if not model.is_fitted:
                raise NotFittedError(f"Chain model {index} ({type(model).__name__}) is not fitted")

    def cost_model(self, router_cost: float = 0.0) -> CostModel:
        return CostModel(per_model_cost=self.declared_costs, router_cost=router_cost)


class CascadeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = 0.2

    @field_validator("epsilon")
    @classmethod
    def check_epsilon(cls, epsilon: float) -> float:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1]: {epsilon}")
        return epsilon

    @property
    def threshold(self) -> float:
        return 1.0 - self.epsilon


class CascadeOutcome(BaseModel):
    """What happened for one instance: the answer and which models ran

    Times are milliseconds. ``selection_time_ms`` excludes model inference.
    """

    model_config = ConfigDict(frozen=True)

    prediction: Prediction
    models_invoked: tuple[int, ...]
    selection_time_ms: float = Field(0.0, ge=0.0)
    inference_time_ms: float = Field(0.0, ge=0.0)

    @model_validator(mode="after")
    def check_invoked(self) -> "CascadeOutcome":
        if not self.models_invoked:
            raise ValueError("At least one model must have been invoked")
        if self.prediction.model_index != self.models_invoked[-1]:
            raise ValueError("The prediction must come from the last invoked model")
        return self


def cascade_predict(
    chain: ModelChain, config: CascadeConfig, x: np.ndarray, clock: Clock = time.perf_counter
) -> CascadeOutcome:
    """Escalates through the chain until a prediction is confident enough

    Model i (for i < k) is evaluated once; its label is accepted when its
    confidence is at least 1 - epsilon. Otherwise the last model answers.
    Models after the accepting one are never evaluated.
    """

    threshold = config.threshold
    last = chain.k - 1
    invoked = []
    inference = 0.0

    start = clock()
    for position, model in enumerate(chain.models):
        began = clock()
        label, confidence = model.predict_one(x)
        inference += clock() - began
        invoked.append(position + 1)
        if position == last or confidence >= threshold:
            break
    selection = max(clock() - start - inference, 0.0)

    return CascadeOutcome(
        prediction=Prediction(label=label, confidence=confidence, model_index=invoked[-1]),
        models_invoked=tuple(invoked),
        selection_time_ms=selection * 1e3,
        inference_time_ms=inference * 1e3,
    )


def single_predict(
    chain: ModelChain, index: int, x: np.ndarray, clock: Clock = time.perf_counter
) -> CascadeOutcome:
    """Runs one chain member alone, as a baseline with no selection"""

    model = chain.model(index)
    began = clock()
    label, confidence = model.predict_one(x)
    inference = clock() - began

    return CascadeOutcome(
        prediction=Prediction(label=label, confidence=confidence, model_index=index),
        models_invoked=(index,),
        inference_time_ms=inference * 1e3,
    )


def evaluate(
    predict: Callable[[int, np.ndarray], CascadeOutcome],
    test: Dataset,
    meter: EnergyMeter,
    k: int,
    repeats: int = 1,
    router_decisions_per_instance: int = 0,
    clock: Clock = time.perf_counter,
) -> RunMetrics:
    """Measures full passes of ``predict`` over the test set

    Each pass is bracketed by the meter. Time, energy and selection overhead
    are averaged over ``repeats`` passes; accuracy and the per-model
    fractions come from the first pass since predictions are deterministic.

    Args:
        predict: Called with (row position, features) for every test instance
        test: The test set
        meter: The energy meter; must not be in use
        k: Number of models in the chain
        repeats: Number of full passes
        router_decisions_per_instance: Router decisions to charge per instance
        clock: Monotonic clock in seconds

    Returns:
        RunMetrics: The averaged metrics
    """

    if test.n < 1:
        raise ValueError("Cannot evaluate on an empty test set")
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1: {repeats}")

    first_pass = None
    total_time = total_energy = total_overhead = 0.0
    source = None

    for _ in range(repeats):
        meter.begin()
        try:
            started = clock()
            outcomes = [predict(row, x) for row, x in enumerate(test.features)]
            elapsed = clock() - started

            counts = Counter(index for outcome in outcomes for index in outcome.models_invoked)
            for index, count in sorted(counts.items()):
                meter.record_model_invocation(index, count)
            if router_decisions_per_instance:
                meter.record_router_invocation(router_decisions_per_instance * test.n)
        except BaseException:
            meter.abort()
            raise
        sample = meter.end()

        first_pass = first_pass or outcomes
        total_time += elapsed * 1e3
        total_energy += sample.energy_uwh
        total_overhead += sum(outcome.selection_time_ms for outcome in outcomes)
        source = sample.source

    predicted = [outcome.prediction.label for outcome in first_pass]
    accepted = Counter(outcome.prediction.model_index for outcome in first_pass)
    invocations = Counter(index for outcome in first_pass for index in outcome.models_invoked)

    return RunMetrics(
        accuracy=accuracy(predicted, test.labels),
        total_time_ms=total_time / repeats,
        total_energy_uwh=total_energy / repeats,
        fraction_per_model=tuple(accepted[index] / test.n for index in range(1, k + 1)),
        selection_overhead_ms=total_overhead / repeats,
        energy_source=source.value,
        invocations=tuple(invocations[index] for index in range(1, k + 1)),
        repeats=repeats,
    )


def cascade_evaluate(
    chain: ModelChain,
    config: CascadeConfig,
    test: Dataset,
    meter: EnergyMeter,
    repeats: int = 1,
    clock: Clock = time.perf_counter,
) -> RunMetrics:
    """Runs the cascade over every test instance under the meter

    ``fraction_per_model[i]`` is the share of instances whose accepted
    prediction came from model i+1. The overhead is the time spent in
    threshold checks and dispatch, excluding inference.
    """

    chain.ensure_fitted()
    metrics = evaluate(
        lambda row, x: cascade_predict(chain, config, x, clock),
        test, meter, chain.k, repeats, clock=clock,
    )
    logger.info(
        "Cascade at epsilon=%g: accuracy %.4f, fraction per model %s",
        config.epsilon, metrics.accuracy, metrics.fraction_per_model,
    )
    return metrics


def single_evaluate(
    chain: ModelChain,
    index: int,
    test: Dataset,
    meter: EnergyMeter,
    repeats: int = 1,
    clock: Clock = time.perf_counter,
) -> RunMetrics:
    chain.ensure_fitted()
    return evaluate(
        lambda row, x: single_predict(chain, index, x, clock),
        test, meter, chain.k, repeats, clock=clock,
    )


def expected_cascade_energy(outcomes: Sequence[CascadeOutcome], cost_model: CostModel) -> float:
    """Sums the declared cost of every model each outcome invoked"""

    return sum(
        cost_model.per_model_cost[index - 1]
        for outcome in outcomes
        for index in outcome.models_invoked
    )
