import json
import logging
import time

from pathlib import Path

import numpy as np

from pydantic import BaseModel, ConfigDict, Field, model_validator

from greensel.cascade import CascadeOutcome, ModelChain, evaluate
from greensel.core import Dataset, Prediction, RunMetrics
from greensel.energy import Clock, EnergyMeter
from greensel.models import (
    FORMAT_VERSION,
    Classifier,
    ClassifierMeta,
    ModelDocument,
    SoftmaxConfig,
    SoftmaxRegressor,
)


logger = logging.getLogger(__name__)


class OracleLabels(BaseModel):
    """Lowest-index chain member that is correct on each validation instance (1 if none is)"""

    model_config = ConfigDict(frozen=True)

    labels: tuple[int, ...]
    k: int = Field(..., ge=2)

    @model_validator(mode="after")
    def check_range(self) -> "OracleLabels":
        if any(not 1 <= label <= self.k for label in self.labels):
            raise ValueError(f"Oracle labels must lie in 1..{self.k}")
        return self

    def as_array(self) -> np.ndarray:
        return np.array(self.labels, dtype=np.int64)

    def counts(self) -> dict[int, int]:
        return {index: self.labels.count(index) for index in range(1, self.k + 1)}


def correctness_matrix(chain: ModelChain, dataset: Dataset) -> np.ndarray:
    """(n, k) boolean matrix: whether chain model j predicts instance i correctly"""

    chain.ensure_fitted()
    return np.array(
        [[model.predict(x) == y for model in chain.models] for x, y in dataset],
        dtype=bool,
    ).reshape(dataset.n, chain.k)


def oracle_from_correctness(correct: np.ndarray) -> np.ndarray:
    # argmax of an all-False row is 0, which is exactly the "no model is correct" fallback
    return np.argmax(correct, axis=1) + 1


def build_oracle_labels(chain: ModelChain, val: Dataset) -> OracleLabels:
    """Applies the oracle routing rule to every validation instance

    The label is min{i : M_i(x) = y}, or 1 when no chain model is correct.
    """

    labels = oracle_from_correctness(correctness_matrix(chain, val))
    return OracleLabels(labels=tuple(int(label) for label in labels), k=chain.k)


def coverage(chain: ModelChain, dataset: Dataset) -> float:
    """Fraction of instances at least one chain model classifies correctly"""

    return float(np.mean(correctness_matrix(chain, dataset).any(axis=1)))


class RouterModel:
    """Learned router mapping a feature vector to a chain member (1-based)

    The learner is trained on 0-based route classes; ``select`` shifts back.
    """

    def __init__(self, learner: Classifier, chain: ModelChain):
        self.learner = learner
        self.chain = chain

    def select(self, x: np.ndarray, row: int | None = None) -> int:
        index = int(self.learner.predict(x)) + 1
        if not 1 <= index <= self.chain.k:
            raise ValueError(f"Router chose model {index} outside chain of {self.chain.k} models")
        return index

    def select_batch(self, features: np.ndarray) -> np.ndarray:
        return np.array([self.select(x) for x in features], dtype=np.int64)

    def to_document(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "router",
            "learner": self.learner.to_document().model_dump(),
            "declared_costs": list(self.chain.declared_costs),
            "chain_kinds": [getattr(model, "kind", type(model).__name__) for model in self.chain.models],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2)

    def save(self, filename: Path | str):
        with open(filename, "w") as f:
            f.write(self.to_json())

    @classmethod
    def from_document(cls, document: dict, chain: ModelChain) -> "RouterModel":
        if document.get("kind") != "router":
            raise ValueError(f"Not a router document: kind={document.get('kind')!r}")
        if document.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"Unsupported router document version: {document.get('format_version')}")

        kinds = [getattr(model, "kind", type(model).__name__) for model in chain.models]
        if document["chain_kinds"] != kinds:
            raise ValueError(
                f"Router was trained for chain {document['chain_kinds']}, got {kinds}"
            )

        learner = ClassifierMeta.from_document(ModelDocument.model_validate(document["learner"]))
        return cls(learner, chain)

    @classmethod
    def from_json(cls, text: str, chain: ModelChain) -> "RouterModel":
        return cls.from_document(json.loads(text), chain)

    @classmethod
    def load(cls, filename: Path | str, chain: ModelChain) -> "RouterModel":
        with open(filename, "r") as f:
            return cls.from_json(f.read(), chain)


class OracleRouter:
    """DIAGNOSTIC ONLY: routes with the oracle computed from visible labels

    Reads the labels of the dataset it is built for, so it must never be used
    to report a method's accuracy. It gives the upper bound a learned router
    could reach on that dataset. Rows are addressed by position.
    """

    def __init__(self, chain: ModelChain, dataset: Dataset):
        self.chain = chain
        self.routes = build_oracle_labels(chain, dataset).as_array()

    def select(self, x: np.ndarray, row: int | None = None) -> int:
        if row is None:
            raise ValueError("The oracle router needs the row position of the instance")
        return int(self.routes[row])


def check_validation_isolation(chain: ModelChain, val: Dataset):
    """Raises ValueError if a validation row was used to train a chain model"""

    for index, model in enumerate(chain.models, start=1):
        if model.training_indices_ is None:
            continue
        shared = np.intersect1d(model.training_indices_, val.indices)
        if shared.size:
            raise ValueError(
                f"{shared.size} validation rows were used to train chain model {index}, "
                f"e.g. rows {shared[:5].tolist()}"
            )


def train_router(
    chain: ModelChain,
    val: Dataset,
    config: SoftmaxConfig | None = None,
    learner: Classifier | None = None,
) -> RouterModel:
    """Trains a router to imitate the oracle on the validation set

    Args:
        chain: The fitted chain to route over
        val: Validation set disjoint from the chain's training data
        config: Settings of the default balanced softmax learner
        learner: Any unfitted classifier to use instead

    Returns:
        RouterModel: The fitted router

    Raises:
        ValueError: If the validation set overlaps a chain model's training rows
    """

    if val.n < 1:
        raise ValueError("Cannot train a router on an empty validation set")
    check_validation_isolation(chain, val)

    oracle = build_oracle_labels(chain, val)
    logger.info("Oracle label counts on %d validation rows: %s", val.n, oracle.counts())

    routing_set = Dataset(
        features=val.features,
        labels=oracle.as_array() - 1,
        num_classes=chain.k,
        indices=val.indices,
    )
    learner = learner or SoftmaxRegressor(config or SoftmaxConfig())
    learner.fit(routing_set)
    return RouterModel(learner, chain)


def route_predict(
    router: RouterModel | OracleRouter,
    x: np.ndarray,
    row: int | None = None,
    clock: Clock = time.perf_counter,
) -> CascadeOutcome:
    """Asks the router for a model index and evaluates only that model"""

    started = clock()
    index = router.select(x, row)
    selection = clock() - started

    model = router.chain.model(index)
    began = clock()
    label, confidence = model.predict_one(x)
    inference = clock() - began

    return CascadeOutcome(
        prediction=Prediction(label=label, confidence=confidence, model_index=index),
        models_invoked=(index,),
        selection_time_ms=selection * 1e3,
        inference_time_ms=inference * 1e3,
    )


def route_evaluate(
    router: RouterModel | OracleRouter,
    test: Dataset,
    meter: EnergyMeter,
    repeats: int = 1,
    clock: Clock = time.perf_counter,
) -> RunMetrics:
    """Runs routed inference over the test set; overhead is the router's own inference time"""

    router.chain.ensure_fitted()
    metrics = evaluate(
        lambda row, x: route_predict(router, x, row, clock),
        test, meter, router.chain.k, repeats,
        router_decisions_per_instance=1, clock=clock,
    )
    logger.info(
        "Routing: accuracy %.4f, fraction per model %s", metrics.accuracy, metrics.fraction_per_model
    )
    return metrics
