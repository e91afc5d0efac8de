import logging

from typing import Iterator, Sequence

import numpy as np

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


logger = logging.getLogger(__name__)

FRACTION_TOLERANCE = 1e-9


def _frozen_copy(array: np.ndarray) -> np.ndarray:
    """Returns a read-only copy so a Dataset never aliases caller memory"""
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


class Dataset(BaseModel):
    """A labeled collection of feature vectors

    Labels are dense class indices in [0, num_classes). Each instance also
    carries its row index in the source collection, which is how split
    membership is tracked after shuffling.

    Attributes:
        features (np.ndarray): (n, feature_dim) array of real features
        labels (np.ndarray): (n,) array of class indices
        num_classes (int): The size of the label space, at least 2
        indices (np.ndarray): (n,) array of source row indices
        class_names (tuple[str, ...] | None): Original labels when they were not integers
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray
    labels: np.ndarray
    num_classes: int = Field(..., ge=2)
    indices: np.ndarray | None = None
    class_names: tuple[str, ...] | None = None

    @model_validator(mode="before")
    @classmethod
    def coerce_arrays(cls, values: dict) -> dict:
        if not isinstance(values, dict):
            raise ValueError("Dataset must be built from keyword arguments")

        features = np.asarray(values.get("features"), dtype=float)
        if features.ndim != 2:
            raise ValueError(f"features must be a 2-D array, got shape {features.shape}")

        n, feature_dim = features.shape
        if n < 1:
            raise ValueError("Dataset must contain at least one instance")
        if feature_dim < 1:
            raise ValueError("feature_dim must be a positive integer")

        raw_labels = np.asarray(values.get("labels"))
        if raw_labels.shape != (n,):
            raise ValueError(
                f"Expected {n} labels to match the feature rows, got shape {raw_labels.shape}"
            )
        if not np.issubdtype(raw_labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(raw_labels, 1), 0)):
                raise ValueError("labels must be integer class indices")
        labels = raw_labels.astype(np.int64)

        indices = values.get("indices")
        indices = np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)
        if indices.shape != (n,):
            raise ValueError(f"Expected {n} row indices, got shape {indices.shape}")

        return {
            **values,
            "features": _frozen_copy(features),
            "labels": _frozen_copy(labels),
            "indices": _frozen_copy(indices),
        }

    @model_validator(mode="after")
    def check_labels(self) -> "Dataset":
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

        low, high = int(self.labels.min()), int(self.labels.max())
        if low < 0 or high >= self.num_classes:
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), found range [{low}, {high}]"
            )

        if self.class_names is not None and len(self.class_names) != self.num_classes:
            raise ValueError("class_names must name every class")

        return self

    @classmethod
    def from_labeled(
        cls, features: Sequence[Sequence[float]], labels: Sequence, num_classes: int | None = None
    ) -> "Dataset":
        """Builds a Dataset from arbitrary (e.g. string) labels

        Distinct labels are sorted and mapped to dense indices 0..m-1.

        Args:
            features: The feature vectors
            labels: One label per feature vector, any sortable type
            num_classes: Size of the label space. Defaults to the number of distinct labels

        Returns:
            Dataset: The dataset with dense integer labels
        """

        names = sorted(set(labels))
        mapping = {name: index for index, name in enumerate(names)}
        dense = [mapping[label] for label in labels]
        num_classes = num_classes or max(len(names), 2)
        class_names = tuple(str(name) for name in names)
        if len(class_names) != num_classes:
            class_names = None

        return cls(
            features=features, labels=dense, num_classes=num_classes, class_names=class_names
        )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[tuple[np.ndarray, int]]:
        for x, y in zip(self.features, self.labels):
            yield x, int(y)

    def subset(self, positions: Sequence[int] | np.ndarray) -> "Dataset":
        """Returns the instances at the given positions, keeping their source indices"""

        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            features=self.features[positions],
            labels=self.labels[positions],
            num_classes=self.num_classes,
            indices=self.indices[positions],
            class_names=self.class_names,
        )


class SplitSpec(BaseModel):
    """Fractions and seed for a train/validation/test partition"""

    model_config = ConfigDict(frozen=True)

    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = Field(42, ge=0)

    @field_validator("train_fraction", "val_fraction", "test_fraction")
    @classmethod
    def check_fraction(cls, fraction: float) -> float:
        if not 0.0 < fraction < 1.0:
            raise ValueError(f"Split fractions must lie in (0, 1): {fraction}")
        return fraction

    @model_validator(mode="after")
    def check_sum(self) -> "SplitSpec":
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > FRACTION_TOLERANCE:
            raise ValueError(f"Split fractions must sum to 1, got {total}")
        return self


class Prediction(BaseModel):
    """A predicted label, its confidence and the 1-based chain member that produced it"""

    model_config = ConfigDict(frozen=True)

    label: int = Field(..., ge=0)
    confidence: float = Field(..., ge=0.0, le=1.0)
    model_index: int = Field(..., ge=1)


class RunMetrics(BaseModel):
    """Accuracy, time and energy of one evaluated classifier on a test set

    Times are milliseconds and energies microwatt-hours, both per full test
    set pass (averaged when several passes were measured).
    """

    model_config = ConfigDict(frozen=True)

    accuracy: float = Field(..., ge=0.0, le=1.0)
    total_time_ms: float = Field(..., ge=0.0)
    total_energy_uwh: float = Field(..., ge=0.0)
    fraction_per_model: tuple[float, ...]
    selection_overhead_ms: float = Field(0.0, ge=0.0)
    energy_source: str
    invocations: tuple[int, ...] = ()
    repeats: int = Field(1, ge=1)

    @field_validator("fraction_per_model")
    @classmethod
    def check_fractions(cls, fractions: tuple[float, ...]) -> tuple[float, ...]:
        if not fractions:
            raise ValueError("fraction_per_model must not be empty")
        if any(f < 0.0 or f > 1.0 for f in fractions):
            raise ValueError(f"Fractions must lie in [0, 1]: {fractions}")
        if abs(sum(fractions) - 1.0) > FRACTION_TOLERANCE:
            raise ValueError(f"fraction_per_model must sum to 1: {fractions}")
        return fractions

    @field_validator("invocations")
    @classmethod
    def check_invocations(cls, invocations: tuple[int, ...]) -> tuple[int, ...]:
        if any(count < 0 for count in invocations):
            raise ValueError(f"Invocation counts must be non-negative: {invocations}")
        return invocations


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    """Computes (train, val, test) sizes, giving rounding remainders to train"""

    n_val = int(np.floor(n * spec.val_fraction + FRACTION_TOLERANCE))
    n_test = int(np.floor(n * spec.test_fraction + FRACTION_TOLERANCE))
    n_train = n - n_val - n_test
    return n_train, n_val, n_test


def split(dataset: Dataset, spec: SplitSpec | None = None) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffles and partitions a dataset into train, validation and test parts

    The permutation comes from ``numpy.random.default_rng(spec.seed)`` (PCG64),
    so the same seed always yields the same partition. Validation and test
    sizes are floor(n * fraction); the remainder goes to train.

    Args:
        dataset: The dataset to partition
        spec: Fractions and seed. Defaults to 60/20/20 with seed 42

    Returns:
        tuple[Dataset, Dataset, Dataset]: The train, validation and test parts

    Raises:
        ValueError: If any part would be empty
    """

    spec = spec or SplitSpec()
    n_train, n_val, n_test = split_sizes(dataset.n, spec)

    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"Split of {dataset.n} instances leaves an empty part: "
            f"train={n_train}, val={n_val}, test={n_test}"
        )

    order = np.random.default_rng(spec.seed).permutation(dataset.n)
    logger.debug("Split %d instances into %d/%d/%d", dataset.n, n_train, n_val, n_test)

    return (
        dataset.subset(order[:n_train]),
        dataset.subset(order[n_train : n_train + n_val]),
        dataset.subset(order[n_train + n_val :]),
    )


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Fraction of predictions equal to their label

    Raises:
        ValueError: If the inputs are empty or of different lengths
    """

    predictions = np.asarray(predictions)
    labels = np.asarray(labels)

    if predictions.shape != labels.shape:
        raise ValueError(
            f"Number of predictions {predictions.size} and labels {labels.size} must be the same"
        )
    if predictions.size == 0:
        raise ValueError("Cannot compute accuracy of an empty prediction list")

    return float(np.count_nonzero(predictions == labels)) / predictions.size
