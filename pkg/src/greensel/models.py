import json
import logging

from abc import ABCMeta, abstractmethod
from pathlib import Path
from typing import Any, ClassVar, Sequence

import numpy as np

from pydantic import BaseModel, ConfigDict, Field, field_validator

from greensel.core import Dataset


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class NotFittedError(RuntimeError):
    """Raised when a classifier is used before fit"""


class DivergenceError(ArithmeticError):
    """Raised when the training loss stops being finite"""


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (the max logit is subtracted first)"""

    logits = np.asarray(logits, dtype=float)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    exponentials = np.exp(shifted)
    return exponentials / np.sum(exponentials, axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def class_weights(labels: Sequence[int], balanced: bool = True) -> dict[int, float]:
    """Per-class sample weights for the classes present in labels

    With balanced weighting class c gets n / (k * n_c) where k is the number
    of distinct classes and n_c the count of class c. Otherwise every weight is 1.

    Args:
        labels: The training labels
        balanced: Whether to use balanced weighting

    Returns:
        dict[int, float]: Weight for every class that occurs in labels
    """

    classes, counts = np.unique(np.asarray(labels, dtype=np.int64), return_counts=True)
    if not balanced:
        return {int(c): 1.0 for c in classes}

    n, k = int(counts.sum()), len(classes)
    return {int(c): n / (k * int(count)) for c, count in zip(classes, counts)}


class ModelDocument(BaseModel):
    """Versioned JSON document describing a fitted model"""

    format_version: int = FORMAT_VERSION
    kind: str
    hyperparameters: dict[str, Any]
    parameters: dict[str, Any]
    seed: int | None = None

    @field_validator("format_version")
    @classmethod
    def check_version(cls, version: int) -> int:
        if version != FORMAT_VERSION:
            raise ValueError(f"Unsupported model document version: {version}")
        return version


class ClassifierMeta(ABCMeta):
    """Registers every concrete classifier under its ``kind`` tag"""

    _registry: dict[str, type] = {}

    def __new__(mcls, name, bases, class_dict):
        new_class = super().__new__(mcls, name, bases, class_dict)
        if "kind" in class_dict:
            ClassifierMeta._registry[class_dict["kind"]] = new_class
        return new_class

    @classmethod
    def from_document(mcls, document: ModelDocument | dict) -> "Classifier":
        if isinstance(document, dict):
            document = ModelDocument.model_validate(document)

        classifier_class = mcls._registry.get(document.kind)
        if classifier_class is None:
            raise ValueError(f"Unknown model kind: {document.kind}")

        return classifier_class._from_document(document)


class Classifier(metaclass=ClassifierMeta):
    """A fitted mapping from feature vectors to class indices with a confidence

    Confidence is always the score of the predicted class, in [0, 1].
    ``predict_one`` computes both in a single evaluation.
    """

    training_indices_: np.ndarray | None = None

    @abstractmethod
    def fit(self, train: Dataset) -> "Classifier":
        ...

    @abstractmethod
    def predict_one(self, x: np.ndarray) -> tuple[int, float]:
        """Returns (label, confidence) for a single feature vector"""

    @property
    @abstractmethod
    def is_fitted(self) -> bool:
        ...

    def predict(self, x: np.ndarray) -> int:
        return self.predict_one(x)[0]

    def confidence(self, x: np.ndarray) -> float:
        return self.predict_one(x)[1]

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(x)[0] for x in features], dtype=np.int64)

    def check_fitted(self):
        if not self.is_fitted:
            raise NotFittedError(f"{type(self).__name__} must be fitted before use")

    def _remember_training_rows(self, train: Dataset):
        self.training_indices_ = np.array(train.indices, copy=True)

    @abstractmethod
    def to_document(self) -> ModelDocument:
        ...

    @classmethod
    @abstractmethod
    def _from_document(cls, document: ModelDocument) -> "Classifier":
        ...

    def to_json(self) -> str:
        return self.to_document().model_dump_json(indent=2)

    def save(self, filename: Path | str):
        with open(filename, "w") as f:
            f.write(self.to_json())


def load_model(filename: Path | str) -> Classifier:
    """Loads any registered classifier from its JSON document"""

    with open(filename, "r") as f:
        return model_from_json(f.read())


def model_from_json(text: str) -> Classifier:
    return ClassifierMeta.from_document(ModelDocument.model_validate(json.loads(text)))


class TreeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_depth: int = Field(5, ge=1)


class NetConfig(BaseModel):
    """Architecture and training hyperparameters of the feedforward network"""

    model_config = ConfigDict(frozen=True)

    hidden_sizes: tuple[int, ...] = (128, 64, 32, 24, 16)
    learning_rate: float = Field(0.01, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    epochs: int = Field(200, ge=0)
    batch_size: int = Field(32, ge=1)
    seed: int = Field(42, ge=0)
    input_scale: float = Field(1.0, gt=0.0)

    @field_validator("hidden_sizes")
    @classmethod
    def check_hidden_sizes(cls, hidden_sizes: tuple[int, ...]) -> tuple[int, ...]:
        if len(hidden_sizes) < 1:
            raise ValueError("At least one hidden layer is required")
        if any(size < 1 for size in hidden_sizes):
            raise ValueError(f"Hidden layer sizes must be positive: {hidden_sizes}")
        return hidden_sizes


class SoftmaxConfig(BaseModel):
    """Hyperparameters of the (class-weighted) softmax regressor"""

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.1, gt=0.0)
    epochs: int = Field(1000, ge=0)
    l2: float = Field(0.0, ge=0.0)
    balanced: bool = True
    seed: int = Field(42, ge=0)
    input_scale: float = Field(1.0, gt=0.0)


class DecisionTree(Classifier):
    """CART classification tree grown greedily on weighted Gini impurity

    Nodes are stored in flat arrays. Leaves have ``left == -1``. Every node
    keeps the class histogram of the training samples that reached it, so a
    leaf's confidence is the fraction of its samples in the majority class.
    """

    kind = "tree"

    def __init__(self, config: TreeConfig | None = None):
        self.config = config or TreeConfig()
        self.feature_: np.ndarray | None = None
        self.threshold_: np.ndarray | None = None
        self.left_: np.ndarray | None = None
        self.right_: np.ndarray | None = None
        self.counts_: np.ndarray | None = None
        self.feature_dim_: int | None = None

    @property
    def is_fitted(self) -> bool:
        return self.counts_ is not None

    @property
    def num_classes(self) -> int:
        self.check_fitted()
        return self.counts_.shape[1]

    def fit(self, train: Dataset) -> "DecisionTree":
        """Grows the tree on the training set

        Splits stop at max_depth, at a pure node, at nodes with fewer than two
        samples, or when every feature is constant within the node. Candidate
        thresholds are midpoints between consecutive distinct sorted values;
        ties go to the lowest feature index, then the lowest threshold.
        """

        if train.n < 1:
            raise ValueError("Cannot fit a tree on an empty dataset")

        self._nodes: list[list] = []
        self._features = train.features
        self._labels = train.labels
        self._num_classes = train.num_classes

        self._grow(np.arange(train.n), depth=0)

        nodes = self._nodes
        self.feature_ = np.array([node[0] for node in nodes], dtype=np.int64)
        self.threshold_ = np.array([node[1] for node in nodes], dtype=float)
        self.left_ = np.array([node[2] for node in nodes], dtype=np.int64)
        self.right_ = np.array([node[3] for node in nodes], dtype=np.int64)
        self.counts_ = np.array([node[4] for node in nodes], dtype=np.int64)
        self.feature_dim_ = train.feature_dim
        self._remember_training_rows(train)

        del self._nodes, self._features, self._labels, self._num_classes
        self._compile()

        logger.info(
            "Fitted decision tree: %d nodes, %d leaves, depth %d",
            len(self.feature_), self.n_leaves, self.depth,
        )
        return self

    def _grow(self, positions: np.ndarray, depth: int) -> int:
        node = len(self._nodes)
        counts = np.bincount(self._labels[positions], minlength=self._num_classes)
        self._nodes.append([-1, 0.0, -1, -1, counts])

        if depth >= self.config.max_depth or positions.size < 2 or np.count_nonzero(counts) < 2:
            return node

        best = best_gini_split(
            self._features[positions], self._labels[positions], self._num_classes
        )
        if best is None:
            return node

        feature, threshold = best
        goes_left = self._features[positions, feature] <= threshold
        left = self._grow(positions[goes_left], depth + 1)
        right = self._grow(positions[~goes_left], depth + 1)
        self._nodes[node][:4] = [feature, threshold, left, right]
        return node

    def _compile(self):
        # plain lists make the per-instance walk cheap
        self._walk = (
            self.feature_.tolist(),
            self.threshold_.tolist(),
            self.left_.tolist(),
            self.right_.tolist(),
        )
        totals = self.counts_.sum(axis=1)
        majority = np.argmax(self.counts_, axis=1)
        self._node_label = majority.tolist()
        self._node_confidence = (
            self.counts_[np.arange(len(majority)), majority] / totals
        ).tolist()

    def leaf(self, x: np.ndarray) -> int:
        """Returns the id of the leaf x is routed to"""

        self.check_fitted()
        feature, threshold, left, right = self._walk
        node = 0
        while left[node] != -1:
            node = left[node] if x[feature[node]] <= threshold[node] else right[node]
        return node

    def apply(self, features: np.ndarray) -> np.ndarray:
        return np.array([self.leaf(x) for x in np.asarray(features, dtype=float)], dtype=np.int64)

    def predict_one(self, x: np.ndarray) -> tuple[int, float]:
        node = self.leaf(x)
        return self._node_label[node], self._node_confidence[node]

    @property
    def leaves(self) -> list[int]:
        self.check_fitted()
        return [int(node) for node in np.flatnonzero(self.left_ == -1)]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def depth(self) -> int:
        """Number of split levels on the longest root-to-leaf path"""

        self.check_fitted()
        depths = {0: 0}
        for node in range(len(self.left_)):
            if self.left_[node] != -1:
                depths[int(self.left_[node])] = depths[node] + 1
                depths[int(self.right_[node])] = depths[node] + 1
        return max(depths.values())

    def to_document(self) -> ModelDocument:
        self.check_fitted()
        return ModelDocument(
            kind=self.kind,
            hyperparameters={
                **self.config.model_dump(),
                "num_classes": self.num_classes,
                "feature_dim": self.feature_dim_,
            },
            parameters={
                "feature": self.feature_.tolist(),
                "threshold": self.threshold_.tolist(),
                "left": self.left_.tolist(),
                "right": self.right_.tolist(),
                "counts": self.counts_.tolist(),
            },
        )

    @classmethod
    def _from_document(cls, document: ModelDocument) -> "DecisionTree":
        hyper = dict(document.hyperparameters)
        feature_dim = hyper.pop("feature_dim")
        hyper.pop("num_classes", None)

        tree = cls(TreeConfig(**hyper))
        params = document.parameters
        tree.feature_ = np.array(params["feature"], dtype=np.int64)
        tree.threshold_ = np.array(params["threshold"], dtype=float)
        tree.left_ = np.array(params["left"], dtype=np.int64)
        tree.right_ = np.array(params["right"], dtype=np.int64)
        tree.counts_ = np.array(params["counts"], dtype=np.int64)
        tree.feature_dim_ = feature_dim
        tree._compile()
        return tree


def gini(counts: np.ndarray) -> np.ndarray:
    """Gini impurity of class-count rows"""

    counts = np.atleast_2d(counts).astype(float)
    totals = counts.sum(axis=1, keepdims=True)
    proportions = np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
    return 1.0 - np.sum(proportions**2, axis=1)


def best_gini_split(
    features: np.ndarray, labels: np.ndarray, num_classes: int
) -> tuple[int, float] | None:
    """Finds the (feature, threshold) pair minimizing weighted child Gini impurity

    Args:
        features: (n, d) features of the samples in the node
        labels: (n,) labels of the samples in the node
        num_classes: Size of the label space

    Returns:
        tuple[int, float] | None: The best split, or None if every feature is constant
    """

    n, d = features.shape
    one_hot = np.eye(num_classes, dtype=np.int64)[labels]
    totals = one_hot.sum(axis=0)
    left_sizes = np.arange(1, n)

    best_score, best = np.inf, None
    for feature in range(d):
        order = np.argsort(features[:, feature], kind="stable")
        values = features[order, feature]
        candidates = values[1:] > values[:-1]
        if not candidates.any():
            continue

        left_counts = np.cumsum(one_hot[order], axis=0)[:-1][candidates]
        right_counts = totals - left_counts
        n_left = left_sizes[candidates]
        score = (n_left * gini(left_counts) + (n - n_left) * gini(right_counts)) / n

        lowest = score.min()
        if lowest < best_score - 1e-12:
            position = np.flatnonzero(candidates)[np.flatnonzero(score <= lowest + 1e-12)[0]]
            best_score = lowest
            best = (feature, float((values[position] + values[position + 1]) / 2.0))

    return best


def tree_fit(train: Dataset, max_depth: int = 5) -> DecisionTree:
    return DecisionTree(TreeConfig(max_depth=max_depth)).fit(train)


def tree_confidence(tree: DecisionTree, x: np.ndarray) -> float:
    return tree.confidence(x)


class FeedforwardNet(Classifier):
    """Fully connected network with ReLU hidden layers and a softmax output

    Trained by mini-batch gradient descent with momentum on the mean
    cross-entropy. Weights are drawn from the seeded generator with
    standard deviation sqrt(2 / fan_in).
    """

    kind = "net"

    def __init__(self, config: NetConfig | None = None):
        self.config = config or NetConfig()
        self.weights_: list[np.ndarray] | None = None
        self.biases_: list[np.ndarray] | None = None
        self.loss_history_: list[float] = []

    @property
    def is_fitted(self) -> bool:
        return self.weights_ is not None

    @property
    def layer_sizes(self) -> list[int]:
        self.check_fitted()
        return [self.weights_[0].shape[0]] + [w.shape[1] for w in self.weights_]

    @property
    def n_parameters(self) -> int:
        self.check_fitted()
        return sum(w.size + b.size for w, b in zip(self.weights_, self.biases_))

    def initialize(self, feature_dim: int, num_classes: int, rng: np.random.Generator | None = None):
        """Draws fresh weights for the given input and output widths"""

        rng = rng or np.random.default_rng(self.config.seed)
        sizes = [feature_dim, *self.config.hidden_sizes, num_classes]
        self.weights_ = [
            rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
        ]
        self.biases_ = [np.zeros(fan_out) for fan_out in sizes[1:]]
        return self

    def _forward(self, inputs: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        activations, pre_activations = [inputs], []
        for layer, (weights, bias) in enumerate(zip(self.weights_, self.biases_)):
            z = activations[-1] @ weights + bias
            pre_activations.append(z)
            if layer < len(self.weights_) - 1:
                activations.append(np.maximum(z, 0.0))
        return activations, pre_activations

    def logits(self, features: np.ndarray) -> np.ndarray:
        self.check_fitted()
        inputs = np.asarray(features, dtype=float) / self.config.input_scale
        return self._forward(inputs)[1][-1]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features))

    def loss_and_gradients(
        self, inputs: np.ndarray, labels: np.ndarray
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Mean cross-entropy and its gradients on already scaled inputs

        Returns:
            tuple: (loss, weight gradients, bias gradients), one gradient per layer
        """

        activations, pre_activations = self._forward(inputs)
        logits = pre_activations[-1]
        n = inputs.shape[0]

        log_probs = log_softmax(logits)
        loss = -float(np.mean(log_probs[np.arange(n), labels]))

        delta = np.exp(log_probs)
        delta[np.arange(n), labels] -= 1.0
        delta /= n

        weight_grads, bias_grads = [], []
        for layer in range(len(self.weights_) - 1, -1, -1):
            weight_grads.append(activations[layer].T @ delta)
            bias_grads.append(delta.sum(axis=0))
            if layer > 0:
                delta = (delta @ self.weights_[layer].T) * (pre_activations[layer - 1] > 0)

        return loss, weight_grads[::-1], bias_grads[::-1]

    def fit(self, train: Dataset) -> "FeedforwardNet":
        """Trains the network on the training set

        Raises:
            DivergenceError: If an epoch's mean loss is not finite
        """

        if train.n < 1:
            raise ValueError("Cannot fit a network on an empty dataset")

        config = self.config
        rng = np.random.default_rng(config.seed)
        self.initialize(train.feature_dim, train.num_classes, rng)

        inputs = train.features / config.input_scale
        labels = train.labels
        velocity_w = [np.zeros_like(w) for w in self.weights_]
        velocity_b = [np.zeros_like(b) for b in self.biases_]
        self.loss_history_ = []

        for epoch in range(config.epochs):
            order = rng.permutation(train.n)
            epoch_loss = 0.0

            for start in range(0, train.n, config.batch_size):
                batch = order[start : start + config.batch_size]
                loss, weight_grads, bias_grads = self.loss_and_gradients(inputs[batch], labels[batch])
                epoch_loss += loss * batch.size

                for layer in range(len(self.weights_)):
                    velocity_w[layer] = config.momentum * velocity_w[layer] - config.learning_rate * weight_grads[layer]
                    velocity_b[layer] = config.momentum * velocity_b[layer] - config.learning_rate * bias_grads[layer]
                    self.weights_[layer] += velocity_w[layer]
                    self.biases_[layer] += velocity_b[layer]

            epoch_loss /= train.n
            if not np.isfinite(epoch_loss):
                raise DivergenceError(
                    f"Training loss became {epoch_loss} at epoch {epoch}; "
                    f"learning rate {config.learning_rate} is likely too large"
                )
            self.loss_history_.append(epoch_loss)

        self._remember_training_rows(train)
        logger.info(
            "Fitted feedforward net %s for %d epochs, final loss %s",
            self.layer_sizes, config.epochs,
            f"{self.loss_history_[-1]:.4f}" if self.loss_history_ else "n/a",
        )
        return self

    def predict_one(self, x: np.ndarray) -> tuple[int, float]:
        self.check_fitted()
        hidden = np.asarray(x, dtype=float) / self.config.input_scale
        for weights, bias in zip(self.weights_[:-1], self.biases_[:-1]):
            hidden = np.maximum(hidden @ weights + bias, 0.0)
        probabilities = softmax(hidden @ self.weights_[-1] + self.biases_[-1])
        label = int(np.argmax(probabilities))
        return label, float(probabilities[label])

    def to_document(self) -> ModelDocument:
        self.check_fitted()
        return ModelDocument(
            kind=self.kind,
            hyperparameters={**self.config.model_dump(), "layer_sizes": self.layer_sizes},
            parameters={
                "weights": [w.tolist() for w in self.weights_],
                "biases": [b.tolist() for b in self.biases_],
            },
            seed=self.config.seed,
        )

    @classmethod
    def _from_document(cls, document: ModelDocument) -> "FeedforwardNet":
        hyper = dict(document.hyperparameters)
        hyper.pop("layer_sizes", None)
        net = cls(NetConfig(**hyper))
        net.weights_ = [np.array(w, dtype=float) for w in document.parameters["weights"]]
        net.biases_ = [np.array(b, dtype=float) for b in document.parameters["biases"]]
        return net


def net_fit(train: Dataset, config: NetConfig | None = None) -> FeedforwardNet:
    return FeedforwardNet(config).fit(train)


def net_confidence(net: FeedforwardNet, x: np.ndarray) -> float:
    return net.confidence(x)


class SoftmaxRegressor(Classifier):
    """Multinomial logistic regression with optional balanced class weights

    Only the classes present at fit time can be predicted. With a single
    class present the model is constant.
    """

    kind = "softmax"

    def __init__(self, config: SoftmaxConfig | None = None):
        self.config = config or SoftmaxConfig()
        self.classes_: np.ndarray | None = None
        self.class_weights_: dict[int, float] | None = None
        self.weights_: np.ndarray | None = None
        self.bias_: np.ndarray | None = None
        self._class_list: list[int] | None = None

    @property
    def is_fitted(self) -> bool:
        return self.classes_ is not None

    def fit(self, train: Dataset) -> "SoftmaxRegressor":
        self.fit_arrays(train.features, train.labels)
        self._remember_training_rows(train)
        return self

    def fit_arrays(self, features: np.ndarray, labels: Sequence[int]) -> "SoftmaxRegressor":
        """Minimizes class-weighted mean cross-entropy by full-batch gradient descent

        Raises:
            ValueError: If there are no instances
            DivergenceError: If the loss stops being finite
        """

        config = self.config
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ValueError("Cannot fit a softmax regressor without instances")
        if labels.shape != (features.shape[0],):
            raise ValueError("Exactly one label per instance is required")

        self.class_weights_ = class_weights(labels, config.balanced)
        self.classes_ = np.array(sorted(self.class_weights_), dtype=np.int64)
        n, d = features.shape
        m = len(self.classes_)

        self.weights_ = np.zeros((d, m))
        self.bias_ = np.zeros(m)
        if m == 1:
            logger.info("Softmax regressor sees a single class %d; it is constant", self.classes_[0])
            self._compile()
            return self

        inputs = features / config.input_scale
        targets = np.searchsorted(self.classes_, labels)
        sample_weights = np.array([self.class_weights_[int(c)] for c in labels]) / n
        one_hot = np.eye(m)[targets]

        for epoch in range(config.epochs):
            logits = inputs @ self.weights_ + self.bias_
            log_probs = log_softmax(logits)
            loss = -float(np.sum(sample_weights * log_probs[np.arange(n), targets]))
            if not np.isfinite(loss):
                raise DivergenceError(f"Softmax regression loss became {loss} at epoch {epoch}")

            residual = (np.exp(log_probs) - one_hot) * sample_weights[:, None]
            self.weights_ -= config.learning_rate * (inputs.T @ residual + config.l2 * self.weights_)
            self.bias_ -= config.learning_rate * residual.sum(axis=0)

        self._compile()
        logger.info("Fitted softmax regressor on %d instances over classes %s", n, self.classes_.tolist())
        return self

    def _compile(self):
        # the label is the argmax of the logits, so the softmax is skipped and
        # the input scale is folded into the weights
        self._class_list = self.classes_.tolist()
        scaled = self.weights_ / self.config.input_scale
        self._scaled_weights = np.ascontiguousarray(scaled.T)
        self._margin = None
        if len(self._class_list) == 2:
            self._margin = np.ascontiguousarray(scaled[:, 1] - scaled[:, 0])
            self._margin_threshold = float(self.bias_[0] - self.bias_[1])

    def predict(self, x: np.ndarray) -> int:
        """Label only, from the compiled weights; ties go to the lower class"""

        classes = self._class_list
        if classes is None:
            raise NotFittedError(f"{type(self).__name__} must be fitted before use")
        if self._margin is not None:
            return classes[1] if self._margin.dot(x) > self._margin_threshold else classes[0]
        if len(classes) == 1:
            return classes[0]
        return classes[int((self._scaled_weights.dot(x) + self.bias_).argmax())]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Probabilities over ``classes_`` for each row"""

        self.check_fitted()
        inputs = np.atleast_2d(np.asarray(features, dtype=float)) / self.config.input_scale
        return softmax(inputs @ self.weights_ + self.bias_)

    def predict_one(self, x: np.ndarray) -> tuple[int, float]:
        self.check_fitted()
        if len(self.classes_) == 1:
            return int(self.classes_[0]), 1.0

        inputs = np.asarray(x, dtype=float) / self.config.input_scale
        probabilities = softmax(inputs @ self.weights_ + self.bias_)
        position = int(np.argmax(probabilities))
        return int(self.classes_[position]), float(probabilities[position])

    def to_document(self) -> ModelDocument:
        self.check_fitted()
        return ModelDocument(
            kind=self.kind,
            hyperparameters=self.config.model_dump(),
            parameters={
                "classes": self.classes_.tolist(),
                "class_weights": [self.class_weights_[int(c)] for c in self.classes_],
                "weights": self.weights_.tolist(),
                "bias": self.bias_.tolist(),
            },
            seed=self.config.seed,
        )

    @classmethod
    def _from_document(cls, document: ModelDocument) -> "SoftmaxRegressor":
        regressor = cls(SoftmaxConfig(**document.hyperparameters))
        params = document.parameters
        regressor.classes_ = np.array(params["classes"], dtype=np.int64)
        regressor.class_weights_ = {
            int(c): float(w) for c, w in zip(params["classes"], params["class_weights"])
        }
        regressor.weights_ = np.array(params["weights"], dtype=float).reshape(-1, len(regressor.classes_))
        regressor.bias_ = np.array(params["bias"], dtype=float)
        regressor._compile()
        return regressor


def softmax_fit(
    features: np.ndarray,
    labels: Sequence[int],
    balanced: bool = True,
    config: SoftmaxConfig | None = None,
) -> SoftmaxRegressor:
    config = (config or SoftmaxConfig()).model_copy(update={"balanced": balanced})
    return SoftmaxRegressor(config).fit_arrays(features, labels)
