import os
import tempfile
import unittest

import numpy as np

import greensel.router as router

from greensel.cascade import ModelChain, frozen_clock
from greensel.core import Dataset
from greensel.energy import ModeledMeter
from greensel.models import Classifier, SoftmaxConfig, SoftmaxRegressor, softmax_fit


class TableClassifier(Classifier):
    """Looks up the label by the instance id stored in feature 0"""

    def __init__(self, labels, confidence: float = 0.9):
        self.labels = list(labels)
        self.confidence_value = confidence
        self.calls = 0

    @property
    def is_fitted(self) -> bool:
        return True

    def fit(self, train):
        return self

    def predict_one(self, x):
        self.calls += 1
        return self.labels[int(x[0])], self.confidence_value

    def to_document(self):
        raise NotImplementedError

    @classmethod
    def _from_document(cls, document):
        raise NotImplementedError


def ids_dataset(labels, num_classes: int = 3, offset: int = 0) -> Dataset:
    n = len(labels)
    return Dataset(
        features=np.arange(n, dtype=float)[:, None],
        labels=labels,
        num_classes=num_classes,
        indices=np.arange(n) + offset,
    )


# ids 0..19 scaled into [0, 1)
ID_ROUTER = SoftmaxConfig(learning_rate=1.0, input_scale=20.0)


def chain_of(first_labels, second_labels) -> ModelChain:
    return ModelChain(
        models=(TableClassifier(first_labels), TableClassifier(second_labels)),
        declared_costs=(1.0, 100.0),
    )


class TestOracleLabels(unittest.TestCase):
    def test_oracle_rule(self):
        """Tests lowest correct model, fallthrough and the no-model-correct fallback"""

        val = ids_dataset([0, 1, 2])
        chain = chain_of([0, 0, 0], [1, 1, 1])

        oracle = router.build_oracle_labels(chain, val)

        self.assertEqual(oracle.labels, (1, 2, 1))
        self.assertEqual(oracle.counts(), {1: 2, 2: 1})

    def test_oracle_invariants_hold(self):
        """Tests every oracle label against brute-force re-prediction"""

        rng = np.random.default_rng(1)
        labels = rng.integers(0, 3, size=40)
        chain = chain_of(rng.integers(0, 3, size=40).tolist(), rng.integers(0, 3, size=40).tolist())
        val = ids_dataset(labels.tolist())

        oracle = router.build_oracle_labels(chain, val)
        for (x, y), label in zip(val, oracle.labels):
            correct = [model.predict(x) == y for model in chain.models]
            if label > 1:
                self.assertTrue(correct[label - 1])
                self.assertFalse(any(correct[: label - 1]))
            else:
                self.assertTrue(correct[0] or not any(correct))

    def test_labels_must_be_in_range(self):
        with self.assertRaises(ValueError):
            router.OracleLabels(labels=(1, 3), k=2)

    def test_coverage(self):
        val = ids_dataset([0, 1, 2, 0])
        chain = chain_of([0, 0, 0, 1], [1, 1, 1, 1])
        self.assertEqual(router.coverage(chain, val), 0.5)


class TestTrainRouter(unittest.TestCase):
    def test_perfect_first_model_gives_constant_router(self):
        """Tests if a single oracle class yields a router that always picks model 1"""

        val = ids_dataset([0, 1, 2, 0])
        chain = chain_of([0, 1, 2, 0], [1, 1, 1, 1])

        trained = router.train_router(chain, val)

        for x in np.linspace(-50, 50, 11):
            self.assertEqual(trained.select(np.array([x])), 1)

    def test_router_learns_separable_routes(self):
        """Tests if the router imitates an oracle that is a threshold on the features"""

        labels = [0] * 20
        val = ids_dataset(labels, offset=100)
        chain = chain_of([0] * 10 + [1] * 10, [0] * 20)

        trained = router.train_router(chain, val, ID_ROUTER)

        self.assertEqual(trained.select_batch(val.features).tolist(), [1] * 10 + [2] * 10)

    def test_validation_overlap_is_rejected(self):
        val = ids_dataset([0, 1, 2, 0, 1])
        chain = chain_of([0] * 5, [1] * 5)
        chain.models[0].training_indices_ = np.array([3, 4, 9])

        with self.assertRaises(ValueError):
            router.train_router(chain, val)

    def test_disjoint_validation_is_accepted(self):
        val = ids_dataset([0, 1, 2, 0, 1], offset=10)
        chain = chain_of([0] * 5, [1] * 5)
        chain.models[0].training_indices_ = np.arange(10)

        router.check_validation_isolation(chain, val)

    def test_custom_learner(self):
        val = ids_dataset([0, 1, 0, 1])
        chain = chain_of([0, 0, 0, 0], [1, 1, 1, 1])
        learner = SoftmaxRegressor()

        trained = router.train_router(chain, val, learner=learner)

        self.assertIs(trained.learner, learner)
        self.assertEqual(learner.training_indices_.tolist(), val.indices.tolist())


class TestRoutePredict(unittest.TestCase):
    def setUp(self):
        self.test = ids_dataset([0, 1, 0, 1, 1])
        self.chain = chain_of([0] * 5, [1] * 5)

    def constant_router(self, route_class: int) -> router.RouterModel:
        learner = softmax_fit(np.zeros((3, 1)), [route_class] * 3)
        return router.RouterModel(learner, self.chain)

    def test_only_the_selected_model_runs(self):
        outcome = router.route_predict(self.constant_router(0), self.test.features[0])

        self.assertEqual(outcome.models_invoked, (1,))
        self.assertEqual(outcome.prediction.model_index, 1)
        self.assertEqual([model.calls for model in self.chain.models], [1, 0])

    def test_last_model_selected(self):
        outcome = router.route_predict(self.constant_router(1), self.test.features[0])

        self.assertEqual(outcome.models_invoked, (2,))
        self.assertEqual(self.chain.models[0].calls, 0)

    def test_constant_router_energy(self):
        """Tests if routing everything to model 1 costs n * c1 plus n router decisions"""

        meter = ModeledMeter(self.chain.cost_model(router_cost=0.5), clock=frozen_clock)
        metrics = router.route_evaluate(self.constant_router(0), self.test, meter, clock=frozen_clock)

        self.assertAlmostEqual(metrics.total_energy_uwh, 5 * 1.0 + 5 * 0.5)
        self.assertEqual(metrics.fraction_per_model, (1.0, 0.0))
        self.assertEqual(metrics.invocations, (5, 0))
        self.assertAlmostEqual(metrics.accuracy, 0.4)

    def test_route_outside_chain(self):
        learner = softmax_fit(np.zeros((3, 1)), [2, 2, 2])
        with self.assertRaises(ValueError):
            router.RouterModel(learner, self.chain).select(np.zeros(1))

    def test_oracle_router_reaches_coverage(self):
        """Tests if routing with the test-set oracle scores exactly the chain coverage"""

        test = ids_dataset([0, 1, 2, 0, 2, 1])
        chain = chain_of([0, 0, 0, 1, 2, 2], [1, 1, 1, 1, 1, 1])
        oracle = router.OracleRouter(chain, test)

        metrics = router.route_evaluate(oracle, test, ModeledMeter(chain.cost_model()))

        self.assertAlmostEqual(metrics.accuracy, router.coverage(chain, test))
        self.assertAlmostEqual(metrics.accuracy, 4 / 6)

    def test_oracle_router_needs_row(self):
        oracle = router.OracleRouter(self.chain, self.test)
        with self.assertRaises(ValueError):
            oracle.select(self.test.features[0])


class TestRouterDocuments(unittest.TestCase):
    def setUp(self):
        self.val = ids_dataset([0] * 20)
        self.chain = chain_of([0] * 10 + [1] * 10, [0] * 20)
        self.trained = router.train_router(self.chain, self.val, ID_ROUTER)

    def test_round_trip_keeps_decisions(self):
        with tempfile.TemporaryDirectory() as directory:
            filename = os.path.join(directory, "router.json")
            self.trained.save(filename)
            restored = router.RouterModel.load(filename, self.chain)

        np.testing.assert_array_equal(
            restored.select_batch(self.val.features), self.trained.select_batch(self.val.features)
        )

    def test_document_records_chain(self):
        document = self.trained.to_document()

        self.assertEqual(document["kind"], "router")
        self.assertEqual(document["declared_costs"], [1.0, 100.0])
        self.assertEqual(document["chain_kinds"], ["TableClassifier", "TableClassifier"])

    def test_wrong_chain_is_rejected(self):
        other = ModelChain(
            models=(SoftmaxRegressor(), TableClassifier([0])), declared_costs=(1.0, 2.0)
        )
        with self.assertRaises(ValueError):
            router.RouterModel.from_json(self.trained.to_json(), other)

    def test_wrong_kind_is_rejected(self):
        with self.assertRaises(ValueError):
            router.RouterModel.from_document({"kind": "tree", "format_version": 1}, self.chain)


if __name__ == "__main__":
    unittest.main()
