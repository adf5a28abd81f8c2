import unittest

import numpy as np

from xferbo.metrics.criteria import discordant_tau, epanechnikov, accuracy_tau, variance_tau, CriteriaConfig, \
    probabilities_from_scores, score_and_weight, ROLE_WEIGHTS
from xferbo.surrogates.ensemble import SourceModel
from xferbo.utils import DegenerateDataWarning, NoInformativeSourceWarning, XferBOConfigException
from tests.dummy_data import brute_force_discordant, create_line_source, create_line_target, SEED


def _line(x):
    return float(np.sin(4 * x[0]) + x[0])


class TestDiscordantPairs(unittest.TestCase):

    def test_IdenticalOrdering(self):
        self.assertEqual(0.0, discordant_tau([1, 5, 7, 9], [10, 50, 70, 90]))

    def test_ReversedThreePoints(self):
        self.assertAlmostEqual(4 / 3, discordant_tau([3, 2, 1], [1, 2, 3]))

    def test_AgreesWithDoubleLoop(self):
        rng = np.random.default_rng(SEED)
        for i in range(200):
            n = int(rng.integers(2, 9))
            # Small integers so ties show up
            s, t = rng.integers(0, 4, size=n), rng.integers(0, 4, size=n)
            with self.subTest(instance=i, s=s.tolist(), t=t.tolist()):
                self.assertAlmostEqual(brute_force_discordant(s, t), discordant_tau(s, t), places=12)

    def test_NeedsTwoPoints(self):
        with self.assertRaises(ValueError):
            discordant_tau([1.0], [1.0])
        with self.assertRaises(ValueError):
            discordant_tau([1.0, 2.0], [1.0, 2.0, 3.0])


class TestEpanechnikov(unittest.TestCase):

    def test_Values(self):
        self.assertEqual(0.75, epanechnikov(0.0, 2.0))
        self.assertEqual(0.0, epanechnikov(2.0, 2.0))
        self.assertEqual(0.0, epanechnikov(4.0, 2.0))
        self.assertAlmostEqual(0.5625, epanechnikov(1.0, 2.0))

    def test_BandwidthPositive(self):
        with self.assertRaises(ValueError):
            epanechnikov(0.5, 0.0)


class TestAccuracy(unittest.TestCase):

    def test_NoError(self):
        self.assertEqual(0.0, accuracy_tau([1, 2, 3], [1, 2, 3]))

    def test_OneViolator(self):
        self.assertEqual(0.25, accuracy_tau([1, 2, 4, 9], [1, 2, 4, 8], eps_max=0.05))

    def test_AllViolators(self):
        self.assertEqual(1.0, accuracy_tau([2, 4, 6], [1, 2, 3], eps_max=0.05))

    def test_ZeroTargetUsesAbsoluteError(self):
        self.assertEqual(0.0, accuracy_tau([0.01], [0.0], eps_max=0.05))
        self.assertEqual(1.0, accuracy_tau([0.1], [0.0], eps_max=0.05))


class TestVariance(unittest.TestCase):

    def test_ZeroSds(self):
        self.assertEqual(0.0, variance_tau([0, 0, 0], [1, -2, 3]))

    def test_OneViolator(self):
        self.assertEqual(0.5, variance_tau([0.1, 1.5], [2.0, -1.0], sigma_max=0.5))

    def test_BoundaryNotCounted(self):
        self.assertEqual(0.0, variance_tau([1.0], [2.0], sigma_max=0.5))

    def test_ZeroTargetScale(self):
        with self.assertWarns(DegenerateDataWarning):
            self.assertEqual(0.0, variance_tau([1.0, 2.0], [0.0, 0.0]))


class TestCriteriaConfig(unittest.TestCase):

    def test_RolePresets(self):
        self.assertEqual(ROLE_WEIGHTS['objective'], CriteriaConfig().weights)
        constraint = CriteriaConfig(role='constraint')
        for weight in constraint.weights.values():
            self.assertAlmostEqual(1 / 3, weight)

    def test_WeightsValidated(self):
        with self.assertRaises(XferBOConfigException):
            CriteriaConfig(weights=dict(shape=0.7, variance=0.7))
        with self.assertRaises(XferBOConfigException):
            CriteriaConfig(weights=dict(shape=1.5, variance=-0.5))
        with self.assertRaises(XferBOConfigException):
            CriteriaConfig(weights=dict(smoothness=1.0))
        with self.assertRaises(XferBOConfigException):
            CriteriaConfig(role='bias')

    def test_FromDictPerRole(self):
        entry = dict(weights=dict(objective=dict(shape=1.0), constraint=dict(accuracy=1.0)), max_rel_error=0.2)
        objective = CriteriaConfig.from_dict(entry, role='objective')
        constraint = CriteriaConfig.from_dict(entry, role='constraint')
        self.assertEqual(1.0, objective.weights['shape'])
        self.assertEqual(1.0, constraint.weights['accuracy'])
        self.assertEqual(0.2, constraint.max_rel_error)

    def test_Score(self):
        config = CriteriaConfig(weights=dict(shape=0.5, variance=0.5), bandwidths=dict(shape=2.0))
        scores = config.score(0.0, 1.0, 0.5)
        self.assertEqual(0.75, scores.c_shape)
        self.assertEqual(0.0, scores.c_accuracy)
        self.assertAlmostEqual(0.5625, scores.c_variance)
        self.assertAlmostEqual(0.5 * 0.75 + 0.5 * 0.5625, scores.score)


class TestProbabilities(unittest.TestCase):

    def test_Normalized(self):
        probabilities, informative = probabilities_from_scores([0.6, 0.2])
        np.testing.assert_allclose([0.75, 0.25], probabilities)
        self.assertTrue(informative)

    def test_UniformFallback(self):
        probabilities, informative = probabilities_from_scores([0.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(np.full(4, 0.25), probabilities)
        self.assertFalse(informative)

    def test_SingleSource(self):
        target = create_line_target(_line)
        source = SourceModel(create_line_source(_line)).transferred(target.inputs, target.objective)
        probabilities = score_and_weight([source], target.inputs, target.objective)
        np.testing.assert_allclose([1.0], probabilities)
        self.assertEqual(1.0, source.probability)
        self.assertEqual(0.0, source.criteria_scores.tau_shape)

    def test_NoInformativeSourceWarns(self):
        target = create_line_target(_line)
        # Constant source: no scale, every target point beyond the accuracy threshold
        flat = SourceModel(create_line_source(lambda x: 1.0)).transferred(target.inputs, target.objective)
        config = CriteriaConfig(weights=dict(accuracy=1.0), max_rel_error=1e-6)
        with self.assertWarns(NoInformativeSourceWarning):
            probabilities = score_and_weight([flat, flat], target.inputs, target.objective, config)
        np.testing.assert_allclose([0.5, 0.5], probabilities)


if __name__ == '__main__':
    unittest.main()
