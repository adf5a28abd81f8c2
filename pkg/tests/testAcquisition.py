import unittest

import numpy as np

from scipy.stats import norm

from xferbo.data.doe import lhs_sample
from xferbo.optim.acquisition import AcquisitionConfig, expected_improvement, maximize_constrained
from xferbo.utils import XferBOConfigException
from tests.dummy_data import unit_box, SEED


class _Bowl(object):
    """Surrogate stand-in: quadratic mean around `center` and a constant deviation."""
    def __init__(self, center, sd=0.1):
        self.center = np.asarray(center, dtype=float)
        self.sd = sd

    def predict_many(self, x):
        x = np.atleast_2d(x)
        return np.sum((x - self.center) ** 2, axis=1), np.full(len(x), self.sd)


class _Plane(object):
    """Constraint stand-in with mean offset + slope . x and no uncertainty."""
    def __init__(self, slope, offset):
        self.slope = np.asarray(slope, dtype=float)
        self.offset = offset

    def predict_many(self, x):
        x = np.atleast_2d(x)
        return x @ self.slope + self.offset, np.zeros(len(x))


class TestExpectedImprovement(unittest.TestCase):

    def test_KnownPointHasNoImprovement(self):
        self.assertEqual(0.0, expected_improvement(1.3, 0.0, 1.3))

    def test_ZeroScore(self):
        self.assertAlmostEqual(0.398942, expected_improvement(2.0, 1.0, 2.0), places=6)

    def test_DeterministicImprovement(self):
        self.assertEqual(0.5, expected_improvement(1.0, 0.0, 1.5))
        self.assertEqual(0.0, expected_improvement(2.0, 1e-15, 1.5))

    def test_MatchesMonteCarlo(self):
        rng = np.random.default_rng(SEED)
        # Stratified standard normal draws
        z = norm.ppf((np.arange(1_000_000) + 0.5) / 1_000_000)
        for i in range(20):
            mean, sd, y_min = rng.normal(), rng.uniform(0.05, 2.0), rng.normal()
            with self.subTest(instance=i):
                monte_carlo = np.mean(np.maximum(y_min - (mean + sd * z), 0.0))
                self.assertAlmostEqual(monte_carlo, expected_improvement(mean, sd, y_min), delta=1e-3)

    def test_NonNegativeAndMonotoneInSd(self):
        sds = np.linspace(0, 3, 61)
        for mean in np.linspace(-2, 2, 21):
            ei = expected_improvement(np.full(len(sds), mean), sds, 0.0)
            with self.subTest(mean=mean):
                self.assertTrue(np.all(ei >= 0))
                if mean <= 0:
                    self.assertTrue(np.all(np.diff(ei) >= -1e-12))

    def test_VanishesWithSd(self):
        for mean in (0.0, 0.5, 3.0):
            self.assertLess(expected_improvement(mean, 1e-9, 0.0), 1e-8)

    def test_NegativeSdRejected(self):
        with self.assertRaises(ValueError):
            expected_improvement(0.0, -1.0, 0.0)

    def test_BadConfig(self):
        with self.assertRaises(XferBOConfigException):
            AcquisitionConfig(candidate_count=0)
        with self.assertRaises(XferBOConfigException):
            AcquisitionConfig(refine_steps=-1)


class TestMaximizeConstrained(unittest.TestCase):

    def setUp(self) -> None:
        self.variables = unit_box(2, -1, 1)
        self.config = AcquisitionConfig(candidate_count=200, refine_steps=0)
        self.candidates = lhs_sample(self.variables, 200, SEED)

    def _ei(self, surrogate, y_min):
        mean, sd = surrogate.predict_many(self.candidates)
        return expected_improvement(mean, sd, y_min)

    def test_ArgmaxCandidate(self):
        bowl = _Bowl([0.3, -0.2])
        x = maximize_constrained(bowl, [], self.variables, 0.5, self.config, seed=SEED)
        ei = self._ei(bowl, 0.5)
        self.assertTrue(np.array_equal(self.candidates[np.argmax(ei)], x))

    def test_ConstraintsFilterCandidates(self):
        bowl = _Bowl([0.3, -0.2])
        # Feasible only where x1 <= -0.5
        wall = _Plane([1.0, 0.0], 0.5)
        x = maximize_constrained(bowl, [wall], self.variables, 0.5, self.config, seed=SEED)
        feasible = self.candidates[:, 0] <= -0.5
        ei = self._ei(bowl, 0.5)
        ei[~feasible] = -np.inf
        self.assertTrue(np.array_equal(self.candidates[np.argmax(ei)], x))
        self.assertLessEqual(x[0], -0.5)

    def test_LeastViolationFallback(self):
        bowl = _Bowl([0.3, -0.2])
        impossible = [_Plane([1.0, 0.0], 2.5), _Plane([0.0, -1.0], 1.5)]
        x = maximize_constrained(bowl, impossible, self.variables, 0.5, self.config, seed=SEED)
        violation = (self.candidates[:, 0] + 2.5) + (1.5 - self.candidates[:, 1])
        self.assertTrue(np.array_equal(self.candidates[np.argmin(violation)], x))

    def test_NoFeasibleObservation(self):
        bowl = _Bowl([0.3, -0.2])
        x = maximize_constrained(bowl, [], self.variables, np.inf, self.config, seed=SEED)
        self.assertEqual((2,), x.shape)

    def test_PolishStaysInBoundsAndFeasible(self):
        config = AcquisitionConfig(candidate_count=50, refine_steps=100)
        wall = _Plane([0.0, 1.0], -0.9)
        for seed in range(10):
            bowl = _Bowl([1.5, 1.5], sd=0.3)
            x = maximize_constrained(bowl, [wall], self.variables, 1.0, config, seed=seed)
            with self.subTest(seed=seed):
                self.assertTrue(np.all(x >= -1) and np.all(x <= 1))
                self.assertLessEqual(x[1], 0.9)

    def test_PolishNeverWorse(self):
        bowl = _Bowl([0.31, -0.17], sd=0.05)
        coarse = maximize_constrained(bowl, [], self.variables, 0.05, AcquisitionConfig(30, 0), seed=SEED)
        polished = maximize_constrained(bowl, [], self.variables, 0.05, AcquisitionConfig(30, 80), seed=SEED)
        ei = [expected_improvement(*[v[0] for v in bowl.predict_many(p)], 0.05) for p in (coarse, polished)]
        self.assertGreaterEqual(ei[1], ei[0])

    def test_Reproducible(self):
        bowl = _Bowl([0.3, -0.2])
        config = AcquisitionConfig(candidate_count=100, refine_steps=30)
        first = maximize_constrained(bowl, [], self.variables, 0.2, config, seed=11)
        second = maximize_constrained(bowl, [], self.variables, 0.2, config, seed=11)
        self.assertTrue(np.array_equal(first, second))

    def test_BoundsAsArray(self):
        x = maximize_constrained(_Bowl([0.5]), [], [[0, 1]], 1.0, AcquisitionConfig(64, 0), seed=SEED)
        self.assertTrue(0 <= x[0] <= 1)


if __name__ == '__main__':
    unittest.main()
