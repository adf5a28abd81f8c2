import tempfile
import unittest

import numpy as np

from pathlib import Path

from xferbo.benchmarks.cases import bohachevsky_target, bohachevsky_s1
from xferbo.data.doe import Doe, VariableMeta, ConstraintMeta, ProblemSpec, lhs_sample, uniform_sample, \
    evaluate_doe, CONSTRAINT_CATEGORIES
from xferbo.data.utils import to_unit, from_unit, within_bounds, standardize
from xferbo.utils import XferBOBlackboxException
from tests.dummy_data import unit_box, sphere, create_constrained_spec, SEED


class TestVariableMeta(unittest.TestCase):

    def test_BoundsValidated(self):
        with self.assertRaises(ValueError):
            VariableMeta('x', 1, 1)
        with self.assertRaises(ValueError):
            VariableMeta('x', 0, np.inf)
        with self.assertRaises(ValueError):
            VariableMeta('', 0, 1)

    def test_Midpoint(self):
        self.assertEqual(2.5, VariableMeta('x', -5, 10).midpoint)

    def test_ConstraintCategories(self):
        for category in CONSTRAINT_CATEGORIES:
            with self.subTest(category=category):
                self.assertEqual(category, ConstraintMeta('c', category).category)
        with self.assertRaises(ValueError):
            ConstraintMeta('c', 'aerodynamics')


class TestSampling(unittest.TestCase):

    def test_SinglePointInBounds(self):
        for seed in range(10):
            with self.subTest(seed=seed):
                point = lhs_sample([VariableMeta('x', 0, 1)], 1, seed)
                self.assertEqual((1, 1), point.shape)
                self.assertTrue(0 <= point[0, 0] <= 1)

    def test_OnePointPerStratum(self):
        for k in range(1, 51):
            for seed in range(5):
                with self.subTest(k=k, seed=seed):
                    points = lhs_sample(unit_box(3, 0, 10), k, seed)
                    strata = np.minimum(np.floor(points / 10 * k), k - 1).astype(int)
                    for d in range(3):
                        self.assertListEqual(list(range(k)), sorted(strata[:, d].tolist()))

    def test_StratifiedEveryDimension(self):
        points = lhs_sample(unit_box(3, -2, 2), 20, SEED)
        for d in range(3):
            with self.subTest(dim=d):
                strata = np.minimum(np.floor((points[:, d] + 2) / 4 * 20), 19).astype(int)
                self.assertEqual(20, len(set(strata.tolist())))

    def test_Deterministic(self):
        self.assertTrue(np.array_equal(lhs_sample(unit_box(2), 50, 3), lhs_sample(unit_box(2), 50, 3)))
        self.assertFalse(np.array_equal(lhs_sample(unit_box(2), 50, 3), lhs_sample(unit_box(2), 50, 4)))
        self.assertTrue(np.array_equal(uniform_sample(unit_box(2), 5, 3), uniform_sample(unit_box(2), 5, 3)))

    def test_UniformInBounds(self):
        points = uniform_sample(unit_box(4, -5, 5), 100, SEED)
        self.assertTrue(np.all(within_bounds(points, unit_box(4, -5, 5))))

    def test_BadCount(self):
        with self.assertRaises(ValueError):
            lhs_sample(unit_box(2), 0)


class TestEvaluateDoe(unittest.TestCase):

    def setUp(self) -> None:
        self.target = ProblemSpec(unit_box(2, -5, 5), bohachevsky_target, name='f_T')
        self.source = ProblemSpec(unit_box(2, -5, 5), bohachevsky_s1, name='f_S1')

    def test_BohachevskyAtOrigin(self):
        self.assertAlmostEqual(0.1, evaluate_doe(self.target, [[0, 0]]).objective[0], places=12)
        self.assertAlmostEqual(0.0, evaluate_doe(self.source, [[0, 0]]).objective[0], places=12)

    def test_ConstraintColumns(self):
        spec = ProblemSpec(unit_box(2), sphere, [(ConstraintMeta('a'), lambda x: x[0] - 0.5),
                                                 (ConstraintMeta('b', 'operational'), lambda x: x[1] - 0.5)])
        doe = evaluate_doe(spec, [[0.1, 0.2], [0.6, 0.4], [0.3, 0.9]])
        self.assertEqual(3, doe.N)
        self.assertEqual((3, 2), doe.constraint_values.shape)
        self.assertListEqual([True, False, False], doe.feasible_mask().tolist())
        self.assertEqual(0, doe.best_feasible_index())

    def test_ThreadedRowOrder(self):
        spec = ProblemSpec(unit_box(1), lambda x: float(x[0]), reentrant=True)
        inputs = np.linspace(0, 1, 37).reshape(-1, 1)
        doe = evaluate_doe(spec, inputs, threads=4)
        self.assertTrue(np.array_equal(inputs.reshape(-1), doe.objective))

    def test_FailureCarriesRow(self):
        def brittle(x):
            if x[0] > 0.5:
                raise RuntimeError("mesh failure")
            return 0.0

        spec = ProblemSpec(unit_box(1), brittle)
        with self.assertRaises(XferBOBlackboxException) as context:
            evaluate_doe(spec, [[0.1], [0.2], [0.9]])
        self.assertEqual(2, context.exception.row)

    def test_OutOfBoundsRejected(self):
        with self.assertRaises(ValueError):
            evaluate_doe(self.target, [[0, 6]])


class TestDoe(unittest.TestCase):

    def setUp(self) -> None:
        spec = create_constrained_spec()
        self.doe = evaluate_doe(spec, [[0.5, 0.5], [-0.5, 0.0], [0.3, -0.1]])

    def test_ReadOnly(self):
        with self.assertRaises(ValueError):
            self.doe.inputs[0, 0] = 1.0

    def test_ColumnLookup(self):
        self.assertTrue(np.array_equal(self.doe.objective, self.doe.column('objective')))
        self.assertTrue(np.array_equal(self.doe.column('LOWER_X1'), self.doe.column(0)))
        with self.assertRaises(KeyError):
            self.doe.column('missing')

    def test_AppendReturnsNewDoe(self):
        grown = self.doe.append([0.9, 0.9], 1.62, [-0.7])
        self.assertEqual(3, self.doe.N)
        self.assertEqual(4, grown.N)
        self.assertEqual(1.62, grown.objective[-1])
        with self.assertRaises(ValueError):
            self.doe.append([0.9, 0.9], 1.62, [])

    def test_BestFeasible(self):
        # Rows 0 and 2 satisfy x1 >= 0.2, row 2 is lower
        self.assertEqual(2, self.doe.best_feasible_index())

    def test_Head(self):
        self.assertEqual(2, self.doe.head(2).N)

    def test_CsvKeepsValues(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'doe.csv'
            self.doe.to_csv(path)
            loaded = Doe.from_csv(path, variables=self.doe.variables, constraints=self.doe.constraint_metas)
        self.assertTrue(np.array_equal(self.doe.inputs, loaded.inputs))
        self.assertTrue(np.array_equal(self.doe.constraint_values, loaded.constraint_values))
        self.assertEqual(self.doe.constraint_metas, loaded.constraint_metas)


class TestDataUtils(unittest.TestCase):

    def test_UnitRoundTrip(self):
        x = np.array([[-5.0, 2.0], [5.0, 3.0]])
        lower, upper = np.array([-5.0, 2.0]), np.array([5.0, 3.0])
        self.assertTrue(np.allclose(x, from_unit(to_unit(x, lower, upper), lower, upper)))

    def test_StandardizeConstant(self):
        z, mean, std = standardize([3.0, 3.0, 3.0])
        self.assertEqual(3.0, mean)
        self.assertEqual(1.0, std)
        self.assertTrue(np.array_equal(np.zeros(3), z))


if __name__ == '__main__':
    unittest.main()
