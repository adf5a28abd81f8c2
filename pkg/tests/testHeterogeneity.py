import json
import unittest
import warnings

import numpy as np

from xferbo.benchmarks.cases import constrained_toy_case, TOY_CONSTRAINTS
from xferbo.data.doe import Doe, VariableMeta, ConstraintMeta, lhs_sample
from xferbo.surrogates.kpls import train_kpls
from xferbo.transforms.heterogeneity import align_source_doe, alignment_map, build_masked_source_gp, \
    select_source_kernel, match_constraints, alignment_report
from xferbo.utils import XferBOAlignmentException, BroadConstraintMatchWarning
from tests.dummy_data import unit_box, SEED, FAST_GP


def _source_doe(variables, f, n=20, seed=SEED):
    inputs = lhs_sample(variables, n, seed)
    return Doe(variables, inputs, [f(x) for x in inputs])


class TestAlignment(unittest.TestCase):

    def setUp(self) -> None:
        self.target_variables = [VariableMeta('x1', -5, 5), VariableMeta('x2', -5, 5)]

    def test_IdenticalVariables(self):
        source = _source_doe(self.target_variables, lambda x: x[0] + x[1])
        aligned, mask = align_source_doe(source, self.target_variables)
        self.assertTrue(np.array_equal(source.inputs, aligned.inputs))
        self.assertFalse(np.any(mask))
        self.assertTrue(alignment_map(source.variables, self.target_variables).homogeneous)

    def test_ExtraSourceVariableDropped(self):
        variables = self.target_variables + [VariableMeta('x16', 0, 1)]
        source = _source_doe(variables, lambda x: x[0] + x[1] + x[2])
        aligned, mask = align_source_doe(source, self.target_variables)
        self.assertListEqual(['x1', 'x2'], aligned.variable_names)
        self.assertTrue(np.array_equal(source.inputs[:, :2], aligned.inputs))
        self.assertFalse(np.any(mask))
        self.assertListEqual(['x16'], alignment_map(variables, self.target_variables).dropped_source_variables)

    def test_MissingVariableMasked(self):
        source = _source_doe([VariableMeta('x1', -5, 5)], lambda x: x[0] ** 2)
        aligned, mask = align_source_doe(source, [VariableMeta('x1', -5, 5), VariableMeta('x2', 0, 4)])
        self.assertListEqual([False, True], mask.tolist())
        self.assertTrue(np.all(aligned.inputs[:, 1] == 2.0))
        self.assertEqual({'x2'}, set(aligned.masked_variables))
        self.assertTrue(np.array_equal(source.objective, aligned.objective))

    def test_ReorderedAndCaseInsensitive(self):
        source = _source_doe([VariableMeta('X2', -5, 5), VariableMeta('x1', -5, 5)], lambda x: x[0] - x[1])
        aligned, mask = align_source_doe(source, self.target_variables)
        self.assertTrue(np.array_equal(source.inputs[:, ::-1], aligned.inputs))
        self.assertFalse(np.any(mask))

    def test_UnionOfBounds(self):
        source = _source_doe([VariableMeta('x1', -8, 2)], lambda x: x[0])
        aligned, _ = align_source_doe(source, self.target_variables)
        self.assertEqual((-8.0, 5.0), (aligned.variables[0].lower, aligned.variables[0].upper))

    def test_Idempotent(self):
        source = _source_doe([VariableMeta('x1', -5, 5), VariableMeta('x3', 0, 1)], lambda x: x[0] + x[1])
        aligned, mask = align_source_doe(source, self.target_variables)
        again, mask_again = align_source_doe(aligned, self.target_variables)
        self.assertTrue(np.array_equal(aligned.inputs, again.inputs))
        self.assertTrue(np.array_equal(mask, mask_again))
        self.assertEqual(aligned.variables, again.variables)

    def test_NothingShared(self):
        source = _source_doe([VariableMeta('span', 0, 1)], lambda x: x[0])
        with self.assertRaises(XferBOAlignmentException):
            align_source_doe(source, self.target_variables)

    def test_KernelSelection(self):
        homogeneous = alignment_map(self.target_variables, self.target_variables)
        heterogeneous = alignment_map(self.target_variables[:1], self.target_variables)
        self.assertEqual('SE', select_source_kernel(homogeneous))
        self.assertEqual('KPLS', select_source_kernel(heterogeneous))
        self.assertEqual('KPLS', select_source_kernel(homogeneous, 'kpls'))
        with self.assertRaises(ValueError):
            select_source_kernel(homogeneous, 'matern')


class TestMaskedSourceModel(unittest.TestCase):

    def setUp(self) -> None:
        self.target_variables = unit_box(2)
        self.source = _source_doe(unit_box(1), lambda x: x[0], n=20)
        self.aligned, self.mask = align_source_doe(self.source, self.target_variables)

    def test_MaskedWeightsAreZero(self):
        model = build_masked_source_gp(self.aligned, self.mask, config=FAST_GP)
        self.assertEqual('KPLS', model.kind)
        self.assertTrue(np.all(model.kernel.weights[:, 1] == 0.0))

    def test_PredictionIgnoresMaskedCoordinate(self):
        model = build_masked_source_gp(self.aligned, config=FAST_GP)
        rng = np.random.default_rng(SEED)
        x = rng.random((50, 2))
        base = model.predict_many(x)
        for shift in (-0.4, 0.3, 1e3):
            moved = x.copy()
            moved[:, 1] = np.clip(moved[:, 1] + shift, 0, 1) if abs(shift) < 1 else shift
            with self.subTest(shift=shift):
                for a, b in zip(base, model.predict_many(moved)):
                    self.assertTrue(np.array_equal(a, b))

    def test_MatchesLowerDimensionalModel(self):
        masked = build_masked_source_gp(self.aligned, self.mask, config=FAST_GP)
        reduced = train_kpls(self.source.variables, self.source.inputs, self.source.objective, config=FAST_GP)
        u = np.random.default_rng(SEED).random(50)
        full_mean, full_sd = masked.predict_many(np.column_stack([u, np.full(50, 0.5)]))
        reduced_mean, reduced_sd = reduced.predict_many(u.reshape(-1, 1))
        np.testing.assert_allclose(reduced_mean, full_mean, rtol=0, atol=1e-8)
        np.testing.assert_allclose(reduced_sd, full_sd, rtol=0, atol=1e-8)

    def test_NoMaskMatchesPlainKpls(self):
        doe = _source_doe(unit_box(2), lambda x: np.sin(3 * x[0]) + x[1] ** 2)
        aligned, mask = align_source_doe(doe, unit_box(2))
        masked = build_masked_source_gp(aligned, mask, config=FAST_GP)
        plain = train_kpls(doe.variables, doe.inputs, doe.objective, config=FAST_GP)
        self.assertTrue(np.array_equal(masked.kernel.weights, plain.kernel.weights))
        self.assertTrue(np.array_equal(masked.kernel.thetas, plain.kernel.thetas))

    def test_ToyCaseSecondSource(self):
        case = constrained_toy_case()
        source = case.sources[1].generate(SEED, 20)
        aligned, mask = align_source_doe(source, case.target.variables)
        model = build_masked_source_gp(aligned, mask, config=FAST_GP)
        x = np.array([[1.0, -4.0], [1.0, 0.0], [1.0, 4.5]])
        mean, _ = model.predict_many(x)
        self.assertEqual(mean[0], mean[1])
        self.assertEqual(mean[1], mean[2])


class TestConstraintMatching(unittest.TestCase):

    def setUp(self) -> None:
        case = constrained_toy_case()
        self.sources = [s.spec for s in case.sources]

    def test_NameTier(self):
        match = match_constraints([TOY_CONSTRAINTS[0]], self.sources)[0]
        self.assertEqual('name', match.tier)
        self.assertListEqual([(0, 0), (1, 0)], match.pairs)

    def test_NameIsCaseInsensitive(self):
        match = match_constraints([ConstraintMeta('bfl', 'other')], self.sources)[0]
        self.assertEqual('name', match.tier)

    def test_CategoryTier(self):
        match = match_constraints([TOY_CONSTRAINTS[1]], self.sources)[0]
        self.assertEqual('category', match.tier)
        self.assertListEqual([(0, 1), (1, 1)], match.pairs)

    def test_BroadTier(self):
        with self.assertWarns(BroadConstraintMatchWarning):
            match = match_constraints([ConstraintMeta('noise', 'environmental')], self.sources)[0]
        self.assertEqual('broad', match.tier)
        self.assertListEqual([(0, 0), (0, 1), (1, 0), (1, 1)], match.pairs)

    def test_NoSourceConstraints(self):
        with warnings.catch_warnings():
            warnings.simplefilter('error')
            match = match_constraints([ConstraintMeta('noise', 'environmental')], [])[0]
        self.assertIsNone(match.tier)
        self.assertListEqual([], match.pairs)

    def test_Report(self):
        case = constrained_toy_case()
        maps = [alignment_map(s.variables, case.target.variables) for s in self.sources]
        matches = match_constraints(TOY_CONSTRAINTS, self.sources)
        report = json.loads(json.dumps(alignment_report(maps, matches, self.sources, ['KPLS', 'KPLS'])))
        self.assertListEqual(['x3'], report['sources'][0]['dropped'])
        self.assertListEqual(['x2'], report['sources'][1]['masked'])
        self.assertEqual('category', report['constraints'][1]['tier'])
        self.assertListEqual(['wing_span', 'gear_height'], [p['name'] for p in report['constraints'][1]['pairs']])


if __name__ == '__main__':
    unittest.main()
