# SPDX-License-Identifier: Apache-2.0.
import math
import unittest
from fractions import Fraction
from unittest import TestCase

import numpy as np

from qglab import IndexWindowError, ValidationError
from qglab.estimates import (ADVECTION, PRODUCT, HypothesisError, RatioStats, StrichartzCheck, advection_hypotheses,
                             check_advection_product, check_commutator_estimate, check_product_estimate,
                             check_strichartz, commutator_hypotheses, product_hypotheses, stability, upsample)
from qglab.spectral import (EnsembleSpec, Grid, SpectralField, forward_transform, gaussian_ensemble,
                            inverse_transform, plancherel_norm)


def ensemble(n=32, count=3, seed=17, band=None):
    grid = Grid(n)
    spec = EnsembleSpec(count=count, seed=seed, band=band or (grid.j_lo + 1, grid.j_nyquist))
    return [forward_transform(f) for f in gaussian_ensemble(spec, grid)]


class HypothesisTest(TestCase):

    def test_product_window(self):
        self.assertEqual(Fraction(-1, 5), product_hypotheses(2, 0.4, 0.4))
        with self.assertRaises(HypothesisError) as cm:
            product_hypotheses(2, 1, Fraction(1, 2))
        self.assertEqual("s1 < 2(2/p - 1/2) = 1 (s1 = 1)", cm.exception.bound)
        self.assertTrue(str(cm.exception).startswith("estimate hypothesis violated: requires "))
        with self.assertRaises(HypothesisError):
            product_hypotheses(2, Fraction(-1, 2), Fraction(1, 4))
        with self.assertRaises(HypothesisError):
            product_hypotheses(5, 0, Fraction(1, 10))

    def test_advection_window(self):
        self.assertEqual(Fraction(2, 3), advection_hypotheses(3, 1))
        with self.assertRaises(HypothesisError):
            advection_hypotheses(3, Fraction(2, 3))
        with self.assertRaises(HypothesisError):
            advection_hypotheses(3, Fraction(4, 3))

    def test_commutator_window(self):
        self.assertEqual(Fraction(23, 30), commutator_hypotheses(3, Fraction(21, 20), Fraction(1, 20)))
        with self.assertRaises(HypothesisError):
            commutator_hypotheses(3, Fraction(1, 4), Fraction(1, 20))
        with self.assertRaises(HypothesisError):
            commutator_hypotheses(3, Fraction(21, 20), Fraction(1, 2))

    def test_hypothesis_error_is_window_error(self):
        self.assertTrue(issubclass(HypothesisError, IndexWindowError))
        self.assertTrue(issubclass(HypothesisError, ValidationError))


class RatioStatsTest(TestCase):

    def test_statistics(self):
        stats = RatioStats(PRODUCT, {'p': '2'}, [1.0, 3.0, 2.0], degenerate=1)
        self.assertEqual(3, stats.n_samples)
        self.assertEqual(3.0, stats.ratio_max)
        self.assertEqual(2.0, stats.ratio_median)
        self.assertTrue(stats.all_finite)
        row = stats.csv_row()
        self.assertEqual((PRODUCT, 'p=2', 3, 3.0), row[:4])
        self.assertEqual('', row[-1])

    def test_empty(self):
        stats = RatioStats(PRODUCT, {})
        self.assertTrue(math.isnan(stats.ratio_max))
        self.assertEqual(0, stats.n_samples)

    def test_merge(self):
        a = RatioStats(PRODUCT, {'p': '2'}, [1.0], degenerate=1)
        b = RatioStats(PRODUCT, {'p': '2'}, [2.0, 0.5])
        merged = a.merge(b)
        self.assertEqual(3, merged.n_samples)
        self.assertEqual(1, merged.degenerate)
        with self.assertRaises(ValidationError):
            a.merge(RatioStats(ADVECTION, {'p': '2'}, [1.0]))


class ProductCheckTest(TestCase):

    def test_ratios_are_finite(self):
        stats = check_product_estimate(ensemble(), 2, 2, Fraction(2, 5), Fraction(2, 5), threads=2)
        self.assertEqual(6, stats.n_samples)
        self.assertTrue(stats.all_finite)
        self.assertEqual(0, stats.degenerate)
        self.assertEqual('2/5', stats.params['s1'])

    def test_degenerate_pairs(self):
        members = ensemble(count=1)
        members.append(SpectralField.zeros(members[0].grid))
        stats = check_product_estimate(members, 2, 2, Fraction(2, 5), Fraction(2, 5))
        self.assertEqual(1, stats.n_samples)
        self.assertEqual(2, stats.degenerate)

    def test_scale_invariance(self):
        members = ensemble(count=2)
        one = check_product_estimate(members, 3, 2, Fraction(1, 5), Fraction(1, 5))
        three = check_product_estimate([3.0 * F for F in members], 3, 2, Fraction(1, 5), Fraction(1, 5))
        self.assertTrue(np.allclose(one.ratios, three.ratios, rtol=1e-10, atol=0.0))

    def test_hypotheses_checked_first(self):
        with self.assertRaises(HypothesisError):
            check_product_estimate(ensemble(count=1), 2, 2, 1, 0)

    def test_empty_ensemble(self):
        with self.assertRaises(ValidationError):
            check_product_estimate([], 2, 2, Fraction(2, 5), Fraction(2, 5))


class AdvectionAndCommutatorTest(TestCase):

    def test_advection_ratios(self):
        stats = check_advection_product(ensemble(count=2), 3, 1)
        self.assertEqual(4, stats.n_samples)
        self.assertTrue(stats.all_finite)

    def test_commutator_ratios(self):
        stats = check_commutator_estimate(ensemble(count=2), 3, Fraction(21, 20), Fraction(1, 20))
        self.assertEqual(4, stats.n_samples)
        self.assertTrue(stats.all_finite)


class StrichartzCheckTest(TestCase):

    def test_window(self):
        with self.assertRaises(IndexWindowError):
            check_strichartz(ensemble(count=1), 1, 1.0, 3, Fraction(12, 5), 0, [1.0, 10.0])
        with self.assertRaises(ValidationError):
            check_strichartz(ensemble(count=1), 1, 1.0, 3, 3, 0, [1.0])

    def test_small_scan(self):
        check = check_strichartz(ensemble(count=2), 1, 1.0, 3, 3, 0, [1.0, 10.0], kappa_grid=[0.5, 1.0])
        self.assertEqual(4, check.stats.n_samples)
        self.assertTrue(check.stats.all_finite)
        self.assertTrue(math.isfinite(check.A_exponent))
        self.assertTrue(math.isfinite(check.kappa_exponent))
        self.assertEqual(Fraction(0), check.predicted_A_exponent)
        self.assertEqual(Fraction(-1, 3), check.predicted_kappa_exponent)
        rows = check.exponent_rows()
        self.assertEqual(['A', 'kappa'], [row[0] for row in rows])
        self.assertEqual(('0', '-1/3'), (rows[0][2], rows[1][2]))
        self.assertIn(rows[1][3], ('true', 'false'))

    def test_exponent_rows_without_kappa_grid(self):
        check = StrichartzCheck(A_exponent=0.1, kappa_exponent=None, predicted_A_exponent=Fraction(0),
                                predicted_kappa_exponent=Fraction(-1, 3))
        self.assertEqual([('A', 0.1, '0', 'true')], check.exponent_rows())
        check.A_exponent = -0.2
        self.assertEqual('false', check.exponent_rows()[0][3])


class ResolutionTest(TestCase):

    def test_upsample_is_the_same_polynomial(self):
        F = ensemble(n=16, count=1)[0]
        fine = upsample(F, 32)
        self.assertEqual(Grid(32, F.grid.length), fine.grid)
        self.assertAlmostEqual(plancherel_norm(F), plancherel_norm(fine), delta=1e-12 * plancherel_norm(F))
        coarse_samples = inverse_transform(F).samples
        fine_samples = inverse_transform(fine).samples[::2, ::2]
        self.assertLessEqual(np.max(np.abs(coarse_samples - fine_samples)), 1e-12 * np.max(np.abs(coarse_samples)))
        with self.assertRaises(ValidationError):
            upsample(F, 8)

    def test_stability(self):
        # products of the lowest shell are resolved exactly on both grids
        members = ensemble(n=16, count=2, band=(-4, -4))
        stats = stability(check_product_estimate, members, 32, 2, 2, Fraction(2, 5), Fraction(2, 5))
        self.assertEqual(3, stats.n_samples)
        self.assertIsNotNone(stats.stability)
        self.assertGreaterEqual(stats.stability, 1.0)
        self.assertLess(stats.stability, 2.0)
        self.assertEqual(stats.stability, stats.csv_row()[-1])


if __name__ == '__main__':
    unittest.main()
