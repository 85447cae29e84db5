# SPDX-License-Identifier: Apache-2.0.
import math
import os
import unittest
from fractions import Fraction
from unittest import TestCase

import numpy as np

from qglab import IndexWindowError, ValidationError
from qglab.littlewood_paley import block_project
from qglab.operators import PhysParams
from qglab.propagator import (PropagatorSpec, apply_propagator, check_strichartz_window, dispersive_decay_curve,
                              geometric_times, heat_block_decay, linear_trajectory, propagator_multiplier,
                              strichartz_exponents, strichartz_norm, strichartz_violation)
from qglab.spectral import (BandError, EnsembleSpec, Grid, SpectralField, forward_transform, gaussian_bump,
                            gaussian_ensemble, inverse_transform)

LONG_TESTS = os.getenv('QGLAB_LONG_TESTS')


def ensemble_field(n=64, seed=12, band=None):
    grid = Grid(n)
    if band is None:
        band = (grid.j_lo + 1, grid.j_nyquist)
    spec = EnsembleSpec(count=1, seed=seed, band=band)
    return forward_transform(gaussian_ensemble(spec, grid)[0])


def pure_mode(grid, k1, k2=0):
    coeffs = np.zeros((grid.n, grid.n), dtype=complex)
    coeffs[k1, k2] = 1.0
    coeffs[-k1, -k2] = 1.0
    return SpectralField(grid, coeffs)


class PropagatorTest(TestCase):

    def test_negative_time(self):
        with self.assertRaises(ValidationError):
            propagator_multiplier(Grid(16), PhysParams(1.0, 1.0), -0.1)

    def test_identity_at_zero(self):
        F = ensemble_field()
        out = apply_propagator(F, PhysParams(0.5, 2.0, 3.0), 0.0)
        self.assertLessEqual((out - F).max_abs(), 1e-15 * F.max_abs())

    def test_semigroup(self):
        F = ensemble_field()
        params = PhysParams(0.7, 0.3, 4.0)
        twice = apply_propagator(apply_propagator(F, params, 0.4), params, 0.9)
        once = apply_propagator(F, params, 1.3)
        self.assertLessEqual((twice - once).max_abs(), 1e-12 * F.max_abs())

    def test_l2_non_increasing(self):
        F = ensemble_field()
        params = PhysParams(1.0, 0.5, 10.0)
        norms = [apply_propagator(F, params, t).l2_norm() for t in np.linspace(0.0, 5.0, 11)]
        self.assertTrue(all(b <= a * (1.0 + 1e-14) for a, b in zip(norms, norms[1:])))

    def test_single_mode_heat_factor(self):
        grid = Grid(32, length=2.0 * math.pi)
        F = pure_mode(grid, 3, 4)
        out = apply_propagator(F, PhysParams(1.0, 0.2, 0.0), 2.0)
        self.assertAlmostEqual(math.exp(-0.2 * 2.0 * 5.0), out.coeffs[3, 4].real, delta=1e-14)

    def test_dispersion_is_unitary(self):
        F = ensemble_field()
        params = PhysParams(1.0, 1e-300, 25.0)
        for t in (0.1, 1.0, 10.0):
            out = apply_propagator(F, params, t)
            self.assertAlmostEqual(F.l2_norm(), out.l2_norm(), delta=1e-12 * F.l2_norm())

    def test_linear_trajectory(self):
        F = ensemble_field()
        params = PhysParams(1.0, 0.5, 2.0)
        times = [0.0, 0.5, 1.0]
        traj = linear_trajectory(F, PropagatorSpec(params, times), block_p=(2.0, 4.0), threads=2)
        self.assertEqual(3, len(traj))
        self.assertTrue(np.array_equal(np.array(times), traj.times))
        expected = apply_propagator(F, params, 1.0)
        self.assertLessEqual((traj.final() - expected).max_abs(), 1e-15 * F.max_abs())
        pruned = linear_trajectory(F, PropagatorSpec(params, times), keep_fields=False)
        self.assertFalse(pruned.has_fields)
        self.assertTrue(np.allclose(traj.block_table(2.0), pruned.block_table(2.0)))

    def test_bad_schedule(self):
        params = PhysParams(1.0, 1.0)
        for times in ([], [0.0, 0.0], [-1.0, 1.0], [0.0, float('inf')]):
            with self.assertRaises(ValidationError):
                PropagatorSpec(params, times)


class DecayTest(TestCase):

    def test_curve_depends_on_At(self):
        grid = Grid(64)
        bump = gaussian_bump(grid, width=2.0)
        times = np.array([0.0, 0.5, 1.0, 2.0])
        slow = dispersive_decay_curve(bump, 1.0, times)
        fast = dispersive_decay_curve(bump, 2.0, times / 2.0)
        self.assertTrue(np.allclose(slow.sup_norms, fast.sup_norms, rtol=1e-12, atol=0.0))
        self.assertAlmostEqual(slow.wrap_time, 2.0 * fast.wrap_time)

    def test_no_dispersion(self):
        grid = Grid(64)
        curve = dispersive_decay_curve(gaussian_bump(grid, width=2.0), 0.0, [0.0, 1.0, 10.0])
        self.assertEqual(math.inf, curve.wrap_time)
        self.assertTrue(np.all(curve.valid))
        self.assertTrue(np.allclose(curve.sup_norms, curve.sup_norms[0]))
        self.assertEqual(3, len(curve.rows()))
        with self.assertRaises(ValidationError):
            curve.fit_slope()

    def test_negligible_band(self):
        grid = Grid(64)
        with self.assertRaises(ValidationError):
            dispersive_decay_curve(inverse_transform(pure_mode(grid, 1)), 1.0, [0.0, 1.0])

    def test_wrap_time_invalidates(self):
        grid = Grid(64)
        bump = gaussian_bump(grid, width=2.0)
        first = dispersive_decay_curve(bump, 1.0, [0.0])
        with self.assertLogs('qglab.propagator', level='WARNING'):
            curve = dispersive_decay_curve(bump, 1.0, [0.0, 2.0 * first.wrap_time])
        self.assertEqual([True, False], list(curve.valid))

    @unittest.skipUnless(LONG_TESTS, 'set QGLAB_LONG_TESTS to run the desk-scale decay experiment')
    def test_sup_norm_decay_rate(self):
        grid = Grid(1024, length=64.0 * math.pi)
        bump = gaussian_bump(grid, width=2.0)
        times = geometric_times(0.1, 1e3, ratio=1.1)
        curve = dispersive_decay_curve(bump, 1.0, times)
        slope = curve.fit_slope(10.0, 1e3)
        self.assertGreaterEqual(slope, -0.6)
        self.assertLessEqual(slope, -0.4)


class HeatDecayTest(TestCase):

    def test_rate_within_shell(self):
        F = ensemble_field(n=128)
        for j in (-1, 0, 1):
            curve = heat_block_decay(F, j, kappa=1.0, alpha=1.0, times=np.linspace(0.0, 2.0, 11))
            self.assertTrue(curve.within_shell, "rate {} outside [{}, {}]".format(
                curve.rate, curve.rate_low, curve.rate_high))
            self.assertEqual(11, len(curve.rows()))

    def test_pure_mode_rate(self):
        grid = Grid(64, length=2.0 * math.pi)
        F = pure_mode(grid, 4)
        curve = heat_block_decay(F, 2, kappa=0.5, alpha=0.5, times=[0.0, 0.5, 1.0])
        self.assertAlmostEqual(0.5 * 2.0, curve.rate, delta=1e-10)

    def test_empty_block(self):
        grid = Grid(64, length=2.0 * math.pi)
        with self.assertRaises(BandError):
            heat_block_decay(pure_mode(grid, 4), 0, 1.0, 1.0, [0.0, 1.0])


class StrichartzWindowTest(TestCase):

    def test_window_oracles(self):
        self.assertIsNone(strichartz_violation(1, 3, 3))
        self.assertIsNone(strichartz_violation(1, 3, Fraction(36, 13)))
        self.assertIn('1/r <', strichartz_violation(1, 3, Fraction(12, 5)))
        self.assertIn('1/r >=', strichartz_violation(1, 3, 4))
        self.assertIn('p > 2', strichartz_violation(1, 2, 3))
        self.assertIn('r < inf', strichartz_violation(1, 3, float('inf')))
        with self.assertRaises(IndexWindowError) as cm:
            check_strichartz_window(1, 3, Fraction(12, 5))
        self.assertIn('5/12', cm.exception.bound)

    def test_exponents(self):
        a_exp, kappa_exp = strichartz_exponents(1, 3, Fraction(36, 13))
        self.assertEqual(Fraction(-1, 36), a_exp)
        self.assertEqual(Fraction(-1, 3), kappa_exp)
        self.assertEqual((Fraction(0), Fraction(-1, 3)), strichartz_exponents(1, 3, 3))

    def test_geometric_times(self):
        times = geometric_times(0.01, 1.0)
        self.assertEqual(0.0, times[0])
        self.assertEqual(1.0, times[-1])
        self.assertTrue(np.all(np.diff(times) > 0))
        self.assertAlmostEqual(0.01, times[1])
        with self.assertRaises(ValidationError):
            geometric_times(1.0, 0.5)


class StrichartzNormTest(TestCase):

    def test_zero_field(self):
        result = strichartz_norm(SpectralField.zeros(Grid(32)), PhysParams(1.0, 1.0, 5.0), 3, 3, 0.0)
        self.assertEqual(0.0, result.norm)
        self.assertTrue(result.admissible)

    def test_homogeneity(self):
        F = ensemble_field(n=64)
        params = PhysParams(1.0, 1.0, 20.0)
        one = strichartz_norm(F, params, 3, 3, 0.0, t_max=5.0, t_min=1e-4)
        two = strichartz_norm(2.0 * F, params, 3, 3, 0.0, t_max=5.0, t_min=1e-4)
        self.assertAlmostEqual(2.0 * one.norm, two.norm, delta=1e-10 * two.norm)
        self.assertEqual(9, len(one.csv_row()))

    def test_inadmissible_is_flagged(self):
        F = ensemble_field(n=32)
        with self.assertLogs('qglab.propagator', level='WARNING'):
            result = strichartz_norm(F, PhysParams(1.0, 1.0, 1.0), Fraction(12, 5), 3, 0.0, t_max=2.0)
        self.assertFalse(result.admissible)
        self.assertGreater(result.norm, 0.0)

    def test_single_shell_closed_form(self):
        # L^r(0, inf; L^2) of a block decaying at exp(-kappa |xi|^alpha t)
        grid = Grid(64)
        F = pure_mode(grid, 16)
        block = block_project(F, 0).l2_norm()
        with self.assertLogs('qglab.propagator', level='WARNING'):
            result = strichartz_norm(F, PhysParams(1.0, 1.0, 5.0), 2, 2, 0.0, ratio=1.05)
        expected = block * (2.0 * 1.0) ** -0.5
        self.assertAlmostEqual(expected, result.norm, delta=0.01 * expected)

    @unittest.skipUnless(LONG_TESTS, 'set QGLAB_LONG_TESTS to run the A-scaling regression')
    def test_A_scaling_exponent(self):
        F = ensemble_field(n=128, band=(-1, 1))
        p, r = 3, Fraction(36, 13)
        predicted, _ = strichartz_exponents(1, p, r)
        As = [1e2, 1e3, 1e4]
        norms = [strichartz_norm(F, PhysParams(1.0, 1.0, A), r, p, 0.0).norm for A in As]
        slope, _ = np.polyfit(np.log(As), np.log(norms), 1)
        self.assertAlmostEqual(float(predicted), slope, delta=0.15 * abs(float(predicted)) + 0.02)

    @unittest.skipUnless(LONG_TESTS, 'set QGLAB_LONG_TESTS to run the kappa-scaling regression')
    def test_kappa_scaling_exponent(self):
        F = ensemble_field(n=128, band=(-1, 1))
        p, r = 3, Fraction(36, 13)
        _, predicted = strichartz_exponents(1, p, r)
        kappas = [0.5, 1.0, 2.0]
        norms = [strichartz_norm(F, PhysParams(1.0, kappa, 1e3), r, p, 0.0).norm for kappa in kappas]
        slope, _ = np.polyfit(np.log(kappas), np.log(norms), 1)
        self.assertAlmostEqual(float(predicted), slope, delta=0.15 * abs(float(predicted)))


if __name__ == '__main__':
    unittest.main()
