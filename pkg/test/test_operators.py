# SPDX-License-Identifier: Apache-2.0.
import math
import unittest
from unittest import TestCase

import numpy as np

from qglab import ValidationError
from qglab.operators import (PhysParams, advection, dealiased_product, fractional_laplacian, inner_product,
                             perp_velocity, project, rescale_field, rescale_params, riesz, spectral_divergence)
from qglab.spectral import (EnsembleSpec, FieldError, Grid, RealField, SpectralField, forward_transform,
                            gaussian_ensemble, inverse_transform, lp_norm)


def ensemble_field(n=64, seed=5):
    grid = Grid(n)
    spec = EnsembleSpec(count=1, seed=seed, band=(grid.j_lo + 1, grid.j_nyquist))
    return forward_transform(gaussian_ensemble(spec, grid)[0])


def cosine(grid, k1, k2=0):
    x1, x2 = grid.coordinates()
    scale = 2.0 * math.pi / grid.length
    return RealField(grid, np.cos(scale * (k1 * x1 + k2 * x2)), check_mean=False)


class PhysParamsTest(TestCase):

    def test_validation(self):
        for alpha in (0.0, -1.0, 2.5):
            with self.assertRaises(ValidationError):
                PhysParams(alpha, 1.0)
        for kappa in (0.0, -0.1, float('inf')):
            with self.assertRaises(ValidationError):
                PhysParams(1.0, kappa)
        with self.assertRaises(ValidationError):
            PhysParams(1.0, 1.0, float('nan'))

    def test_window_flag(self):
        self.assertTrue(PhysParams(1.0, 1.0).weak_dissipation)
        self.assertFalse(PhysParams(1.5, 1.0).weak_dissipation)

    def test_rescale_params(self):
        params = PhysParams(0.5, 0.3, 2.0)
        scaled = rescale_params(params, 4.0)
        self.assertEqual(0.3, scaled.kappa)
        self.assertAlmostEqual(4.0, scaled.A)


class RieszTest(TestCase):

    def test_sum_of_squares_is_minus_identity(self):
        F = ensemble_field()
        total = riesz(riesz(F, 1), 1) + riesz(riesz(F, 2), 2)
        self.assertLessEqual((total + F).max_abs(), 1e-12 * F.max_abs())

    def test_velocity_is_divergence_free(self):
        F = ensemble_field()
        u1, u2 = perp_velocity(F)
        div = spectral_divergence(u1, u2)
        self.assertLessEqual(div.max_abs(), 1e-12 * F.max_abs())

    def test_riesz_is_skew(self):
        F = ensemble_field()
        norm2 = F.l2_norm() ** 2
        self.assertLessEqual(abs(inner_product(riesz(F, 1), F)), 1e-12 * norm2)
        self.assertLessEqual(abs(inner_product(riesz(F, 2), F)), 1e-12 * norm2)

    def test_velocity_preserves_l2(self):
        F = ensemble_field()
        u1, u2 = perp_velocity(F)
        self.assertAlmostEqual(F.l2_norm(), math.hypot(u1.l2_norm(), u2.l2_norm()), delta=1e-12 * F.l2_norm())

    def test_bad_axis(self):
        with self.assertRaises(ValidationError):
            riesz(ensemble_field(n=16), 3)


class MultiplierTest(TestCase):

    def test_fractional_laplacian_single_mode(self):
        grid = Grid(16, length=2.0 * math.pi)
        f = cosine(grid, 3)
        out = inverse_transform(fractional_laplacian(forward_transform(f), 0.5))
        self.assertLessEqual(np.max(np.abs(out.samples - math.sqrt(3.0) * f.samples)), 1e-12)

    def test_fractional_laplacian_order_zero(self):
        F = ensemble_field(n=32)
        self.assertLessEqual((fractional_laplacian(F, 0.0) - F).max_abs(), 1e-12 * F.max_abs())
        with self.assertRaises(ValidationError):
            fractional_laplacian(F, -1.0)

    def test_nyquist_zeroed(self):
        grid = Grid(8)
        coeffs = np.zeros((8, 8), dtype=complex)
        coeffs[4, 1] = 1.0
        coeffs[1, 4] = 1.0
        out = fractional_laplacian(SpectralField(grid, coeffs), 1.0)
        self.assertEqual(0.0, out.max_abs())

    def test_unknown_dealias_rule(self):
        grid = Grid(8)
        with self.assertRaises(ValidationError):
            project(grid, np.zeros((8, 8), dtype=complex), 'three-halves')


class ProductTest(TestCase):

    def test_product_of_cosines(self):
        grid = Grid(16, length=2.0 * math.pi)
        F = forward_transform(cosine(grid, 1))
        out = inverse_transform(dealiased_product(F, F))
        expected = 0.5 * cosine(grid, 2).samples
        self.assertLessEqual(np.max(np.abs(out.samples - expected)), 1e-12)

    def test_product_grid_mismatch(self):
        with self.assertRaises(FieldError):
            dealiased_product(ensemble_field(n=16), ensemble_field(n=32))

    def test_advection_is_energy_neutral(self):
        F = ensemble_field()
        adv = advection(F)
        scale = adv.l2_norm() * F.l2_norm()
        self.assertLessEqual(abs(inner_product(adv, F)), 1e-10 * scale)

    def test_advection_output_is_dealiased(self):
        F = ensemble_field()
        adv = advection(F)
        outside = ~F.grid.dealias_mask
        self.assertEqual(0.0, float(np.max(np.abs(adv.coeffs[outside]))))

    def test_single_mode_is_steady(self):
        # u is parallel to the level sets of a single Fourier mode
        grid = Grid(16, length=2.0 * math.pi)
        F = forward_transform(cosine(grid, 2, 1))
        self.assertLessEqual(advection(F).max_abs(), 1e-10)


class RescaleTest(TestCase):

    def test_rescale_field(self):
        f = inverse_transform(ensemble_field(n=16))
        g = rescale_field(f, 2.0, 0.5)
        self.assertEqual(Grid(16, length=f.grid.length / 2.0), g.grid)
        self.assertTrue(np.allclose(g.samples, f.samples * 2.0 ** -0.5))
        self.assertAlmostEqual(lp_norm(f, float('inf')) * 2.0 ** -0.5, lp_norm(g, float('inf')))
        with self.assertRaises(ValidationError):
            rescale_field(f, 0.0, 1.0)


if __name__ == '__main__':
    unittest.main()
