# SPDX-License-Identifier: Apache-2.0.
import unittest
from unittest import TestCase

import numpy as np

from qglab.operators import dealiased_product
from qglab.paraproduct import (bony_pieces, bony_reconstruct, commutator, commutator_decomposition,
                               para_low_high, remainder)
from qglab.spectral import (EnsembleSpec, FieldError, Grid, SpectralField, forward_transform,
                            gaussian_ensemble)


def ensemble(grid, seed, count=2):
    spec = EnsembleSpec(count=count, seed=seed, band=(grid.j_lo + 1, grid.j_nyquist))
    return [forward_transform(f) for f in gaussian_ensemble(spec, grid)]


def pure_mode(grid, k1):
    coeffs = np.zeros((grid.n, grid.n), dtype=complex)
    coeffs[k1, 0] = 1.0
    coeffs[-k1, 0] = 1.0
    return SpectralField(grid, coeffs)


class BonyTest(TestCase):

    def test_reconstruction(self):
        f, g = ensemble(Grid(128), seed=21)
        total, residual = bony_reconstruct(f, g)
        self.assertLessEqual(residual, 1e-8)
        self.assertLessEqual((total - dealiased_product(f, g)).max_abs(), 1e-8 * total.max_abs())

    def test_low_high_pure_modes(self):
        grid = Grid(128)
        low = pure_mode(grid, 2)
        high = pure_mode(grid, 32)
        product = dealiased_product(low, high)
        t_fg, r_fg, t_gf = bony_pieces(low, high)
        scale = product.max_abs()
        self.assertLessEqual((t_fg - product).max_abs(), 1e-10 * scale)
        self.assertLessEqual(r_fg.max_abs(), 1e-10 * scale)
        self.assertLessEqual(t_gf.max_abs(), 1e-10 * scale)
        self.assertLessEqual((para_low_high(low, high) - t_fg).max_abs(), 1e-12 * scale)
        self.assertLessEqual(remainder(low, high).max_abs(), 1e-10 * scale)

    def test_grid_mismatch(self):
        f = ensemble(Grid(32), seed=1, count=1)[0]
        g = ensemble(Grid(64), seed=1, count=1)[0]
        with self.assertRaises(FieldError):
            bony_pieces(f, g)
        with self.assertRaises(FieldError):
            commutator(f, 0, g)


class CommutatorTest(TestCase):

    def test_decomposition_sums_to_commutator(self):
        grid = Grid(128)
        f, g = ensemble(grid, seed=33)
        for j in (-2, 0, 2):
            direct = commutator(f, j, g)
            pieces = commutator_decomposition(f, j, g)
            scale = dealiased_product(f, g).max_abs()
            self.assertLessEqual((pieces.total() - direct).max_abs(), 1e-8 * scale)

    def test_zero_multiplier_commutes(self):
        grid = Grid(128)
        g = ensemble(grid, seed=4, count=1)[0]
        zero = SpectralField.zeros(grid)
        self.assertEqual(0.0, commutator(zero, 0, g).max_abs())


if __name__ == '__main__':
    unittest.main()
