# SPDX-License-Identifier: Apache-2.0.

"""
Fourier-multiplier operators of the quasi-geostrophic equation: fractional Laplacian,
Riesz transforms, the perpendicular-Riesz velocity and the dealiased advection term.
"""

import logging
import math
from typing import Tuple

import numpy as np

from qglab import ModeledClass, ValidationError
from qglab.spectral import (FieldError, Grid, RealField, SpectralField, fft2, ifft2_real)

logger = logging.getLogger(__name__)

DEALIAS_TWO_THIRDS = 'two-thirds'
DEALIAS_NONE = 'none'
DEALIAS_RULES = (DEALIAS_TWO_THIRDS, DEALIAS_NONE)


class PhysParams(ModeledClass):
    """
    Physical parameters (alpha, kappa, A).

    Args:
        alpha: Dissipation order in (0, 2].
        kappa: Dissipation coefficient, > 0.
        A: Dispersion parameter; 0 gives the non-dispersive baseline.

    Attributes:
        weak_dissipation (bool): True when 0 < alpha <= 1, the weak-dissipation range
            the global-regularity results cover.
    """

    __slots__ = ['alpha', 'kappa', 'A']

    def __init__(self, alpha: float, kappa: float, A: float = 0.0):
        alpha = float(alpha)
        kappa = float(kappa)
        A = float(A)
        if not (0.0 < alpha <= 2.0):
            raise ValidationError("alpha must lie in (0, 2], got {}".format(alpha))
        if not (kappa > 0.0 and math.isfinite(kappa)):
            raise ValidationError("kappa must be positive and finite, got {}".format(kappa))
        if not math.isfinite(A):
            raise ValidationError("A must be finite, got {}".format(A))
        self.alpha = alpha
        self.kappa = kappa
        self.A = A

    @property
    def weak_dissipation(self) -> bool:
        return self.alpha <= 1.0

    def with_A(self, A: float) -> 'PhysParams':
        return PhysParams(self.alpha, self.kappa, A)

    def with_kappa(self, kappa: float) -> 'PhysParams':
        return PhysParams(self.alpha, kappa, self.A)

    def __eq__(self, other):
        return isinstance(other, PhysParams) and \
            (self.alpha, self.kappa, self.A) == (other.alpha, other.kappa, other.A)

    def __hash__(self):
        return hash((self.alpha, self.kappa, self.A))


def fractional_laplacian(F: SpectralField, alpha: float) -> SpectralField:
    """
    (-Laplacian)^(alpha/2): multiply coefficients by |xi|^alpha.

    Raises:
        ValidationError: if alpha < 0.
    """
    if alpha < 0:
        raise ValidationError("fractional_laplacian needs alpha >= 0, got {}".format(alpha))
    grid = F.grid
    out = F.coeffs * grid.xi_abs ** alpha
    return SpectralField(grid, grid.finish(out))


def riesz_multiplier(grid: Grid, k: int) -> np.ndarray:
    """The Riesz symbol i xi_k / |xi| (0 at xi = 0)."""
    if k == 1:
        xi = grid.xi1
    elif k == 2:
        xi = grid.xi2
    else:
        raise ValidationError("Riesz axis must be 1 or 2, got {}".format(k))
    return 1j * grid.unit_multiplier(xi)


def riesz(F: SpectralField, k: int) -> SpectralField:
    """
    Riesz transform R_k f = d/dx_k (-Laplacian)^(-1/2) f, symbol i xi_k / |xi|.
    """
    grid = F.grid
    out = F.coeffs * riesz_multiplier(grid, k)
    return SpectralField(grid, grid.finish(out))


def perp_velocity(theta: SpectralField) -> Tuple[SpectralField, SpectralField]:
    """
    Velocity u = R^perp theta = (-R_2 theta, R_1 theta).
    """
    r2 = riesz(theta, 2)
    r1 = riesz(theta, 1)
    return -r2, r1


def spectral_divergence(u1: SpectralField, u2: SpectralField) -> SpectralField:
    """i xi_1 u1^ + i xi_2 u2^."""
    grid = u1.grid
    if u2.grid != grid:
        raise FieldError("grid mismatch between velocity components")
    return SpectralField(grid, 1j * grid.xi1 * u1.coeffs + 1j * grid.xi2 * u2.coeffs)


def project(grid: Grid, coeffs: np.ndarray, dealias: str = DEALIAS_TWO_THIRDS) -> np.ndarray:
    """
    Apply the dealiasing rule in place and zero the Nyquist row/column and mean.
    """
    if dealias == DEALIAS_TWO_THIRDS:
        coeffs *= grid.dealias_mask
    elif dealias != DEALIAS_NONE:
        raise ValidationError("unknown dealias rule '{}', expected one of {}".format(dealias, DEALIAS_RULES))
    return grid.finish(coeffs)


def dealiased_product(F: SpectralField, G: SpectralField, dealias: str = DEALIAS_TWO_THIRDS) -> SpectralField:
    """
    Pseudo-spectral product f*g: multiply in physical space, transform back, dealias, drop the mean.
    """
    if F.grid != G.grid:
        raise FieldError("grid mismatch: {} vs {}".format(F.grid, G.grid))
    grid = F.grid
    coeffs = fft2(ifft2_real(F.coeffs) * ifft2_real(G.coeffs))
    return SpectralField(grid, project(grid, coeffs, dealias))


def advection_coeffs(grid: Grid, theta_hat: np.ndarray, u1: np.ndarray, u2: np.ndarray,
                     dealias: str = DEALIAS_TWO_THIRDS) -> np.ndarray:
    """
    Dealiased coefficients of u . grad theta for physical-space velocity (u1, u2).

    This is the array kernel shared by :func:`advection` and the time steppers.
    """
    d1 = ifft2_real(1j * grid.xi1 * theta_hat)
    d2 = ifft2_real(1j * grid.xi2 * theta_hat)
    return project(grid, fft2(u1 * d1 + u2 * d2), dealias)


def velocity_arrays(grid: Grid, theta_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Physical-space velocity (u1, u2) = (-R_2 theta, R_1 theta) from coefficients."""
    u1 = ifft2_real(-theta_hat * riesz_multiplier(grid, 2) * grid.keep_mask)
    u2 = ifft2_real(theta_hat * riesz_multiplier(grid, 1) * grid.keep_mask)
    return u1, u2


def advection(theta: SpectralField, dealias: str = DEALIAS_TWO_THIRDS) -> SpectralField:
    """
    Dealiased pseudo-spectral u . grad theta with u = R^perp theta.
    """
    grid = theta.grid
    u1, u2 = velocity_arrays(grid, theta.coeffs)
    return SpectralField(grid, advection_coeffs(grid, theta.coeffs, u1, u2, dealias))


def inner_product(F: SpectralField, G: SpectralField) -> float:
    """
    Real L2 inner product <f, g> through Plancherel, L^2 / n^4 * Re sum F conj(G).
    """
    if F.grid != G.grid:
        raise FieldError("grid mismatch: {} vs {}".format(F.grid, G.grid))
    grid = F.grid
    return float(np.real(np.vdot(G.coeffs, F.coeffs))) * grid.length ** 2 / grid.n ** 4


def rescale_params(params: PhysParams, lam: float) -> PhysParams:
    """
    Parameters of the rescaled problem theta_lam(t, x) = lam^(alpha-1) theta(lam^alpha t, lam x):
    kappa is unchanged and A_lam = lam^alpha A.
    """
    return PhysParams(params.alpha, params.kappa, lam ** params.alpha * params.A)


def rescale_field(f: RealField, lam: float, alpha: float) -> RealField:
    """
    lam^(alpha-1) f(lam x) realized on the grid of length L/lam: the samples are
    the same points of the original torus, multiplied by lam^(alpha-1).
    """
    if lam <= 0:
        raise ValidationError("scaling factor must be positive, got {}".format(lam))
    grid = Grid(f.grid.n, f.grid.length / lam)
    return RealField(grid, f.samples * lam ** (alpha - 1.0), check_mean=False)
