# SPDX-License-Identifier: Apache-2.0.

"""
Bony decomposition fg = T_f g + R(f, g) + T_g f and the commutator [f, Delta_j] g.

All sums run over the resolved dyadic window of the grid. Products are formed in physical
space and pass through the same dealiasing rule as :func:`qglab.operators.dealiased_product`,
so the three pieces add up to that product.
"""

import logging
from typing import Dict, Tuple

import numpy as np

from qglab import ModeledClass
from qglab.littlewood_paley import block_arrays, block_project
from qglab.operators import DEALIAS_TWO_THIRDS, dealiased_product, project
from qglab.spectral import FieldError, Grid, SpectralField, fft2, plancherel_norm

logger = logging.getLogger(__name__)

Blocks = Dict[int, np.ndarray]


def _check_grids(f: SpectralField, g: SpectralField) -> Grid:
    if f.grid != g.grid:
        raise FieldError("grid mismatch: {} vs {}".format(f.grid, g.grid))
    return f.grid


def _to_spectral(grid: Grid, samples: np.ndarray, dealias: str) -> SpectralField:
    return SpectralField(grid, project(grid, fft2(samples), dealias))


def _low_high(f_blocks: Blocks, g_blocks: Blocks, shape) -> np.ndarray:
    # sum over l of (S_l f)(Delta_l g) with S_l = sum over k <= l - 3
    total = np.zeros(shape)
    low = np.zeros(shape)
    for l in sorted(g_blocks):
        k = l - 3
        if k in f_blocks:
            low = low + f_blocks[k]
        total += low * g_blocks[l]
    return total


def _diagonal(f_blocks: Blocks, g_blocks: Blocks, shape) -> np.ndarray:
    total = np.zeros(shape)
    for l in sorted(g_blocks):
        for k in range(l - 2, l + 3):
            if k in f_blocks:
                total += f_blocks[k] * g_blocks[l]
    return total


def para_low_high(f: SpectralField, g: SpectralField, dealias: str = DEALIAS_TWO_THIRDS) -> SpectralField:
    """
    Paraproduct T_f g = sum over l of S_l f * Delta_l g.

    Raises:
        FieldError: if f and g live on different grids.
    """
    grid = _check_grids(f, g)
    shape = (grid.n, grid.n)
    return _to_spectral(grid, _low_high(block_arrays(f), block_arrays(g), shape), dealias)


def remainder(f: SpectralField, g: SpectralField, dealias: str = DEALIAS_TWO_THIRDS) -> SpectralField:
    """
    Remainder R(f, g) = sum over l, |k - l| <= 2 of Delta_k f * Delta_l g.
    """
    grid = _check_grids(f, g)
    shape = (grid.n, grid.n)
    return _to_spectral(grid, _diagonal(block_arrays(f), block_arrays(g), shape), dealias)


def bony_pieces(f: SpectralField, g: SpectralField,
                dealias: str = DEALIAS_TWO_THIRDS) -> Tuple[SpectralField, SpectralField, SpectralField]:
    """(T_f g, R(f, g), T_g f), sharing one set of block transforms."""
    grid = _check_grids(f, g)
    shape = (grid.n, grid.n)
    fb = block_arrays(f)
    gb = block_arrays(g)
    return (_to_spectral(grid, _low_high(fb, gb, shape), dealias),
            _to_spectral(grid, _diagonal(fb, gb, shape), dealias),
            _to_spectral(grid, _low_high(gb, fb, shape), dealias))


def bony_reconstruct(f: SpectralField, g: SpectralField,
                     dealias: str = DEALIAS_TWO_THIRDS) -> Tuple[SpectralField, float]:
    """
    Sum T_f g + R(f, g) + T_g f and its relative L2 residual against the dealiased product fg.

    When fg vanishes the absolute residual is returned.
    """
    t_fg, r_fg, t_gf = bony_pieces(f, g, dealias)
    total = t_fg + r_fg + t_gf
    direct = dealiased_product(f, g, dealias)
    scale = plancherel_norm(direct)
    err = plancherel_norm(total - direct)
    return total, (err / scale if scale > 0 else err)


def commutator(f: SpectralField, j: int, g: SpectralField, dealias: str = DEALIAS_TWO_THIRDS) -> SpectralField:
    """
    [f, Delta_j] g = f * Delta_j g - Delta_j (f * g).
    """
    _check_grids(f, g)
    return dealiased_product(f, block_project(g, j), dealias) - block_project(dealiased_product(f, g, dealias), j)


class CommutatorPieces(ModeledClass):
    """
    The five terms whose sum is [f, Delta_j] g:

        [T_f, Delta_j] g + R(f, Delta_j g) + T_{Delta_j g} f - Delta_j R(f, g) - Delta_j T_g f

    Attributes:
        para_commutator (SpectralField): [T_f, Delta_j] g.
        remainder_block (SpectralField): R(f, Delta_j g).
        para_block (SpectralField): T_{Delta_j g} f.
        block_remainder (SpectralField): Delta_j R(f, g), entering with a minus sign.
        block_para (SpectralField): Delta_j T_g f, entering with a minus sign.
    """

    __slots__ = ['para_commutator', 'remainder_block', 'para_block', 'block_remainder', 'block_para']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    def total(self) -> SpectralField:
        return (self.para_commutator + self.remainder_block + self.para_block
                - self.block_remainder - self.block_para)


def commutator_decomposition(f: SpectralField, j: int, g: SpectralField,
                             dealias: str = DEALIAS_TWO_THIRDS) -> CommutatorPieces:
    """
    Split [f, Delta_j] g into its paraproduct pieces.
    """
    _check_grids(f, g)
    g_j = block_project(g, j)
    t_f_gj, r_f_gj, t_gj_f = bony_pieces(f, g_j, dealias)
    t_fg, r_fg, t_gf = bony_pieces(f, g, dealias)
    return CommutatorPieces(
        para_commutator=t_f_gj - block_project(t_fg, j),
        remainder_block=r_f_gj,
        para_block=t_gj_f,
        block_remainder=block_project(r_fg, j),
        block_para=block_project(t_gf, j))
