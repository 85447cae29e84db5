# SPDX-License-Identifier: Apache-2.0.

"""
Time-stamped field samples with per-dyadic-block L^p norm tables.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from qglab import ModeledClass, ValidationError
from qglab.littlewood_paley import block_lp_norms
from qglab.spectral import FieldError, Grid, RealField, SpectralField, inverse_transform

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ('t', 'l2', 'hs', 'hs_minus1', 'dt', 'max_u')


class BlowupFlag(ModeledClass):
    """
    Numerical loss of regularity detected during a run.

    Attributes:
        reason (str): ``'non-finite'`` or ``'norm-growth'``.
        time (float): Last time at which the state was valid.
    """

    __slots__ = ['reason', 'time']

    def __init__(self, reason: str, time: float):
        self.reason = reason
        self.time = time


class Trajectory(ModeledClass):
    """
    Samples theta(t_k) of one run on a fixed grid.

    Fields are kept as Fourier coefficients until :meth:`prune` drops them; the block tables
    ``||Delta_j theta(t_k)||_{L^p}`` for every p in ``block_p`` survive pruning.

    Args:
        grid: Grid of every sample.
        block_p: Exponents whose block tables are recorded on append.
        provenance: Free-form key/value pairs (config hash, seed).

    Attributes:
        grid (Grid): Grid of every sample.
        block_p (Tuple[float]): Exponents recorded on append.
        provenance (dict): Origin of the run.
        blowup (Optional[BlowupFlag]): Set when the run stopped early.
        diagnostics (List[tuple]): One ``DIAGNOSTIC_COLUMNS`` row per sample, when the producer records them.
    """

    __slots__ = ['grid', 'block_p', 'provenance', 'blowup', 'diagnostics', '_times', '_coeffs', '_tables']

    def __init__(self, grid: Grid, block_p: Iterable[float] = (2.0,), provenance: Optional[dict] = None):
        self.grid = grid
        self.block_p = tuple(float(p) for p in block_p)
        self.provenance = dict(provenance or {})
        self.blowup = None  # type: Optional[BlowupFlag]
        self.diagnostics = []  # type: List[tuple]
        self._times = []  # type: List[float]
        self._coeffs = []  # type: List[np.ndarray]
        self._tables = {p: [] for p in self.block_p}  # type: Dict[float, List[np.ndarray]]

    def __len__(self):
        return len(self._times)

    @property
    def times(self) -> np.ndarray:
        return np.array(self._times, dtype=np.float64)

    @property
    def dyadic_indices(self) -> range:
        return self.grid.dyadic_range

    @property
    def has_fields(self) -> bool:
        return self._coeffs is not None

    def append(self, t: float, coeffs: Optional[np.ndarray], block_norms: Optional[Dict[float, np.ndarray]] = None,
               diagnostics: Optional[tuple] = None):
        """
        Add the sample at time ``t``.

        Args:
            t: Sample time, strictly after the previous one.
            coeffs: Fourier coefficients, copied. None records the block tables only
                (the trajectory is then pruned from the start).
            block_norms: Precomputed block tables keyed by p; computed from ``coeffs`` when missing.
            diagnostics: Optional diagnostics row.

        Raises:
            ValidationError: if ``t`` does not increase.
            FieldError: on non-finite coefficients.
        """
        t = float(t)
        if self._times and not t > self._times[-1]:
            raise ValidationError("trajectory times must increase: {} after {}".format(t, self._times[-1]))
        if coeffs is None and not block_norms:
            raise ValidationError("a sample needs coefficients or block tables")
        if coeffs is not None:
            if not np.all(np.isfinite(coeffs)):
                raise FieldError("non-finite coefficients at t={}".format(t))
            if not self.has_fields:
                raise ValidationError("cannot store fields in a pruned trajectory")
        elif self.has_fields and self._coeffs:
            raise ValidationError("sample at t={} has no coefficients but earlier samples do".format(t))
        else:
            self._coeffs = None
        block_norms = dict(block_norms or {})
        missing = [p for p in self.block_p if p not in block_norms]
        if missing:
            if coeffs is None:
                raise ValidationError("missing block tables for p={}".format(missing))
            block_norms.update(block_lp_norms(SpectralField(self.grid, coeffs), missing))

        self._times.append(t)
        if coeffs is not None:
            self._coeffs.append(np.array(coeffs, dtype=np.complex128))
        for p in self.block_p:
            self._tables[p].append(np.asarray(block_norms[p], dtype=np.float64))
        if diagnostics is not None:
            self.diagnostics.append(tuple(diagnostics))

    def coeffs(self, i: int) -> np.ndarray:
        if not self.has_fields:
            raise ValidationError("trajectory has been pruned; fields are no longer available")
        return self._coeffs[i]

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs(i))

    def real_field(self, i: int) -> RealField:
        return inverse_transform(self.field(i))

    def final(self) -> SpectralField:
        return self.field(len(self) - 1)

    def coeffs_at(self, t: float) -> np.ndarray:
        """
        Coefficients at time ``t`` by linear interpolation between stored samples.

        Raises:
            ValidationError: if ``t`` lies outside the sampled interval or fields were pruned.
        """
        times = self._times
        if not times or t < times[0] - 1e-12 or t > times[-1] * (1.0 + 1e-12) + 1e-12:
            raise ValidationError("time {} outside the sampled interval".format(t))
        i = int(np.searchsorted(times, t, side='right'))
        if i == 0:
            return self.coeffs(0)
        if i >= len(times):
            return self.coeffs(len(times) - 1)
        t0, t1 = times[i - 1], times[i]
        w = (t - t0) / (t1 - t0)
        if w == 0.0:
            return self.coeffs(i - 1)
        return (1.0 - w) * self.coeffs(i - 1) + w * self.coeffs(i)

    def block_table(self, p: float) -> np.ndarray:
        """
        ``||Delta_j theta(t_k)||_{L^p}`` as an array of shape (samples, blocks).

        Exponents that were not recorded are computed from the stored fields and cached.
        """
        p = float(p)
        if p not in self._tables:
            if not self.has_fields:
                raise ValidationError("block table for p={} was not recorded and fields were pruned".format(p))
            logger.debug("computing block table for p=%g over %d samples", p, len(self))
            self._tables[p] = [block_lp_norms(self.field(i), [p])[p] for i in range(len(self))]
            self.block_p = self.block_p + (p,)
        rows = self._tables[p]
        if not rows:
            return np.zeros((0, len(self.dyadic_indices)))
        return np.vstack(rows)

    def prune(self):
        """Drop the stored fields, keeping block tables and diagnostics. Irreversible."""
        self._coeffs = None


def difference_table(a: Trajectory, b: Trajectory, p: float) -> np.ndarray:
    """
    Block table of a - b at the shared sample times.

    Raises:
        ValidationError: if the two trajectories are not sampled identically.
    """
    if a.grid != b.grid:
        raise FieldError("grid mismatch: {} vs {}".format(a.grid, b.grid))
    if len(a) != len(b) or not np.array_equal(a.times, b.times):
        raise ValidationError("trajectories must share their sample times")
    rows = [block_lp_norms(SpectralField(a.grid, a.coeffs(i) - b.coeffs(i)), [p])[float(p)] for i in range(len(a))]
    return np.vstack(rows)


class TableTrajectory(ModeledClass):
    """
    Read-only view exposing a precomputed block table under the trajectory interface used by
    :func:`qglab.littlewood_paley.time_besov_norm`.
    """

    __slots__ = ['grid', 'times', '_p', '_table']

    def __init__(self, grid: Grid, times: Sequence[float], p: float, table: np.ndarray):
        self.grid = grid
        self.times = np.asarray(times, dtype=np.float64)
        self._p = float(p)
        self._table = table

    @property
    def dyadic_indices(self) -> range:
        return self.grid.dyadic_range

    def block_table(self, p: float) -> np.ndarray:
        if float(p) != self._p:
            raise ValidationError("table holds p={}, requested p={}".format(self._p, p))
        return self._table
