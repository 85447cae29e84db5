# SPDX-License-Identifier: Apache-2.0.

"""
Discrete dyadic decomposition {Delta_j, S_j}, homogeneous Besov and Sobolev norms, and
space-time (plain and tilde) Besov norms of sampled trajectories.

The profile is built from the mollifier e(x) = exp(-1/x): with the smooth step
h(x) = e(x) / (e(x) + e(1 - x)) and chi(r) = h(2 - r) (1 on r <= 1, 0 on r >= 2),

    phi0^(r) = chi(r) - chi(2 r),        phi_j^(xi) = phi0^(2^-j |xi|).

The sum over j telescopes to 1 for every xi != 0, and supp phi0^ is contained in [1/2, 2].
"""

import functools
import logging
import math
from typing import Dict, Sequence

import numpy as np
import scipy.integrate

from qglab import ModeledClass, ValidationError
from qglab.spectral import Grid, SpectralField, ifft2_real, lp_norm_samples

logger = logging.getLogger(__name__)

TIME_MODE_PLAIN = 'plain'
TIME_MODE_TILDE = 'tilde'


def _mollifier(x: np.ndarray) -> np.ndarray:
    positive = x > 0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def smooth_step(x) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=np.float64)
    a = _mollifier(x)
    b = _mollifier(1.0 - x)
    return np.where(x >= 1.0, 1.0, np.where(x <= 0.0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


def chi(r) -> np.ndarray:
    """Low-pass profile: 1 on r <= 1, 0 on r >= 2."""
    return smooth_step(2.0 - np.asarray(r, dtype=np.float64))


def phi0(r) -> np.ndarray:
    """Dyadic bump phi0^(r) = chi(r) - chi(2r), supported in [1/2, 2]."""
    r = np.asarray(r, dtype=np.float64)
    return chi(r) - chi(2.0 * r)


class DyadicProfile(ModeledClass):
    """
    Block multipliers phi_j^(xi) = phi0^(2^-j |xi|) for one grid.

    Immutable once built; use :func:`profile_for` to share one instance per grid.

    Args:
        grid: Grid whose lattice the multipliers are sampled on.

    Attributes:
        grid (Grid): The grid.
        j_lo (int): Lowest block index that can be nonzero.
        j_hi (int): Highest block index that can be nonzero.
    """

    __slots__ = ['grid', 'j_lo', 'j_hi', '_multipliers']

    def __init__(self, grid: Grid):
        self.grid = grid
        self.j_lo = grid.j_lo
        self.j_hi = grid.j_hi
        self._multipliers = {}  # type: Dict[int, np.ndarray]
        for j in range(self.j_lo, self.j_hi + 1):
            m = phi0(grid.xi_abs * 2.0 ** (-j))
            m[0, 0] = 0.0
            m.setflags(write=False)
            self._multipliers[j] = m

    @property
    def indices(self) -> range:
        return range(self.j_lo, self.j_hi + 1)

    def multiplier(self, j: int) -> np.ndarray:
        """phi_j^ on the lattice; all zeros for blocks outside the resolved window."""
        m = self._multipliers.get(j)
        if m is None:
            return np.zeros((self.grid.n, self.grid.n))
        return m

    def low_pass_multiplier(self, j: int) -> np.ndarray:
        """Symbol of S_j = sum over k <= j - 3 of Delta_k."""
        total = np.zeros((self.grid.n, self.grid.n))
        for k in range(self.j_lo, min(j - 3, self.j_hi) + 1):
            total = total + self._multipliers[k]
        return total

    def partition_error(self) -> float:
        """max over xi != 0 of |sum_j phi_j^(xi) - 1|."""
        total = np.zeros((self.grid.n, self.grid.n))
        for m in self._multipliers.values():
            total = total + m
        nonzero = self.grid.xi_abs > 0
        return float(np.max(np.abs(total[nonzero] - 1.0)))


@functools.lru_cache(maxsize=16)
def profile_for(grid: Grid) -> DyadicProfile:
    return DyadicProfile(grid)


def block_project(F: SpectralField, j: int) -> SpectralField:
    """
    Delta_j f = F^-1 phi_j^ F f. Blocks outside the resolved window give the zero field.
    """
    profile = profile_for(F.grid)
    return SpectralField(F.grid, F.coeffs * profile.multiplier(j))


def low_pass(F: SpectralField, j: int) -> SpectralField:
    """
    S_j f = sum over k <= j - 3 of Delta_k f.
    """
    profile = profile_for(F.grid)
    return SpectralField(F.grid, F.coeffs * profile.low_pass_multiplier(j))


def high_pass(F: SpectralField, j: int) -> SpectralField:
    """(1 - S_j) f."""
    profile = profile_for(F.grid)
    return SpectralField(F.grid, F.coeffs * (1.0 - profile.low_pass_multiplier(j)))


def _check_exponent(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value) or value < 1.0:
        raise ValidationError("{} must satisfy {} >= 1 or {} = inf, got {}".format(name, name, name, value))
    return value


class BesovSpec(ModeledClass):
    """
    Indices of the homogeneous Besov norm ||f||_{B^s_{p,q}} = || 2^(js) ||Delta_j f||_{L^p} ||_{l^q}.

    Args:
        p: Spatial integrability, >= 1 or inf.
        q: Summation exponent, >= 1 or inf.
        s: Regularity.
    """

    __slots__ = ['p', 'q', 's']

    def __init__(self, p: float, q: float, s: float):
        self.p = _check_exponent('p', p)
        self.q = _check_exponent('q', q)
        self.s = float(s)


class TimeBesovSpec(ModeledClass):
    """
    Space-time Besov norm over [0, t_max].

    Args:
        r: Time exponent, >= 1 or inf.
        besov: Spatial indices.
        t_max: Truncation horizon, > 0.
        mode: ``'plain'`` for L^r(0, t_max; B^s_{p,q}) or ``'tilde'`` for the norm with the time
            integral taken block by block inside the l^q sum.
    """

    __slots__ = ['r', 'besov', 't_max', 'mode']

    def __init__(self, r: float, besov: BesovSpec, t_max: float, mode: str = TIME_MODE_PLAIN):
        self.r = _check_exponent('r', r)
        if not t_max > 0:
            raise ValidationError("t_max must be positive, got {}".format(t_max))
        if mode not in (TIME_MODE_PLAIN, TIME_MODE_TILDE):
            raise ValidationError("time mode must be 'plain' or 'tilde', got '{}'".format(mode))
        self.besov = besov
        self.t_max = float(t_max)
        self.mode = mode


def lq_sum(values, q: float, axis=None) -> np.ndarray:
    values = np.abs(np.asarray(values, dtype=np.float64))
    if math.isinf(q):
        return np.max(values, axis=axis)
    return np.sum(values ** q, axis=axis) ** (1.0 / q)


def block_arrays(F: SpectralField) -> Dict[int, np.ndarray]:
    """Physical-space samples of every resolved block Delta_j f."""
    profile = profile_for(F.grid)
    return {j: ifft2_real(F.coeffs * profile.multiplier(j)) for j in profile.indices}


def block_lp_norms(F: SpectralField, ps: Sequence[float]) -> Dict[float, np.ndarray]:
    """
    ||Delta_j f||_{L^p} for every resolved j (ascending) and every p in ``ps``.
    """
    grid = F.grid
    blocks = block_arrays(F)
    out = {}
    for p in ps:
        out[float(p)] = np.array([lp_norm_samples(blocks[j], p, grid.cell_area) for j in sorted(blocks)])
    return out


def besov_norm(F: SpectralField, spec: BesovSpec) -> float:
    """
    l^q over resolved j of 2^(js) ||Delta_j f||_{L^p}.
    """
    profile = profile_for(F.grid)
    norms = block_lp_norms(F, [spec.p])[spec.p]
    weights = np.array([2.0 ** (spec.s * j) for j in profile.indices])
    return float(lq_sum(weights * norms, spec.q))


def homogeneous_sobolev_norm(F: SpectralField, s: float) -> float:
    """
    Direct-weight H^s norm, (L^2 / n^4 * sum over xi != 0 of |xi|^(2s) |f^(xi)|^2)^(1/2).
    """
    grid = F.grid
    nonzero = grid.xi_abs > 0
    weights = np.where(nonzero, np.where(nonzero, grid.xi_abs, 1.0) ** (2.0 * s), 0.0)
    return math.sqrt(float(np.sum(weights * np.abs(F.coeffs) ** 2))) * grid.length / grid.n ** 2


def _restrict(times: np.ndarray, table: np.ndarray, t_max: float):
    keep = times <= t_max
    t = times[keep]
    values = table[keep]
    if t.size and t[-1] < t_max and t.size < times.size:
        i = t.size
        w = (t_max - times[i - 1]) / (times[i] - times[i - 1])
        tail = (1.0 - w) * table[i - 1] + w * table[i]
        t = np.append(t, t_max)
        values = np.vstack([values, tail[np.newaxis, ...]]) if values.ndim == 2 else np.append(values, tail)
    return t, values


def time_lr(times: np.ndarray, values: np.ndarray, r: float, axis: int = 0) -> np.ndarray:
    """
    L^r norm in time by the composite trapezoid rule on the given (possibly nonuniform) grid;
    supremum for r = inf.
    """
    if math.isinf(r):
        return np.max(np.abs(values), axis=axis)
    return scipy.integrate.trapezoid(np.abs(values) ** r, times, axis=axis) ** (1.0 / r)


def time_besov_norm(traj, spec: TimeBesovSpec) -> float:
    """
    Space-time Besov norm of a trajectory over [0, t_max].

    Plain mode integrates the spatial Besov norm in time; tilde mode takes the time norm of each
    block first and then the l^q sum over j. Both use the block L^p tables stored on ``traj``.

    Raises:
        ValidationError: on an empty trajectory or t_max beyond the last sample.
    """
    times = np.asarray(traj.times, dtype=np.float64)
    if times.size == 0:
        raise ValidationError("time_besov_norm needs a nonempty trajectory")
    if spec.t_max > times[-1] * (1.0 + 1e-12):
        raise ValidationError("t_max={} exceeds the last sample time {}".format(spec.t_max, times[-1]))
    besov = spec.besov
    table = traj.block_table(besov.p)
    js = np.array(list(traj.dyadic_indices), dtype=np.float64)
    weights = 2.0 ** (besov.s * js)
    t, values = _restrict(times, table, min(spec.t_max, times[-1]))
    if not math.isinf(spec.r) and t.size < 2:
        raise ValidationError("time quadrature needs at least two samples in [0, t_max]")

    if spec.mode == TIME_MODE_PLAIN:
        per_time = lq_sum(values * weights[np.newaxis, :], besov.q, axis=1)
        return float(time_lr(t, per_time, spec.r))
    per_block = time_lr(t, values, spec.r, axis=0)
    return float(lq_sum(weights * per_block, besov.q))


def time_besov_tail(traj, spec: TimeBesovSpec, kappa: float, alpha: float) -> float:
    """
    Estimated contribution of (t_max, inf) to the r-th power of the plain norm, assuming the
    last value decays no slower than the slowest dissipative mode exp(-kappa (2 pi / L)^alpha t).
    """
    if math.isinf(spec.r):
        return 0.0
    times = np.asarray(traj.times, dtype=np.float64)
    table = traj.block_table(spec.besov.p)
    js = np.array(list(traj.dyadic_indices), dtype=np.float64)
    weights = 2.0 ** (spec.besov.s * js)
    _, values = _restrict(times, table, min(spec.t_max, times[-1]))
    last = float(lq_sum(values[-1] * weights, spec.besov.q))
    rate = kappa * traj.grid.k_min ** alpha
    return last ** spec.r / (spec.r * rate)
