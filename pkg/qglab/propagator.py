# SPDX-License-Identifier: Apache-2.0.

"""
The linear propagator T_A(t) = exp(-kappa t (-Laplacian)^(alpha/2)) exp(-A t R_1) as a Fourier multiplier

    exp(-kappa t |xi|^alpha) * exp(-i A t xi_1 / |xi|),

together with the measurements built on it: dispersive sup-norm decay, heat decay of a single
dyadic block, and the space-time Strichartz norm with its admissible window.
"""

import logging
import math
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from qglab import IndexWindowError, ModeledClass, ValidationError, to_fraction
from qglab.littlewood_paley import (TIME_MODE_TILDE, BesovSpec, TimeBesovSpec, block_lp_norms, profile_for,
                                    time_besov_norm)
from qglab.operators import PhysParams
from qglab.spectral import (BandError, Grid, RealField, SpectralField, forward_transform, ifft2_real,
                            lp_norm_samples, plancherel_norm)
from qglab.trajectory import TableTrajectory, Trajectory
from qglab.workers import ordered_map

logger = logging.getLogger(__name__)

STRICHARTZ_COLUMNS = ('A', 'kappa', 'alpha', 'r', 'p', 's', 't_max', 'norm', 'quadrature_err')
DECAY_COLUMNS = ('t', 'abs_At', 'sup_norm', 'valid', 'edge_fraction')
HEAT_COLUMNS = ('t', 'block_norm')

DEFAULT_TIME_RATIO = 1.15
SIGNIFICANT_MODE = 1e-6
HORIZON_TAIL = 1e-4


def _check_times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValidationError("sample times must be a nonempty sequence")
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValidationError("sample times must be finite and nonnegative")
    if np.any(np.diff(times) <= 0):
        raise ValidationError("sample times must be strictly increasing")
    return times


class PropagatorSpec(ModeledClass):
    """
    Physical parameters plus a sampling schedule for T_A(t).

    Args:
        params: (alpha, kappa, A).
        times: Nonnegative, strictly increasing sample times.
    """

    __slots__ = ['params', 'times']

    def __init__(self, params: PhysParams, times: Sequence[float]):
        self.params = params
        self.times = _check_times(times)


def propagator_multiplier(grid: Grid, params: PhysParams, t: float) -> np.ndarray:
    """
    exp(-kappa t |xi|^alpha - i A t xi_1 / |xi|) on the lattice, zero on the mean and Nyquist modes.
    """
    if t < 0:
        raise ValidationError("propagator time must be >= 0, got {}".format(t))
    exponent = -params.kappa * t * grid.xi_abs ** params.alpha - 1j * params.A * t * grid.unit_multiplier(grid.xi1)
    return grid.finish(np.exp(exponent))


def dispersion_multiplier(grid: Grid, A: float, t: float) -> np.ndarray:
    """The unimodular factor exp(-i A t xi_1 / |xi|) alone."""
    return grid.finish(np.exp(-1j * A * t * grid.unit_multiplier(grid.xi1)))


def apply_propagator(F: SpectralField, params: PhysParams, t: float) -> SpectralField:
    """
    T_A(t) f.

    Raises:
        ValidationError: if t < 0.
    """
    return SpectralField(F.grid, F.coeffs * propagator_multiplier(F.grid, params, t))


def linear_trajectory(F: SpectralField, spec: PropagatorSpec, block_p: Sequence[float] = (2.0,),
                      keep_fields: bool = True, threads: Optional[int] = -1) -> Trajectory:
    """
    Sample T_A(t) f at ``spec.times``, recording block tables for every p in ``block_p``.

    Samples are computed in parallel; the trajectory is assembled in time order.
    """
    grid = F.grid
    block_p = tuple(float(p) for p in block_p)

    def sample(t):
        coeffs = F.coeffs * propagator_multiplier(grid, spec.params, t)
        return coeffs, block_lp_norms(SpectralField(grid, coeffs), block_p)

    traj = Trajectory(grid, block_p, provenance={'source': 'linear'})
    for t, (coeffs, norms) in zip(spec.times, ordered_map(sample, spec.times, threads)):
        traj.append(t, coeffs if keep_fields else None, norms)
    return traj


class DecayCurve(ModeledClass):
    """
    Sup norm of exp(-A t R_1) applied to the band-projected field.

    Attributes:
        A (float): Dispersion parameter.
        times (numpy.ndarray): Sample times.
        sup_norms (numpy.ndarray): ||exp(-A t R_1) Delta~_0 g||_{L^inf} per sample.
        valid (numpy.ndarray): False for samples after the wrap time.
        wrap_time (float): L / (2 * group speed bound); inf when A = 0.
        edge_fraction (numpy.ndarray): Fraction of L2 mass within L/8 of the box edge per sample.
    """

    __slots__ = ['A', 'times', 'sup_norms', 'valid', 'wrap_time', 'edge_fraction']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    def fit_slope(self, at_min: float = 10.0, at_max: float = 1e3) -> float:
        """
        Least-squares slope of log sup norm against log(1 + |A| t) over valid samples with
        at_min <= |A| t <= at_max.

        Raises:
            ValidationError: if fewer than two samples fall in the window.
        """
        at = abs(self.A) * self.times
        sel = self.valid & (at >= at_min) & (at <= at_max) & (self.sup_norms > 0)
        if np.count_nonzero(sel) < 2:
            raise ValidationError("need at least two valid samples with {} <= |A|t <= {}".format(at_min, at_max))
        slope, _ = np.polyfit(np.log1p(at[sel]), np.log(self.sup_norms[sel]), 1)
        return float(slope)

    def rows(self):
        return [(t, abs(self.A) * t, norm, int(ok), edge)
                for t, norm, ok, edge in zip(self.times, self.sup_norms, self.valid, self.edge_fraction)]


def group_speed_bound(grid: Grid, coeffs: np.ndarray, A: float) -> float:
    """
    max |A| |xi_2| / |xi|^2 over modes carrying at least 1e-6 of the peak coefficient magnitude.
    """
    magnitude = np.abs(coeffs)
    peak = float(np.max(magnitude))
    if peak == 0.0:
        return 0.0
    sel = (magnitude >= SIGNIFICANT_MODE * peak) & (grid.xi_abs > 0)
    xi2 = np.broadcast_to(grid.xi2, grid.xi_abs.shape)
    speed = abs(A) * np.abs(xi2[sel]) / grid.xi_abs[sel] ** 2
    return float(np.max(speed)) if speed.size else 0.0


def _edge_mask(grid: Grid) -> np.ndarray:
    x1, x2 = grid.coordinates()
    margin = grid.length / 8.0
    return (x1 < margin) | (x1 > grid.length - margin) | (x2 < margin) | (x2 > grid.length - margin)


def dispersive_decay_curve(g: RealField, A: float, times: Sequence[float],
                           threads: Optional[int] = -1) -> DecayCurve:
    """
    ||exp(-A t R_1) Delta~_0 g||_{L^inf} at each sample time, with Delta~_0 = Delta_-1 + Delta_0 + Delta_1.

    Dissipation is ignored. Samples later than the wrap time, when the fastest significant
    wave packet has crossed half the box, are marked invalid.

    Raises:
        ValidationError: if Delta~_0 g is negligible.
    """
    times = _check_times(times)
    grid = g.grid
    profile = profile_for(grid)
    band = profile.multiplier(-1) + profile.multiplier(0) + profile.multiplier(1)
    G = forward_transform(g)
    band_coeffs = G.coeffs * band
    total = plancherel_norm(G)
    if total == 0.0 or plancherel_norm(SpectralField(grid, band_coeffs)) < 1e-8 * total:
        raise ValidationError("Delta~_0 g is negligible; choose g with energy near |xi| ~ 1")

    speed = group_speed_bound(grid, band_coeffs, A)
    wrap_time = grid.length / (2.0 * speed) if speed > 0 else math.inf
    edge = _edge_mask(grid)

    def sample(t):
        samples = ifft2_real(band_coeffs * dispersion_multiplier(grid, A, t))
        energy = float(np.sum(samples ** 2))
        fraction = float(np.sum(samples[edge] ** 2)) / energy if energy > 0 else 0.0
        return float(np.max(np.abs(samples))), fraction

    results = ordered_map(sample, times, threads)
    valid = times <= wrap_time
    if not np.all(valid):
        logger.warning("%d of %d decay samples lie past the wrap time %.4g and are invalidated",
                       int(np.count_nonzero(~valid)), times.size, wrap_time)
    return DecayCurve(A=float(A), times=times, sup_norms=np.array([r[0] for r in results]), valid=valid,
                      wrap_time=wrap_time, edge_fraction=np.array([r[1] for r in results]))


class HeatDecayCurve(ModeledClass):
    """
    L^p norm of exp(-kappa t (-Laplacian)^(alpha/2)) Delta_j f in time, with its fitted exponential rate.

    Attributes:
        j (int): Block index.
        times (numpy.ndarray): Sample times.
        norms (numpy.ndarray): Block L^p norms.
        rate (float): Fitted decay rate, minus the slope of log norm against t.
        rate_low (float): kappa * 2^(alpha (j - 1)).
        rate_high (float): kappa * 2^(alpha (j + 1)).
    """

    __slots__ = ['j', 'times', 'norms', 'rate', 'rate_low', 'rate_high']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    @property
    def within_shell(self) -> bool:
        return self.rate_low <= self.rate <= self.rate_high

    def rows(self):
        return list(zip(self.times, self.norms))


def heat_block_decay(F: SpectralField, j: int, kappa: float, alpha: float, times: Sequence[float],
                     p: float = 2.0) -> HeatDecayCurve:
    """
    Measure the dissipative decay of block j.

    Raises:
        BandError: if Delta_j f vanishes.
    """
    times = _check_times(times)
    if times.size < 2:
        raise ValidationError("heat decay fit needs at least two sample times")
    grid = F.grid
    block = F.coeffs * profile_for(grid).multiplier(j)
    if not np.any(np.abs(block) > 0):
        raise BandError("Delta_{} f is empty".format(j))
    symbol = grid.xi_abs ** alpha
    norms = np.array([lp_norm_samples(ifft2_real(block * np.exp(-kappa * t * symbol)), p, grid.cell_area)
                      for t in times])
    if np.any(norms <= 0):
        raise ValidationError("block norm underflowed; shorten the sample times")
    slope, _ = np.polyfit(times, np.log(norms), 1)
    return HeatDecayCurve(j=j, times=times, norms=norms, rate=-float(slope),
                          rate_low=kappa * 2.0 ** (alpha * (j - 1)), rate_high=kappa * 2.0 ** (alpha * (j + 1)))


def strichartz_violation(alpha, p, r) -> Optional[str]:
    """
    Check 2 < p < inf, 2 < r < inf and (1/alpha)(1 - 2/p) <= 1/r < (1/alpha + 1/4)(1 - 2/p) exactly.

    Returns:
        None when admissible, else the first violated bound.
    """
    for name, value in (('p', p), ('r', r)):
        if isinstance(value, float) and math.isinf(value):
            return "{} < inf".format(name)
    a = to_fraction(alpha)
    p = to_fraction(p)
    r = to_fraction(r)
    if not p > 2:
        return "p > 2 (p = {})".format(p)
    if not r > 2:
        return "r > 2 (r = {})".format(r)
    gap = 1 - Fraction(2) / p
    lower = gap / a
    upper = (1 / a + Fraction(1, 4)) * gap
    inv_r = 1 / r
    if not lower <= inv_r:
        return "1/r >= (1/alpha)(1 - 2/p) = {} (1/r = {})".format(lower, inv_r)
    if not inv_r < upper:
        return "1/r < (1/alpha + 1/4)(1 - 2/p) = {} (1/r = {})".format(upper, inv_r)
    return None


def check_strichartz_window(alpha, p, r):
    """
    Raises:
        IndexWindowError: naming the violated bound.
    """
    bound = strichartz_violation(alpha, p, r)
    if bound is not None:
        raise IndexWindowError(bound)


def strichartz_exponents(alpha, p, r):
    """
    Predicted (A-exponent, kappa-exponent) of the Strichartz bound,
    ((1/alpha)(1 - 2/p) - 1/r, -(1/alpha)(1 - 2/p)), as exact fractions.
    """
    a = to_fraction(alpha)
    gap = (1 - Fraction(2) / to_fraction(p)) / a
    return gap - 1 / to_fraction(r), -gap


def _support_range(F: SpectralField):
    magnitude = np.abs(F.coeffs)
    peak = float(np.max(magnitude))
    if peak == 0.0:
        return None
    xi = F.grid.xi_abs[magnitude >= SIGNIFICANT_MODE * peak]
    xi = xi[xi > 0]
    return float(np.min(xi)), float(np.max(xi))


def default_horizon(F: SpectralField, params: PhysParams, r: float) -> float:
    """
    Horizon after which exp(-r kappa |xi|^alpha t) of the slowest significant mode is below 1e-4.
    """
    support = _support_range(F)
    k_lo = support[0] if support else F.grid.k_min
    return math.log(1.0 / HORIZON_TAIL) / (r * params.kappa * k_lo ** params.alpha)


def geometric_times(t_min: float, t_max: float, ratio: float = DEFAULT_TIME_RATIO) -> np.ndarray:
    """0 followed by t_min * ratio^k, ending exactly at t_max."""
    if not (0 < t_min < t_max):
        raise ValidationError("need 0 < t_min < t_max, got {} and {}".format(t_min, t_max))
    count = int(math.ceil(math.log(t_max / t_min) / math.log(ratio)))
    grid = t_min * ratio ** np.arange(count)
    grid = grid[grid < t_max]
    return np.concatenate([[0.0], grid, [t_max]])


class StrichartzResult(ModeledClass):
    """
    Space-time Besov norm ||T_A(.) f||_{L~^r(0, t_max; B^s_{p,q})} (or the plain L^r norm).

    Attributes:
        norm (float): The measured norm.
        quadrature_err (float): Richardson estimate from the same sum on every other time sample.
        admissible (bool): Whether (r, p) lie in the Strichartz window.
        violated_bound (Optional[str]): The failing inequality when not admissible.
    """

    __slots__ = ['A', 'kappa', 'alpha', 'r', 'p', 's', 'q', 't_max', 'norm', 'quadrature_err', 'admissible',
                 'violated_bound']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    def csv_row(self) -> tuple:
        return (self.A, self.kappa, self.alpha, self.r, self.p, self.s, self.t_max, self.norm, self.quadrature_err)


def strichartz_norm(F: SpectralField, params: PhysParams, r, p, s, t_max: Optional[float] = None, q: float = 2.0,
                    t_min: Optional[float] = None, ratio: float = DEFAULT_TIME_RATIO,
                    threads: Optional[int] = -1, mode: str = TIME_MODE_TILDE) -> StrichartzResult:
    """
    Sample T_A(t) f on a geometric time grid and evaluate its space-time Besov norm (tilde by default).

    Inadmissible (r, p) are computed anyway and flagged, with a warning.
    """
    bound = strichartz_violation(params.alpha, p, r)
    if bound is not None:
        logger.warning("(r, p) = (%s, %s) outside the Strichartz window: requires %s", r, p, bound)
    r_f, p_f, s_f = float(r), float(p), float(s)

    support = _support_range(F)
    if support is None:
        return StrichartzResult(A=params.A, kappa=params.kappa, alpha=params.alpha, r=r_f, p=p_f, s=s_f, q=q,
                                t_max=t_max or 0.0, norm=0.0, quadrature_err=0.0,
                                admissible=bound is None, violated_bound=bound)
    if t_max is None:
        t_max = default_horizon(F, params, r_f)
    if t_min is None:
        fast = params.kappa * support[1] ** params.alpha
        if params.A:
            fast = max(fast, abs(params.A))
        t_min = min(1e-4 / fast, t_max / 10.0)

    times = geometric_times(t_min, t_max, ratio)
    traj = linear_trajectory(F, PropagatorSpec(params, times), block_p=(p_f,), keep_fields=False, threads=threads)
    spec = TimeBesovSpec(r_f, BesovSpec(p_f, q, s_f), t_max, mode)
    norm = time_besov_norm(traj, spec)

    keep = np.zeros(times.size, dtype=bool)
    keep[::2] = True
    keep[-1] = True
    coarse = time_besov_norm(TableTrajectory(F.grid, times[keep], p_f, traj.block_table(p_f)[keep]), spec)
    logger.debug("strichartz norm %.6g over %d samples (A=%g, kappa=%g)", norm, times.size, params.A, params.kappa)
    return StrichartzResult(A=params.A, kappa=params.kappa, alpha=params.alpha, r=r_f, p=p_f, s=s_f, q=q,
                            t_max=t_max, norm=norm, quadrature_err=abs(norm - coarse) / 3.0,
                            admissible=bound is None, violated_bound=bound)
