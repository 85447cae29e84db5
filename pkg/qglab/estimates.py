# SPDX-License-Identifier: Apache-2.0.

"""
Ensemble measurements of the bilinear, advection and commutator estimates and of the Strichartz
scaling law. Every check validates its hypotheses in exact arithmetic and reports LHS/RHS ratio
statistics; no constant is asserted.
"""

import itertools
import logging
import math
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from qglab import IndexWindowError, ModeledClass, Rational, ValidationError, to_fraction
from qglab.littlewood_paley import BesovSpec, besov_norm, homogeneous_sobolev_norm, lq_sum, profile_for
from qglab.operators import PhysParams, advection_coeffs, dealiased_product, perp_velocity, velocity_arrays
from qglab.paraproduct import commutator
from qglab.propagator import check_strichartz_window, strichartz_exponents, strichartz_norm
from qglab.spectral import FieldError, Grid, SpectralField, plancherel_norm
from qglab.workers import ordered_map

logger = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ('estimate_id', 'params', 'n_samples', 'ratio_max', 'ratio_p95', 'ratio_median', 'stability')
EXPONENT_COLUMNS = ('exponent', 'fitted', 'predicted', 'within')

PRODUCT = 'product'
ADVECTION = 'advection'
COMMUTATOR = 'commutator'
STRICHARTZ = 'strichartz'
ESTIMATES = (PRODUCT, ADVECTION, COMMUTATOR, STRICHARTZ)


class HypothesisError(IndexWindowError):
    """
    Indices outside the hypotheses of an estimate.
    """

    def __init__(self, bound: str):
        super().__init__(bound, "estimate hypothesis violated: requires {}".format(bound))


class RatioStats(ModeledClass):
    """
    LHS/RHS ratio statistics of one estimate over an ensemble.

    Attributes:
        estimate_id (str): One of ``ESTIMATES``.
        params (dict): Index tuple of the check, exact values as strings.
        ratios (numpy.ndarray): Every nondegenerate ratio.
        degenerate (int): Pairs skipped because both sides vanished.
        stability (Optional[float]): max(m1/m2, m2/m1) of the maxima at two resolutions.
    """

    __slots__ = ['estimate_id', 'params', 'ratios', 'degenerate', 'stability']

    def __init__(self, estimate_id: str, params: dict, ratios: Sequence[float] = (), degenerate: int = 0,
                 stability: Optional[float] = None):
        self.estimate_id = estimate_id
        self.params = params
        self.ratios = np.asarray(ratios, dtype=np.float64)
        self.degenerate = int(degenerate)
        self.stability = stability

    @property
    def n_samples(self) -> int:
        return int(self.ratios.size)

    @property
    def ratio_max(self) -> float:
        return float(np.max(self.ratios)) if self.ratios.size else math.nan

    @property
    def ratio_median(self) -> float:
        return float(np.median(self.ratios)) if self.ratios.size else math.nan

    @property
    def ratio_p95(self) -> float:
        return float(np.percentile(self.ratios, 95)) if self.ratios.size else math.nan

    @property
    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)) and np.all(self.ratios > 0))

    def merge(self, other: 'RatioStats') -> 'RatioStats':
        """Pool the samples of two runs of the same check."""
        if other.estimate_id != self.estimate_id or other.params != self.params:
            raise ValidationError("cannot merge {} with {}".format(self.estimate_id, other.estimate_id))
        return RatioStats(self.estimate_id, self.params, np.concatenate([self.ratios, other.ratios]),
                          self.degenerate + other.degenerate, self.stability)

    def csv_row(self) -> tuple:
        params = ' '.join('{}={}'.format(k, v) for k, v in sorted(self.params.items()))
        return (self.estimate_id, params, self.n_samples, self.ratio_max, self.ratio_p95, self.ratio_median,
                '' if self.stability is None else self.stability)


def _gap(p: Fraction) -> Fraction:
    # 2 (2/p - 1/2)
    return 2 * (2 / p - Fraction(1, 2))


def _require(condition: bool, bound: str):
    if not condition:
        raise HypothesisError(bound)


def _check_p(p: Fraction):
    _require(2 <= p <= 4, "2 <= p <= 4 (p = {})".format(p))


def product_hypotheses(p: Rational, s1: Rational, s2: Rational) -> Fraction:
    """Validate the product estimate window; returns the LHS regularity s1 + s2 - 2(2/p - 1/2)."""
    p, s1, s2 = to_fraction(p), to_fraction(s1), to_fraction(s2)
    _check_p(p)
    gap = _gap(p)
    _require(s1 < gap, "s1 < 2(2/p - 1/2) = {} (s1 = {})".format(gap, s1))
    _require(s2 < gap, "s2 < 2(2/p - 1/2) = {} (s2 = {})".format(gap, s2))
    _require(s1 + s2 > 0, "s1 + s2 > 0 (s1 + s2 = {})".format(s1 + s2))
    return s1 + s2 - gap


def advection_hypotheses(p: Rational, s: Rational) -> Fraction:
    """Validate 2 <= p <= 4 and 2/p < s < 4/p; returns 2s - 4/p."""
    p, s = to_fraction(p), to_fraction(s)
    _check_p(p)
    _require(2 / p < s, "s > 2/p = {} (s = {})".format(2 / p, s))
    _require(s < 4 / p, "s < 4/p = {} (s = {})".format(4 / p, s))
    return 2 * s - 4 / p


def commutator_hypotheses(p: Rational, s1: Rational, s2: Rational) -> Fraction:
    """Validate the commutator estimate window; returns the weight exponent s1 + s2 - 2(2/p - 1/2)."""
    p, s1, s2 = to_fraction(p), to_fraction(s1), to_fraction(s2)
    _check_p(p)
    gap = _gap(p)
    _require(gap < s1, "s1 > 2(2/p - 1/2) = {} (s1 = {})".format(gap, s1))
    _require(s1 < 1 + gap, "s1 < 1 + 2(2/p - 1/2) = {} (s1 = {})".format(1 + gap, s1))
    _require(s2 < gap, "s2 < 2(2/p - 1/2) = {} (s2 = {})".format(gap, s2))
    _require(s1 + s2 > 0, "s1 + s2 > 0 (s1 + s2 = {})".format(s1 + s2))
    return s1 + s2 - gap


def _ratio(lhs: float, rhs: float) -> Optional[float]:
    if rhs == 0.0:
        if lhs > 0.0:
            return math.inf
        return None
    return lhs / rhs


def _collect(estimate_id: str, params: dict, values: Sequence[Optional[float]]) -> RatioStats:
    ratios = [v for v in values if v is not None]
    degenerate = len(values) - len(ratios)
    if degenerate:
        logger.debug("%s: %d degenerate pairs skipped", estimate_id, degenerate)
    stats = RatioStats(estimate_id, params, ratios, degenerate)
    logger.info("%s %s: %d samples, max ratio %.4g", estimate_id, params, stats.n_samples, stats.ratio_max)
    return stats


def _check_ensemble(ensemble: Sequence[SpectralField]) -> Grid:
    if not ensemble:
        raise ValidationError("estimate checks need a nonempty ensemble")
    grid = ensemble[0].grid
    for F in ensemble:
        if F.grid != grid:
            raise FieldError("ensemble members live on different grids")
    return grid


def _pairs(ensemble: Sequence[SpectralField]):
    return list(itertools.combinations_with_replacement(range(len(ensemble)), 2))


def check_product_estimate(ensemble: Sequence[SpectralField], p: Rational, q: Rational, s1: Rational, s2: Rational,
                           threads: Optional[int] = -1) -> RatioStats:
    """
    Ratios ||fg||_{B^(s1+s2-2(2/p-1/2))_{2,q}} / (||f||_{B^s1_{p,q}} ||g||_{B^s2_{p,q}}) over all
    ensemble pairs (including f = g).

    Raises:
        HypothesisError: naming the violated inequality.
    """
    target = float(product_hypotheses(p, s1, s2))
    _check_ensemble(ensemble)
    p_f, q_f = float(to_fraction(p)), float(to_fraction(q))
    left = BesovSpec(2.0, q_f, target)
    spec1 = BesovSpec(p_f, q_f, float(to_fraction(s1)))
    spec2 = BesovSpec(p_f, q_f, float(to_fraction(s2)))

    def pair(ij):
        f, g = ensemble[ij[0]], ensemble[ij[1]]
        return _ratio(besov_norm(dealiased_product(f, g), left), besov_norm(f, spec1) * besov_norm(g, spec2))

    params = {'p': str(to_fraction(p)), 'q': str(to_fraction(q)), 's1': str(to_fraction(s1)),
              's2': str(to_fraction(s2))}
    return _collect(PRODUCT, params, ordered_map(pair, _pairs(ensemble), threads))


def _vector_besov(components, spec: BesovSpec) -> float:
    return sum(besov_norm(c, spec) for c in components)


def check_advection_product(ensemble: Sequence[SpectralField], p: Rational, s: Rational,
                            threads: Optional[int] = -1) -> RatioStats:
    """
    Ratios of ||v . grad f||_{H^(2s-4/p)} to
    ||v||_{B^(s-1)_{p,2}} ||f||_{B^(s+1)_{p,2}} + ||v||_{B^s_{p,2}} ||f||_{B^s_{p,2}}
    with v = R^perp theta over all ensemble pairs (theta, f). Vector norms add the component norms.
    """
    target = float(advection_hypotheses(p, s))
    grid = _check_ensemble(ensemble)
    p_f, s_f = float(to_fraction(p)), float(to_fraction(s))
    lower, mid, upper = (BesovSpec(p_f, 2.0, s_f - 1.0), BesovSpec(p_f, 2.0, s_f), BesovSpec(p_f, 2.0, s_f + 1.0))

    def pair(ij):
        theta, f = ensemble[ij[0]], ensemble[ij[1]]
        u1, u2 = velocity_arrays(grid, theta.coeffs)
        lhs = homogeneous_sobolev_norm(SpectralField(grid, advection_coeffs(grid, f.coeffs, u1, u2)), target)
        v = perp_velocity(theta)
        rhs = _vector_besov(v, lower) * besov_norm(f, upper) + _vector_besov(v, mid) * besov_norm(f, mid)
        return _ratio(lhs, rhs)

    jobs = list(itertools.product(range(len(ensemble)), repeat=2))
    params = {'p': str(to_fraction(p)), 's': str(to_fraction(s))}
    return _collect(ADVECTION, params, ordered_map(pair, jobs, threads))


def commutator_sum(f: SpectralField, g: SpectralField, weight: float) -> float:
    """(sum over resolved j of (2^(weight j) ||[f, Delta_j] g||_{L^2})^2)^(1/2)."""
    profile = profile_for(f.grid)
    values = [2.0 ** (weight * j) * plancherel_norm(commutator(f, j, g)) for j in profile.indices]
    return float(lq_sum(np.array(values), 2.0))


def check_commutator_estimate(ensemble: Sequence[SpectralField], p: Rational, s1: Rational, s2: Rational,
                              threads: Optional[int] = -1) -> RatioStats:
    """
    Ratios of the weighted commutator sum to ||f||_{B^s1_{p,2}} ||g||_{B^s2_{p,2}} over all ordered pairs.
    """
    weight = float(commutator_hypotheses(p, s1, s2))
    _check_ensemble(ensemble)
    p_f = float(to_fraction(p))
    spec1 = BesovSpec(p_f, 2.0, float(to_fraction(s1)))
    spec2 = BesovSpec(p_f, 2.0, float(to_fraction(s2)))

    def pair(ij):
        f, g = ensemble[ij[0]], ensemble[ij[1]]
        return _ratio(commutator_sum(f, g, weight), besov_norm(f, spec1) * besov_norm(g, spec2))

    jobs = list(itertools.product(range(len(ensemble)), repeat=2))
    params = {'p': str(to_fraction(p)), 's1': str(to_fraction(s1)), 's2': str(to_fraction(s2))}
    return _collect(COMMUTATOR, params, ordered_map(pair, jobs, threads))


class StrichartzCheck(ModeledClass):
    """
    Strichartz ratios with fitted scaling exponents.

    Attributes:
        stats (RatioStats): Ratios of the measured norm to kappa^-g |A|^(g - 1/r) ||f||_{H^s}, g = (1/alpha)(1 - 2/p).
        A_exponent (float): Mean over members of the log-log slope of the norm against A.
        kappa_exponent (Optional[float]): Mean slope against kappa at the middle A; None without a kappa grid.
        predicted_A_exponent (Fraction): g - 1/r.
        predicted_kappa_exponent (Fraction): -g.
    """

    __slots__ = ['stats', 'A_exponent', 'kappa_exponent', 'predicted_A_exponent', 'predicted_kappa_exponent']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    def within(self, tolerance: float = 0.15) -> bool:
        """Every row of :meth:`exponent_rows` within the tolerance."""
        return all(row[3] == 'true' for row in self.exponent_rows(tolerance))

    def exponent_rows(self, tolerance: float = 0.15) -> list:
        """One ``EXPONENT_COLUMNS`` row per fitted exponent; a zero prediction is judged on absolute error."""
        rows = []
        fits = [('A', self.A_exponent, self.predicted_A_exponent)]
        if self.kappa_exponent is not None:
            fits.append(('kappa', self.kappa_exponent, self.predicted_kappa_exponent))
        for name, fitted, predicted in fits:
            scale = abs(float(predicted)) or 1.0
            within = abs(fitted - float(predicted)) <= tolerance * scale
            rows.append((name, fitted, str(predicted), 'true' if within else 'false'))
        return rows


def _slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def check_strichartz(ensemble: Sequence[SpectralField], alpha: Rational, kappa: float, p: Rational, r: Rational,
                     s: Rational, A_grid: Sequence[float], kappa_grid: Optional[Sequence[float]] = None,
                     threads: Optional[int] = -1) -> StrichartzCheck:
    """
    Measure ||T_A f||_{L~^r B^s_{p,2}} over the A grid (and optionally a kappa grid at the middle A)
    and compare with kappa^-(1/alpha)(1-2/p) |A|^((1/alpha)(1-2/p)-1/r) ||f||_{H^s}.

    Raises:
        IndexWindowError: if (alpha, p, r) is outside the Strichartz window.
    """
    check_strichartz_window(alpha, p, r)
    _check_ensemble(ensemble)
    A_grid = sorted(float(A) for A in A_grid)
    if len(A_grid) < 2 or A_grid[0] <= 0:
        raise ValidationError("the A grid needs at least two positive values")
    a_exp, k_exp = strichartz_exponents(alpha, p, r)
    a = float(to_fraction(alpha))
    s_f = float(to_fraction(s))
    r_f = float(to_fraction(r))
    hs = [homogeneous_sobolev_norm(F, s_f) for F in ensemble]

    def norm(job):
        m, A, k = job
        return strichartz_norm(ensemble[m], PhysParams(a, k, A), r_f, to_fraction(p), s_f, threads=1).norm

    jobs = [(m, A, kappa) for m in range(len(ensemble)) for A in A_grid]
    norms = np.array(ordered_map(norm, jobs, threads)).reshape(len(ensemble), len(A_grid))

    ratios = []
    for m in range(len(ensemble)):
        for i, A in enumerate(A_grid):
            scale = kappa ** float(k_exp) * A ** float(a_exp) * hs[m]
            ratios.append(_ratio(norms[m, i], scale))
    members = [m for m in range(len(ensemble)) if np.all(norms[m] > 0)]
    if not members:
        raise ValidationError("every ensemble member has a vanishing Strichartz norm")
    A_exponent = float(np.mean([_slope(A_grid, norms[m]) for m in members]))

    kappa_exponent = None
    if kappa_grid:
        kappa_grid = sorted(float(k) for k in kappa_grid)
        A_mid = A_grid[len(A_grid) // 2]
        jobs = [(m, A_mid, k) for m in members for k in kappa_grid]
        by_kappa = np.array(ordered_map(norm, jobs, threads)).reshape(len(members), len(kappa_grid))
        kappa_exponent = float(np.mean([_slope(kappa_grid, row) for row in by_kappa]))

    params = {'alpha': str(to_fraction(alpha)), 'p': str(to_fraction(p)), 'r': str(to_fraction(r)),
              's': str(to_fraction(s))}
    stats = _collect(STRICHARTZ, params, ratios)
    logger.info("strichartz exponents: A %.4g (predicted %s), kappa %s (predicted %s)", A_exponent, a_exp,
                kappa_exponent, k_exp)
    return StrichartzCheck(stats=stats, A_exponent=A_exponent, kappa_exponent=kappa_exponent,
                           predicted_A_exponent=a_exp, predicted_kappa_exponent=k_exp)


def upsample(F: SpectralField, n: int) -> SpectralField:
    """
    The same trigonometric polynomial on the grid with n points per side and the same box length.
    """
    grid = F.grid
    if n < grid.n or n % 2:
        raise ValidationError("upsampling needs an even n >= {}, got {}".format(grid.n, n))
    fine = Grid(n, grid.length)
    padded = np.zeros((n, n), dtype=np.complex128)
    offset = (n - grid.n) // 2
    padded[offset:offset + grid.n, offset:offset + grid.n] = np.fft.fftshift(F.coeffs)
    coeffs = np.fft.ifftshift(padded) * (float(n) / grid.n) ** 2
    return SpectralField(fine, fine.finish(coeffs))


def stability(check: Callable[..., RatioStats], ensemble: Sequence[SpectralField], n_fine: int, *args,
              **kwargs) -> RatioStats:
    """
    Run ``check`` on the ensemble and on its upsampled copy; the returned statistics are those of the
    fine run, with ``stability`` set to the drift factor of the two maxima.
    """
    coarse = check(ensemble, *args, **kwargs)
    fine = check([upsample(F, n_fine) for F in ensemble], *args, **kwargs)
    m1, m2 = coarse.ratio_max, fine.ratio_max
    if m1 > 0 and m2 > 0 and math.isfinite(m1) and math.isfinite(m2):
        fine.stability = max(m1 / m2, m2 / m1)
    else:
        fine.stability = math.inf
    return fine
