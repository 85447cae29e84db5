# SPDX-License-Identifier: Apache-2.0.

"""
The successive-approximation construction of global solutions:

    theta^0(t) = T_A(t) theta_0,
    d/dt theta^{n+1} + kappa (-Laplacian)^(alpha/2) theta^{n+1} + A R_1 theta^{n+1} + u^n . grad theta^{n+1} = 0,
    u^n = R^perp theta^n,

with the admissible index windows, the size condition on (theta_0, kappa, A) and its threshold A_0,
contraction diagnostics, the regularized linear solution T_A(t) S_{N+3} theta_0, threshold scans,
the finite-family experiment for the critical space and the vanishing-viscosity scenario kappa = A^-beta.

Index windows and exponents are evaluated in exact rational arithmetic.
"""

import logging
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from qglab import IndexWindowError, ModeledClass, Rational, ValidationError, to_fraction
from qglab.evolution import SimConfig, VelocityTrajectory, run, run_frozen
from qglab.littlewood_paley import (TIME_MODE_PLAIN, BesovSpec, TimeBesovSpec, besov_norm, high_pass,
                                    homogeneous_sobolev_norm, low_pass, time_besov_norm)
from qglab.operators import PhysParams, advection_coeffs
from qglab.propagator import PropagatorSpec, apply_propagator, linear_trajectory, strichartz_norm
from qglab.spectral import RealField, SpectralField, forward_transform, plancherel_norm
from qglab.trajectory import BlowupFlag, TableTrajectory, Trajectory, difference_table
from qglab.workers import ordered_map

logger = logging.getLogger(__name__)

CONTRACTION_COLUMNS = ('n', 'd_n', 'ratio', 'x_norm')
THRESHOLD_COLUMNS = ('c', 'A0_measured', 'A0_predicted', 'anomaly')
CRITICAL_COLUMNS = ('member_id', 'N', 'tail', 'A', 'strichartz_sup')
VISCOSITY_COLUMNS = ('A', 'kappa', 'hs_margin', 'hs_minus1_margin', 'conditions_hold', 'contraction_stable',
                     'max_ratio')
TAIL_COLUMNS = ('N', 'tail_hs', 'tail_critical', 'bound')
LIMIT_COLUMNS = ('n', 'd_n_max', 'limit_distance', 'within')

DEFAULT_SNAPSHOTS = 41


def _check_alpha(alpha: Fraction):
    if not (0 < alpha <= 1):
        raise IndexWindowError("0 < alpha <= 1 (alpha = {})".format(alpha))


def _p_window(alpha: Fraction):
    return Fraction(8) / (4 - alpha), Fraction(4) / (2 - alpha)


def _s_high(alpha: Fraction, p: Fraction) -> Fraction:
    return min(1 + 2 / p - alpha / 2, 2 - (Fraction(3, 4) + 1 / (2 * p)) * alpha)


class AdmissibleWindow(ModeledClass):
    """
    The s-window for given (alpha, p): 2 - alpha < s < s_high.

    Attributes:
        alpha (Fraction): Dissipation order.
        p (Fraction): Spatial integrability.
        s_low (Fraction): 2 - alpha (excluded).
        s_high (Fraction): min{1 + 2/p - alpha/2, 2 - (3/4 + 1/(2p)) alpha} (excluded).
        rho (Fraction): Critical time exponent alpha / (1 - 2/p).
        empty (bool): True when s_low >= s_high.
        violated (Optional[str]): The failing inequality when the window is empty.
    """

    __slots__ = ['alpha', 'p', 's_low', 's_high', 'rho', 'empty', 'violated']

    def __init__(self, alpha: Fraction, p: Fraction):
        self.alpha = alpha
        self.p = p
        self.s_low = 2 - alpha
        self.s_high = _s_high(alpha, p)
        self.rho = alpha / (1 - Fraction(2) / p)
        self.empty = self.s_low >= self.s_high
        self.violated = "2 - alpha < {} (2 - alpha = {})".format(self.s_high, self.s_low) if self.empty else None

    def contains(self, s: Rational) -> bool:
        s = to_fraction(s)
        return self.s_low < s < self.s_high

    def r_of_s(self, s: Rational) -> Fraction:
        """r = alpha / (s - (1 + 2/p - alpha))."""
        s = to_fraction(s)
        return self.alpha / (s - (1 + Fraction(2) / self.p - self.alpha))


def admissible_indices(alpha: Rational, p: Rational, critical: bool = False) -> AdmissibleWindow:
    """
    Exact s-window for (alpha, p).

    Raises:
        IndexWindowError: if alpha is outside (0, 1] or p outside [8/(4-alpha), 4/(2-alpha))
            (the left end is excluded in critical mode).
    """
    alpha = to_fraction(alpha)
    p = to_fraction(p)
    _check_alpha(alpha)
    p_low, p_high = _p_window(alpha)
    if critical:
        if not p > p_low:
            raise IndexWindowError("p > 8/(4-alpha) = {} (p = {})".format(p_low, p))
    elif not p >= p_low:
        raise IndexWindowError("p >= 8/(4-alpha) = {} (p = {})".format(p_low, p))
    if not p < p_high:
        raise IndexWindowError("p < 4/(2-alpha) = {} (p = {})".format(p_high, p))
    return AdmissibleWindow(alpha, p)


class IndexSet(ModeledClass):
    """
    Admissible indices (alpha, p, s) with the derived time exponent.

    Args:
        alpha: Dissipation order in (0, 1].
        p: Spatial integrability.
        s: Regularity; defaults to 2 - alpha in critical mode.
        critical: Use the critical space (s = 2 - alpha, exponent rho).

    Attributes:
        r (Optional[Fraction]): alpha / (s - (1 + 2/p - alpha)) in subcritical mode.
        rho (Fraction): alpha / (1 - 2/p).

    Raises:
        IndexWindowError: naming the violated bound.
    """

    __slots__ = ['alpha', 'p', 's', 'critical', 'r', 'rho']

    def __init__(self, alpha: Rational, p: Rational, s: Optional[Rational] = None, critical: bool = False):
        window = admissible_indices(alpha, p, critical)
        self.alpha = window.alpha
        self.p = window.p
        self.critical = bool(critical)
        self.rho = window.rho
        if critical:
            s = window.s_low if s is None else to_fraction(s)
            if s != window.s_low:
                raise IndexWindowError("s = 2 - alpha = {} in critical mode (s = {})".format(window.s_low, s))
            if self.alpha == 1:
                logger.warning("critical mode with alpha = 1 lies outside the range the construction covers")
            self.s = s
            self.r = None
        else:
            if s is None:
                raise ValidationError("subcritical indices need s")
            s = to_fraction(s)
            if window.empty:
                raise IndexWindowError(window.violated)
            if not s > window.s_low:
                raise IndexWindowError("s > 2 - alpha = {} (s = {})".format(window.s_low, s))
            if not s < window.s_high:
                raise IndexWindowError("s < min{{1 + 2/p - alpha/2, 2 - (3/4 + 1/(2p)) alpha}} = {} (s = {})".format(
                    window.s_high, s))
            self.s = s
            self.r = window.r_of_s(s)

    @property
    def time_exponent(self) -> Fraction:
        return self.rho if self.critical else self.r

    def threshold_exponent(self) -> Fraction:
        """alpha / (s - (2 - alpha)) * (s + alpha - 1) / (s + alpha - 2): the A_0 power law in the data size."""
        a, s = self.alpha, self.s
        return a / (s - (2 - a)) * (s + a - 1) / (s + a - 2)


class ThresholdReport(ModeledClass):
    """
    Size condition and dispersion threshold for one initial datum.

    Attributes:
        hs_norm (float): ||theta_0||_{H^s}.
        hs_minus1_norm (float): ||theta_0||_{H^(s-1)}.
        A (Optional[float]): Dispersion parameter the condition was evaluated at.
        hs_required (Optional[float]): Right side of the H^s condition at A.
        hs_minus1_required (Optional[float]): Right side of the H^(s-1) condition at A.
        holds (Optional[bool]): Whether both conditions hold at A.
        A0_predicted (float): C max{||theta_0||_{H^s}^((s+alpha-1)/(s+alpha-2)), ||theta_0||_{H^s},
            ||theta_0||_{H^(s-1)}}^(alpha/(s-(2-alpha))).
        A0_measured (Optional[float]): Filled in by :func:`threshold_scan`.
        regression_exponent (Optional[float]): Filled in by :func:`threshold_scan`.
    """

    __slots__ = ['hs_norm', 'hs_minus1_norm', 'A', 'hs_required', 'hs_minus1_required', 'holds', 'A0_predicted',
                 'A0_measured', 'regression_exponent']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))


def _exponents(idx: IndexSet) -> Dict[str, float]:
    a, s = idx.alpha, idx.s
    return {
        'kappa': float((2 - s) / a),
        'branch': float((s - (2 - a)) / a),
        'inner_kappa': float(1 / (s + a - 1)),
        'inner_A': float((s + a - 2) / (s + a - 1)),
        'a0_first': float((s + a - 1) / (s + a - 2)),
        'a0_outer': float(a / (s - (2 - a))),
    }


def size_condition_margins(hs_norm: float, hs_minus1_norm: float, kappa: float, A: float, idx: IndexSet,
                           constant: float = 1.0) -> Dict[str, float]:
    """
    Both sides of the size condition

        ||theta_0||_{H^s} <= C kappa^((2-s)/alpha)
            [min{|A|, kappa^(1/(s+alpha-1)) |A|^((s+alpha-2)/(s+alpha-1))}]^((s-(2-alpha))/alpha)
        ||theta_0||_{H^(s-1)} <= C kappa^((2-s)/alpha) |A|^((s-(2-alpha))/alpha)

    plus the margin LHS/RHS of each inequality and of each branch of the min.
    """
    e = _exponents(idx)
    a_abs = abs(A)
    prefactor = constant * kappa ** e['kappa']
    branch1 = prefactor * a_abs ** e['branch']
    branch2 = prefactor * (kappa ** e['inner_kappa'] * a_abs ** e['inner_A']) ** e['branch']
    hs_rhs = min(branch1, branch2)
    hs1_rhs = branch1

    def margin(lhs, rhs):
        if rhs > 0:
            return lhs / rhs
        return 0.0 if lhs == 0 else math.inf

    return {
        'hs_lhs': hs_norm, 'hs_rhs': hs_rhs, 'hs_margin': margin(hs_norm, hs_rhs),
        'hs_minus1_lhs': hs_minus1_norm, 'hs_minus1_rhs': hs1_rhs, 'hs_minus1_margin': margin(hs_minus1_norm, hs1_rhs),
        'branch1_margin': margin(hs_norm, branch1), 'branch2_margin': margin(hs_norm, branch2),
    }


def predicted_threshold(hs_norm: float, hs_minus1_norm: float, idx: IndexSet, constant: float = 1.0) -> float:
    e = _exponents(idx)
    inner = max(hs_norm ** e['a0_first'], hs_norm, hs_minus1_norm)
    return constant * inner ** e['a0_outer']


def size_threshold(theta0: SpectralField, kappa: float, idx: IndexSet, A: Optional[float] = None,
                   constant: float = 1.0) -> ThresholdReport:
    """
    Evaluate the size condition at ``A`` (when given) and the predicted threshold A_0, with
    ``constant`` standing in for the unknown constants.
    """
    if idx.critical:
        raise ValidationError("the size condition needs subcritical indices")
    s = float(idx.s)
    hs = homogeneous_sobolev_norm(theta0, s)
    hs1 = homogeneous_sobolev_norm(theta0, s - 1.0)
    report = ThresholdReport(hs_norm=hs, hs_minus1_norm=hs1, A0_predicted=predicted_threshold(hs, hs1, idx, constant))
    if A is not None:
        margins = size_condition_margins(hs, hs1, kappa, A, idx, constant)
        report.A = A
        report.hs_required = margins['hs_rhs']
        report.hs_minus1_required = margins['hs_minus1_rhs']
        report.holds = A != 0 and hs <= margins['hs_rhs'] and hs1 <= margins['hs_minus1_rhs']
    return report


def check_beta(idx: IndexSet, beta: Rational) -> Fraction:
    """
    Validate 0 <= beta < (s+alpha-2)^2 / ((2-s)(s+alpha-2) + alpha) exactly; beta = 0 is the kappa = 1 case.

    Raises:
        IndexWindowError: naming the violated bound.
    """
    beta = to_fraction(beta)
    a, s = idx.alpha, idx.s
    bound = (s + a - 2) ** 2 / ((2 - s) * (s + a - 2) + a)
    if beta < 0:
        raise IndexWindowError("beta >= 0 (beta = {})".format(beta))
    if not beta < bound:
        raise IndexWindowError("beta < (s+alpha-2)^2/((2-s)(s+alpha-2)+alpha) = {} (beta = {})".format(bound, beta))
    return beta


def beta_bound(idx: IndexSet) -> Fraction:
    a, s = idx.alpha, idx.s
    return (s + a - 2) ** 2 / ((2 - s) * (s + a - 2) + a)


def viscosity_margins(hs_norm: float, hs_minus1_norm: float, A: float, idx: IndexSet, beta: Rational,
                      constant: float = 1.0) -> Dict[str, float]:
    """
    The two conditions with kappa = A^-beta substituted:

        ||theta_0||_{H^s} <= C min{A^e1, A^e2},  ||theta_0||_{H^(s-1)} <= C A^e1,
        e1 = (s + alpha - 2 - (2-s) beta) / alpha,
        e2 = ((s+alpha-2)^2 - ((2-s)(s+alpha-2) + alpha) beta) / (alpha (s+alpha-1)).
    """
    beta = to_fraction(beta)
    a, s = idx.alpha, idx.s
    e1 = float((s + a - 2 - (2 - s) * beta) / a)
    e2 = float(((s + a - 2) ** 2 - ((2 - s) * (s + a - 2) + a) * beta) / (a * (s + a - 1)))
    hs_rhs = constant * min(A ** e1, A ** e2)
    hs1_rhs = constant * A ** e1
    return {
        'hs_rhs': hs_rhs, 'hs_minus1_rhs': hs1_rhs,
        'hs_margin': hs_norm / hs_rhs, 'hs_minus1_margin': hs_minus1_norm / hs1_rhs,
        'holds': hs_norm <= hs_rhs and hs_minus1_norm <= hs1_rhs,
    }


def _lr_besov(traj, times, table: np.ndarray, idx: IndexSet, s: float, t_end: float) -> float:
    spec = TimeBesovSpec(float(idx.time_exponent), BesovSpec(float(idx.p), 2.0, s), t_end, TIME_MODE_PLAIN)
    return time_besov_norm(TableTrajectory(traj.grid, times, float(idx.p), table), spec)


def lr_besov_distance(a: Trajectory, b: Trajectory, idx: IndexSet, s: float) -> float:
    """||a - b||_{L^r(0, T; B^s_{p,2})} on the shared sample times."""
    table = difference_table(a, b, float(idx.p))
    return _lr_besov(a, a.times, table, idx, s, float(a.times[-1]))


def x_norm(traj: Trajectory, idx: IndexSet) -> float:
    """||theta||_{L^r B^s_{p,2}} + ||theta||_{L^r B^(s-1)_{p,2}}."""
    table = traj.block_table(float(idx.p))
    t_end = float(traj.times[-1])
    s = float(idx.s)
    return _lr_besov(traj, traj.times, table, idx, s, t_end) + _lr_besov(traj, traj.times, table, idx, s - 1.0, t_end)


class PicardReport(ModeledClass):
    """
    Diagnostics of the successive approximation.

    Attributes:
        distances (List[float]): d_n = ||theta^{n+1} - theta^n||_{L^r(0, T; B^(s-1)_{p,2})}, n = 0, 1, ...
        ratios (List[float]): d_n / d_{n-1} for n >= 1.
        x_norms (List[float]): X-norm of each completed iterate theta^0, theta^1, ...
        max_l2 (List[float]): sup over samples of ||theta^n(t)||_{L^2}.
        blowup (Optional[BlowupFlag]): Set when an iterate stopped early.
        blowup_iterate (Optional[int]): Index of the failing iterate.
        iterates (List[Trajectory]): Completed iterates; all but the last two are pruned.
    """

    __slots__ = ['idx', 'params', 'distances', 'ratios', 'x_norms', 'max_l2', 'blowup', 'blowup_iterate', 'iterates']

    def __init__(self, idx: IndexSet, params: PhysParams):
        self.idx = idx
        self.params = params
        self.distances = []  # type: List[float]
        self.ratios = []  # type: List[float]
        self.x_norms = []  # type: List[float]
        self.max_l2 = []  # type: List[float]
        self.blowup = None  # type: Optional[BlowupFlag]
        self.blowup_iterate = None  # type: Optional[int]
        self.iterates = []  # type: List[Trajectory]

    @property
    def contraction_stable(self) -> bool:
        return self.blowup is None and all(r < 1.0 for r in self.ratios)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def geometric_decay_holds(self, rtol: float = 1e-9) -> bool:
        """d_n <= d_1 * (max ratio)^(n-1) along the recorded sequence."""
        if len(self.distances) < 2:
            return True
        q = max(self.ratios[1:]) if len(self.ratios) > 1 else 0.0
        d1 = self.distances[1]
        return all(self.distances[n] <= d1 * q ** (n - 1) * (1 + rtol) + 1e-300
                   for n in range(1, len(self.distances)))

    def rows(self) -> List[tuple]:
        out = []
        for n, d in enumerate(self.distances):
            ratio = self.ratios[n - 1] if n >= 1 else ''
            out.append((n, d, ratio, self.x_norms[n] if n < len(self.x_norms) else ''))
        return out


def _ratio(current: float, previous: float) -> float:
    if previous > 0:
        return current / previous
    return 0.0 if current == 0 else math.inf


def _max_l2(traj: Trajectory) -> float:
    return max(plancherel_norm(traj.field(i)) for i in range(len(traj)))


def picard_config(params: PhysParams, grid, t_end: float, idx: IndexSet, **sim_kwargs) -> SimConfig:
    sim_kwargs.setdefault('snapshots', DEFAULT_SNAPSHOTS)
    sim_kwargs['block_p'] = tuple(sorted({2.0, float(idx.p)}))
    return SimConfig(params, grid, t_end, **sim_kwargs)


def iterate(theta0: RealField, idx: IndexSet, params: PhysParams, n_max: int, t_end: float,
            **sim_kwargs) -> PicardReport:
    """
    Build theta^0 = T_A(t) theta_0 and theta^1, ..., theta^{n_max} by frozen-velocity runs,
    recording distances, ratios and X-norms.

    A blow-up in any iterate halts the iteration; the partial report is returned.

    Keyword Args:
        Passed to :class:`qglab.evolution.SimConfig` (dt, c_cfl, snapshots, snapshot_times, dealias).
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1, got {}".format(n_max))
    cfg = picard_config(params, theta0.grid, t_end, idx, **sim_kwargs)
    F0 = forward_transform(theta0)
    s = float(idx.s)
    report = PicardReport(idx, params)

    current = linear_trajectory(F0, PropagatorSpec(params, cfg.snapshot_times), block_p=cfg.block_p)
    report.iterates.append(current)
    report.x_norms.append(x_norm(current, idx))
    report.max_l2.append(_max_l2(current))

    for n in range(n_max):
        following = run_frozen(F0, VelocityTrajectory(current), cfg, provenance={'iterate': n + 1})
        if following.blowup is not None:
            report.blowup = following.blowup
            report.blowup_iterate = n + 1
            logger.warning("iterate %d stopped at t=%.6g (%s)", n + 1, following.blowup.time, following.blowup.reason)
            break
        d = lr_besov_distance(following, current, idx, s - 1.0)
        if report.distances:
            report.ratios.append(_ratio(d, report.distances[-1]))
        report.distances.append(d)
        report.x_norms.append(x_norm(following, idx))
        report.max_l2.append(_max_l2(following))
        logger.debug("iterate %d: d=%.6g x=%.6g", n + 1, d, report.x_norms[-1])

        if len(report.iterates) >= 2:
            report.iterates[-2].prune()
        report.iterates.append(following)
        current = following
    return report


class DecompositionReport(ModeledClass):
    """
    Split of a solution into T_A(t) S_{N+3} theta_0 and the remaining perturbation.

    Attributes:
        N (int): Frequency cut.
        tail_hs (float): ||(1 - S_{N+3}) theta_0||_{H^s}.
        perturbation_l2 (float): sup over samples of ||theta(t) - T_A(t) S_{N+3} theta_0||_{L^2}.
        perturbation_lr (float): ||theta - T_A S_{N+3} theta_0||_{L^r B^s_{p,2}}.
        frequency_ratio (float): max over samples of
            ||T_A S_{N+3} theta_0||_{B^(s+1)_{p,2}} / (2^N ||T_A theta_0||_{B^s_{p,2}}).
    """

    __slots__ = ['N', 'tail_hs', 'perturbation_l2', 'perturbation_lr', 'frequency_ratio']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))


def default_cut(params: PhysParams, idx: IndexSet, grid) -> int:
    """
    N with 2^N <= (|A| / kappa)^((1/alpha)(s+alpha-2)/(s+alpha-1)) < 2^(N+1), clamped to the resolved shells.
    """
    a, s = float(idx.alpha), float(idx.s)
    lo, hi = grid.j_lo, grid.j_hi
    if params.A == 0:
        logger.warning("A = 0: frequency cut clamped to the lowest resolved shell %d", lo)
        return lo
    exponent = (s + a - 2.0) / (a * (s + a - 1.0))
    N = int(math.floor(exponent * math.log2(abs(params.A) / params.kappa)))
    if N < lo or N > hi:
        clamped = min(max(N, lo), hi)
        logger.warning("frequency cut N=%d outside resolved shells [%d, %d], using %d", N, lo, hi, clamped)
        N = clamped
    return N


def regularized_linear_decomposition(theta_traj: Trajectory, theta0: SpectralField, N: Optional[int],
                                     params: PhysParams, idx: IndexSet) -> DecompositionReport:
    """
    Compare a trajectory with the regularized linear solution T_A(t) S_{N+3} theta_0 at its sample times.
    """
    grid = theta0.grid
    if N is None:
        N = default_cut(params, idx, grid)
    s = float(idx.s)
    p = float(idx.p)
    low = low_pass(theta0, N + 3)
    tail_hs = homogeneous_sobolev_norm(high_pass(theta0, N + 3), s)

    times = theta_traj.times
    regular = linear_trajectory(low, PropagatorSpec(params, times), block_p=(p,))
    diff_table = difference_table(theta_traj, regular, p)
    perturbation_lr = _lr_besov(theta_traj, times, diff_table, idx, s, float(times[-1]))
    perturbation_l2 = max(plancherel_norm(theta_traj.field(i) - regular.field(i)) for i in range(len(times)))

    upper = BesovSpec(p, 2.0, s + 1.0)
    lower = BesovSpec(p, 2.0, s)
    ratio = 0.0
    for t in times:
        denominator = 2.0 ** N * besov_norm(apply_propagator(theta0, params, t), lower)
        if denominator > 0:
            ratio = max(ratio, besov_norm(apply_propagator(low, params, t), upper) / denominator)
    return DecompositionReport(N=N, tail_hs=tail_hs, perturbation_l2=perturbation_l2,
                               perturbation_lr=perturbation_lr, frequency_ratio=ratio)


def solve_perturbation(theta0: SpectralField, velocity: VelocityTrajectory, N: int, cfg: SimConfig) -> Trajectory:
    """
    Integrate w = theta^{n+1} - T_A(t) S_{N+3} theta_0 directly:

        d/dt w + kappa (-Laplacian)^(alpha/2) w + A R_1 w + u^n . grad w = -u^n . grad (T_A(t) S_{N+3} theta_0),
        w(0) = (1 - S_{N+3}) theta_0.
    """
    grid = cfg.grid
    low = low_pass(theta0, N + 3)
    w0 = high_pass(theta0, N + 3)

    def forcing(t):
        u1, u2 = velocity.velocity_at(t)
        regular = apply_propagator(low, cfg.params, t).coeffs
        return -advection_coeffs(grid, regular, u1, u2, cfg.dealias)

    return run_frozen(w0, velocity, cfg, forcing=forcing, provenance={'perturbation_cut': N})


def tail_profile(theta0: SpectralField, N_grid: Sequence[int], idx: IndexSet) -> List[tuple]:
    """
    Rows (N, ||(1 - S_{N+3}) theta_0||_{H^s}, ||(1 - S_{N+3}) theta_0||_{H^(2-alpha)},
    2^((2-alpha-s) N) ||(1 - S_{N+3}) theta_0||_{H^s}).
    """
    s = float(idx.s)
    critical = 2.0 - float(idx.alpha)
    rows = []
    for N in N_grid:
        tail = high_pass(theta0, N + 3)
        tail_hs = homogeneous_sobolev_norm(tail, s)
        rows.append((N, tail_hs, homogeneous_sobolev_norm(tail, critical), 2.0 ** ((critical - s) * N) * tail_hs))
    return rows


def first_stable(grid_values: Sequence[float], stable: Sequence[bool]) -> Optional[float]:
    """
    Smallest grid value that is stable together with the next grid value (the last grid value
    only needs itself).
    """
    for i, ok in enumerate(stable):
        if ok and (i + 1 == len(stable) or stable[i + 1]):
            return grid_values[i]
    return None


def _non_monotone(stable: Sequence[bool]) -> bool:
    seen = False
    for ok in stable:
        if ok:
            seen = True
        elif seen:
            return True
    return False


class ThresholdScan(ModeledClass):
    """
    Measured dispersion thresholds over an amplitude sweep.

    Attributes:
        amplitudes (List[float]): Data amplitudes c.
        A_grid (List[float]): Sorted scan grid.
        stable (numpy.ndarray): Contraction stability per (c, A) cell.
        reports (List[ThresholdReport]): One per amplitude, with measured and predicted A_0.
        anomalies (List[bool]): Non-monotone outcome in A, or A_0 decreasing in c.
        regression_exponent (Optional[float]): Slope of log A_0_measured against log c.
        predicted_exponent (float): alpha/(s-(2-alpha)) * (s+alpha-1)/(s+alpha-2).
    """

    __slots__ = ['amplitudes', 'A_grid', 'stable', 'reports', 'anomalies', 'regression_exponent',
                 'predicted_exponent']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    @property
    def monotone(self) -> bool:
        measured = [r.A0_measured for r in self.reports if r.A0_measured is not None]
        return all(b >= a for a, b in zip(measured, measured[1:]))

    def rows(self) -> List[tuple]:
        return [(c, '' if r.A0_measured is None else r.A0_measured, r.A0_predicted, int(anomaly))
                for c, r, anomaly in zip(self.amplitudes, self.reports, self.anomalies)]


def threshold_scan(theta0: RealField, amplitudes: Sequence[float], idx: IndexSet, kappa: float,
                   A_grid: Sequence[float], t_end: float, n_max: int = 4, constant: float = 1.0,
                   threads: Optional[int] = -1, **sim_kwargs) -> ThresholdScan:
    """
    For each amplitude c, the smallest A on the grid for which iterate(c theta_0) is contraction-stable
    (stable at that grid point and the next), compared with the predicted A_0.

    Non-monotone outcomes are reported as anomalies rather than smoothed.
    """
    amplitudes = sorted(float(c) for c in amplitudes)
    A_grid = sorted(float(A) for A in A_grid)
    alpha = float(idx.alpha)
    cells = [(c, A) for c in amplitudes for A in A_grid]

    def cell(job):
        c, A = job
        report = iterate(theta0 * c, idx, PhysParams(alpha, kappa, A), n_max, t_end, **sim_kwargs)
        logger.debug("scan cell c=%g A=%g: stable=%s max ratio %.3g", c, A, report.contraction_stable,
                     report.max_ratio)
        return report.contraction_stable

    logger.info("threshold scan over %d cells", len(cells))
    flat = ordered_map(cell, cells, threads)
    stable = np.array(flat, dtype=bool).reshape(len(amplitudes), len(A_grid))

    F0 = forward_transform(theta0)
    reports = []
    anomalies = []
    previous = None
    for i, c in enumerate(amplitudes):
        report = size_threshold(F0 * c, kappa, idx, constant=constant)
        report.A0_measured = first_stable(A_grid, stable[i])
        anomaly = _non_monotone(stable[i])
        if report.A0_measured is not None and previous is not None and report.A0_measured < previous:
            anomaly = True
        if report.A0_measured is not None:
            previous = report.A0_measured
        if anomaly:
            logger.warning("non-monotone threshold outcome at amplitude %g", c)
        reports.append(report)
        anomalies.append(anomaly)

    measured = [(c, r.A0_measured) for c, r in zip(amplitudes, reports) if r.A0_measured and c > 0]
    exponent = None
    if len(measured) >= 2 and len({a for _, a in measured}) >= 2:
        slope, _ = np.polyfit(np.log([c for c, _ in measured]), np.log([a for _, a in measured]), 1)
        exponent = float(slope)
    for r in reports:
        r.regression_exponent = exponent
    return ThresholdScan(amplitudes=amplitudes, A_grid=A_grid, stable=stable, reports=reports, anomalies=anomalies,
                         regression_exponent=exponent, predicted_exponent=float(idx.threshold_exponent()))


class CriticalReport(ModeledClass):
    """
    Finite-family experiment in the critical space.

    Attributes:
        N_grid (List[int]): Frequency cuts.
        tails (numpy.ndarray): ||(1 - S_{N+3}) f||_{H^(2-alpha)} per (member, N).
        A_grid (List[float]): Dispersion parameters.
        strichartz (Dict[int, numpy.ndarray]): ||T_A f||_{L^rho B^(k-alpha)_{p,2}} per (member, A), for k = 1, 2.
        stable (numpy.ndarray): Contraction stability per (member, A).
        member_thresholds (List[Optional[float]]): First stable grid A per member.
        common_threshold (Optional[float]): First grid A stable for every member.
    """

    __slots__ = ['N_grid', 'tails', 'A_grid', 'strichartz', 'stable', 'member_thresholds', 'common_threshold']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    @property
    def sup_tails(self) -> np.ndarray:
        return np.max(self.tails, axis=0)

    def sup_strichartz(self, k: int = 1) -> np.ndarray:
        return np.max(self.strichartz[k], axis=0)

    @property
    def tails_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.sup_tails) < 0))

    @property
    def strichartz_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.sup_strichartz(1)) < 0))

    def rows(self, k: int = 1) -> List[tuple]:
        out = []
        for m in range(self.tails.shape[0]):
            for i, N in enumerate(self.N_grid):
                out.append((m, N, self.tails[m, i], '', ''))
            for i, A in enumerate(self.A_grid):
                out.append((m, '', '', A, self.strichartz[k][m, i]))
        for i, N in enumerate(self.N_grid):
            out.append(('sup', N, self.sup_tails[i], '', ''))
        for i, A in enumerate(self.A_grid):
            out.append(('sup', '', '', A, self.sup_strichartz(k)[i]))
        return out


def critical_family_experiment(family: Sequence[RealField], p: Rational, alpha: Rational, kappa: float,
                               A_grid: Sequence[float], N_grid: Sequence[int], t_end: float, n_max: int = 4,
                               threads: Optional[int] = -1, **sim_kwargs) -> CriticalReport:
    """
    Tabulate sup over the family of the high-frequency tail against N and of the critical
    Strichartz norm against A, and find one A_0 for which every member contracts.
    """
    if not family:
        raise ValidationError("critical family experiment needs at least one member")
    idx = IndexSet(alpha, p, critical=True)
    a = float(idx.alpha)
    rho = float(idx.rho)
    A_grid = sorted(float(A) for A in A_grid)
    N_grid = list(N_grid)
    coeffs = [forward_transform(f) for f in family]

    tails = np.array([[homogeneous_sobolev_norm(high_pass(F, N + 3), 2.0 - a) for N in N_grid] for F in coeffs])

    def norm_cell(job):
        m, A, k = job
        result = strichartz_norm(coeffs[m], PhysParams(a, kappa, A), rho, idx.p, k - a, mode=TIME_MODE_PLAIN,
                                 threads=1)
        return result.norm

    strichartz = {}
    for k in (1, 2):
        jobs = [(m, A, k) for m in range(len(family)) for A in A_grid]
        strichartz[k] = np.array(ordered_map(norm_cell, jobs, threads)).reshape(len(family), len(A_grid))

    def stable_cell(job):
        m, A = job
        return iterate(family[m], idx, PhysParams(a, kappa, A), n_max, t_end, **sim_kwargs).contraction_stable

    jobs = [(m, A) for m in range(len(family)) for A in A_grid]
    stable = np.array(ordered_map(stable_cell, jobs, threads), dtype=bool).reshape(len(family), len(A_grid))
    member_thresholds = [first_stable(A_grid, stable[m]) for m in range(len(family))]
    common = first_stable(A_grid, list(np.all(stable, axis=0)))
    return CriticalReport(N_grid=N_grid, tails=tails, A_grid=A_grid, strichartz=strichartz, stable=stable,
                          member_thresholds=member_thresholds, common_threshold=common)


class ViscosityReport(ModeledClass):
    """
    kappa = A^-beta scenario along an A scan.

    Attributes:
        beta (Fraction): Validated exponent.
        rows (List[tuple]): ``VISCOSITY_COLUMNS`` rows.
        reports (List[PicardReport]): Contraction diagnostics per A.
    """

    __slots__ = ['beta', 'rows', 'reports']

    def __init__(self, beta: Fraction):
        self.beta = beta
        self.rows = []  # type: List[tuple]
        self.reports = []  # type: List[PicardReport]


def vanishing_viscosity_scenario(theta0: RealField, idx: IndexSet, beta: Rational, A_grid: Sequence[float],
                                 t_end: float, n_max: int = 4, constant: float = 1.0,
                                 threads: Optional[int] = -1, **sim_kwargs) -> ViscosityReport:
    """
    Run the successive approximation with kappa = A^-beta for each A > 0 on the grid and evaluate the
    two size conditions with that substitution.

    Raises:
        IndexWindowError: if beta is outside its window.
        ValidationError: if an A is not positive.
    """
    beta = check_beta(idx, beta)
    A_grid = sorted(float(A) for A in A_grid)
    if any(A <= 0 for A in A_grid):
        raise ValidationError("the vanishing-viscosity scan needs A > 0")
    s = float(idx.s)
    F0 = forward_transform(theta0)
    hs = homogeneous_sobolev_norm(F0, s)
    hs1 = homogeneous_sobolev_norm(F0, s - 1.0)
    alpha = float(idx.alpha)

    def cell(A):
        kappa = A ** -float(beta)
        return iterate(theta0, idx, PhysParams(alpha, kappa, A), n_max, t_end, **sim_kwargs)

    report = ViscosityReport(beta)
    for A, picard in zip(A_grid, ordered_map(cell, A_grid, threads)):
        margins = viscosity_margins(hs, hs1, A, idx, beta, constant)
        report.reports.append(picard)
        report.rows.append((A, A ** -float(beta), margins['hs_margin'], margins['hs_minus1_margin'],
                            int(margins['holds']), int(picard.contraction_stable), picard.max_ratio))
    return report


def nonlinear_reference(theta0: RealField, idx: IndexSet, params: PhysParams, t_end: float,
                        **sim_kwargs) -> Trajectory:
    """Direct nonlinear run on the schedule :func:`iterate` uses, for limit comparisons."""
    return run(theta0, picard_config(params, theta0.grid, t_end, idx, **sim_kwargs))


class LimitCheck(ModeledClass):
    """
    Distance between the last iterate and the direct nonlinear solution.

    Attributes:
        n (int): Index of the last completed iterate.
        d_n_max (float): Last recorded iterate distance.
        limit_distance (float): ||theta^n - theta||_{L^r(0, T; B^(s-1)_{p,2})}; inf when the direct run blew up.
        reference_blowup (Optional[BlowupFlag]): Flag of the direct run.
    """

    __slots__ = ['n', 'd_n_max', 'limit_distance', 'reference_blowup']

    def __init__(self, n: int, d_n_max: float, limit_distance: float, reference_blowup: Optional[BlowupFlag] = None):
        self.n = n
        self.d_n_max = float(d_n_max)
        self.limit_distance = float(limit_distance)
        self.reference_blowup = reference_blowup

    @property
    def within(self) -> bool:
        """limit_distance <= 2 d_n_max."""
        return self.reference_blowup is None and self.limit_distance <= 2.0 * self.d_n_max

    def rows(self) -> List[tuple]:
        return [(self.n, self.d_n_max, self.limit_distance, 'true' if self.within else 'false')]


def limit_agreement(report: PicardReport, theta0: RealField, t_end: float, **sim_kwargs) -> LimitCheck:
    """
    Compare the last iterate of ``report`` with :func:`nonlinear_reference` in L^r(0, T; B^(s-1)_{p,2}).

    Raises:
        ValidationError: if the report stopped on a blow-up or recorded no distance.
    """
    if report.blowup is not None or not report.distances:
        raise ValidationError("limit comparison needs a completed iteration with at least one distance")
    reference = nonlinear_reference(theta0, report.idx, report.params, t_end, **sim_kwargs)
    n = len(report.distances)
    d_n_max = report.distances[-1]
    if reference.blowup is not None:
        logger.warning("direct nonlinear run stopped at t=%.6g (%s)", reference.blowup.time, reference.blowup.reason)
        return LimitCheck(n, d_n_max, math.inf, reference.blowup)
    distance = lr_besov_distance(report.iterates[-1], reference, report.idx, float(report.idx.s) - 1.0)
    check = LimitCheck(n, d_n_max, distance)
    logger.info("iterate %d is %.4g from the direct solution (2 d_n = %.4g)", n, distance, 2.0 * d_n_max)
    return check
