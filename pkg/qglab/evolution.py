# SPDX-License-Identifier: Apache-2.0.

"""
Time integration of

    d/dt theta + kappa (-Laplacian)^(alpha/2) theta + A R_1 theta = -u . grad theta

in integrating-factor form: the linear part is the exact multiplier of
:func:`qglab.propagator.propagator_multiplier`, and only the right-hand side is advanced by the
classical fourth-order Runge-Kutta stages (Lawson's scheme). The advecting velocity is either
R^perp theta (the full equation) or frozen from another trajectory (the linear sub-problems of the
successive approximation), optionally with an external forcing.
"""

import logging
import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from qglab import ModeledClass, ValidationError
from qglab.littlewood_paley import block_lp_norms, homogeneous_sobolev_norm
from qglab.operators import DEALIAS_RULES, DEALIAS_TWO_THIRDS, PhysParams, advection_coeffs, velocity_arrays
from qglab.propagator import propagator_multiplier
from qglab.spectral import FieldError, Grid, RealField, SpectralField, forward_transform, ifft2_real, plancherel_norm
from qglab.trajectory import DIAGNOSTIC_COLUMNS, BlowupFlag, Trajectory

logger = logging.getLogger(__name__)

__all__ = ['SimConfig', 'Trajectory', 'BlowupFlag', 'VelocityTrajectory', 'VelocityCoverageError', 'step_nonlinear',
           'step_frozen', 'run', 'run_frozen', 'energy_budget', 'EnergyBudget', 'DIAGNOSTIC_COLUMNS']

DEFAULT_CFL = 0.5
DEFAULT_SNAPSHOTS = 21
BLOWUP_GROWTH = 1e6

Forcing = Callable[[float], np.ndarray]


class VelocityCoverageError(ValidationError):
    """
    A frozen velocity trajectory does not cover the requested time step.
    """
    pass


class SimConfig(ModeledClass):
    """
    Discretization of one run.

    Args:
        params: Physical parameters.
        grid: Grid of the state.
        t_end: Horizon, > 0.

    Keyword Args:
        dt (float): Fixed upper bound on the step. None leaves only the CFL bound.
        c_cfl (float): CFL factor in (0, 1]; the step never exceeds c_cfl * (L/n) / max|u|.
        snapshot_times (Sequence[float]): Output schedule; 0 and t_end are always included.
        snapshots (int): Number of evenly spaced outputs when ``snapshot_times`` is not given (default 21).
        dealias (str): Dealiasing rule of the advection term.
        block_p (Sequence[float]): Exponents whose block tables are recorded at every snapshot.
        hs (float): Sobolev index of the ``hs`` diagnostic (default 2 - alpha).
        nonlinear (bool): Include -u . grad theta (default True).
        keep_fields (bool): Store the snapshot fields; False keeps block tables only.
    """

    __slots__ = ['params', 'grid', 't_end', 'dt', 'c_cfl', 'snapshot_times', 'dealias', 'block_p', 'hs', 'nonlinear',
                 'keep_fields']

    def __init__(self, params: PhysParams, grid: Grid, t_end: float, **kwargs):
        if not (t_end > 0 and math.isfinite(t_end)):
            raise ValidationError("t_end must be positive and finite, got {}".format(t_end))
        self.params = params
        self.grid = grid
        self.t_end = float(t_end)

        dt = kwargs.get('dt')
        if dt is not None and not dt > 0:
            raise ValidationError("dt must be positive, got {}".format(dt))
        self.dt = None if dt is None else float(dt)

        self.c_cfl = float(kwargs.get('c_cfl', DEFAULT_CFL))
        if not (0.0 < self.c_cfl <= 1.0):
            raise ValidationError("c_cfl must lie in (0, 1], got {}".format(self.c_cfl))

        times = kwargs.get('snapshot_times')
        if times is None:
            count = int(kwargs.get('snapshots', DEFAULT_SNAPSHOTS))
            if count < 2:
                raise ValidationError("need at least 2 snapshots, got {}".format(count))
            times = np.linspace(0.0, self.t_end, count)
        times = np.asarray(times, dtype=np.float64)
        if times.size and (np.any(times < 0) or np.any(times > self.t_end) or np.any(np.diff(times) <= 0)):
            raise ValidationError("snapshot times must increase strictly within [0, t_end]")
        if times.size == 0 or times[0] > 0:
            times = np.concatenate([[0.0], times])
        if times[-1] < self.t_end:
            times = np.append(times, self.t_end)
        self.snapshot_times = times

        self.dealias = kwargs.get('dealias', DEALIAS_TWO_THIRDS)
        if self.dealias not in DEALIAS_RULES:
            raise ValidationError("unknown dealias rule '{}'".format(self.dealias))
        self.block_p = tuple(float(p) for p in kwargs.get('block_p', (2.0,)))
        hs = kwargs.get('hs')
        self.hs = 2.0 - params.alpha if hs is None else float(hs)
        self.nonlinear = bool(kwargs.get('nonlinear', True))
        self.keep_fields = bool(kwargs.get('keep_fields', True))

    def with_params(self, params: PhysParams) -> 'SimConfig':
        return SimConfig(params, self.grid, self.t_end, dt=self.dt, c_cfl=self.c_cfl,
                         snapshot_times=self.snapshot_times, dealias=self.dealias, block_p=self.block_p,
                         hs=self.hs, nonlinear=self.nonlinear,
                         keep_fields=self.keep_fields)


class VelocityTrajectory(ModeledClass):
    """
    Advecting velocity R^perp theta(t) of a stored theta trajectory, linearly interpolated in time.

    Args:
        source: Trajectory of theta with fields. None gives the zero velocity over [0, inf).
    """

    __slots__ = ['grid', 'source', 't_start', 't_stop', '_cache']

    _CACHE_SIZE = 4

    def __init__(self, source: Optional[Trajectory], grid: Optional[Grid] = None):
        if source is None and grid is None:
            raise ValidationError("a zero velocity needs a grid")
        if source is not None and not source.has_fields:
            raise ValidationError("velocity needs a trajectory with stored fields")
        self.grid = source.grid if source is not None else grid
        self.source = source
        if source is None:
            self.t_start, self.t_stop = 0.0, math.inf
        else:
            times = source.times
            self.t_start, self.t_stop = float(times[0]), float(times[-1])
        self._cache = {}  # type: Dict[float, Tuple[np.ndarray, np.ndarray]]

    @classmethod
    def zero(cls, grid: Grid) -> 'VelocityTrajectory':
        return cls(None, grid)

    def covers(self, t0: float, t1: float) -> bool:
        slack = 1e-12 * max(1.0, abs(t1))
        return t0 >= self.t_start - slack and t1 <= self.t_stop + slack

    def velocity_at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Physical-space (u1, u2) at time t."""
        if self.source is None:
            zero = np.zeros((self.grid.n, self.grid.n))
            return zero, zero
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        t_clamped = min(max(t, self.t_start), self.t_stop)
        u = velocity_arrays(self.grid, self.source.coeffs_at(t_clamped))
        if len(self._cache) >= self._CACHE_SIZE:
            self._cache.pop(next(iter(self._cache)))
        self._cache[t] = u
        return u

    def max_speed(self, t: float) -> float:
        u1, u2 = self.velocity_at(t)
        return float(np.max(np.sqrt(u1 * u1 + u2 * u2)))


def _lawson_rk4(c: np.ndarray, t: float, h: float, e_half: np.ndarray, e_full: np.ndarray,
                rhs: Callable[[float, np.ndarray], np.ndarray]) -> np.ndarray:
    k1 = rhs(t, c)
    k2 = rhs(t + 0.5 * h, e_half * (c + 0.5 * h * k1))
    k3 = rhs(t + 0.5 * h, e_half * c + 0.5 * h * k2)
    k4 = rhs(t + h, e_full * c + h * e_half * k3)
    return e_full * c + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)


def _nonlinear_rhs(cfg: SimConfig) -> Callable[[float, np.ndarray], np.ndarray]:
    grid = cfg.grid
    if not cfg.nonlinear:
        return lambda t, c: np.zeros_like(c)

    def rhs(t, c):
        u1, u2 = velocity_arrays(grid, c)
        return -advection_coeffs(grid, c, u1, u2, cfg.dealias)
    return rhs


def _frozen_rhs(cfg: SimConfig, u_traj: VelocityTrajectory,
                forcing: Optional[Forcing]) -> Callable[[float, np.ndarray], np.ndarray]:
    grid = cfg.grid

    def rhs(t, c):
        u1, u2 = u_traj.velocity_at(t)
        out = -advection_coeffs(grid, c, u1, u2, cfg.dealias)
        if forcing is not None:
            out = out + forcing(t)
        return out
    return rhs


def _step(c: np.ndarray, t: float, h: float, cfg: SimConfig, rhs) -> np.ndarray:
    e_half = propagator_multiplier(cfg.grid, cfg.params, 0.5 * h)
    e_full = propagator_multiplier(cfg.grid, cfg.params, h)
    return _lawson_rk4(c, t, h, e_half, e_full, rhs)


def _check_state(state: SpectralField, cfg: SimConfig):
    if state.grid != cfg.grid:
        raise FieldError("state grid {} does not match configuration grid {}".format(state.grid, cfg.grid))


def step_nonlinear(state: SpectralField, cfg: SimConfig, dt: float) -> SpectralField:
    """
    One integrating-factor RK4 step of the full equation.

    Raises:
        ValidationError: if dt <= 0.
        FieldError: if the step produced non-finite coefficients.
    """
    if not dt > 0:
        raise ValidationError("step size must be positive, got {}".format(dt))
    _check_state(state, cfg)
    out = _step(state.coeffs, 0.0, dt, cfg, _nonlinear_rhs(cfg))
    if not np.all(np.isfinite(out)):
        raise FieldError("non-finite state after step of size {}".format(dt))
    return SpectralField(cfg.grid, out)


def step_frozen(state: SpectralField, u_traj: VelocityTrajectory, forcing: Optional[Forcing], cfg: SimConfig,
                dt: float, t: float = 0.0) -> SpectralField:
    """
    One integrating-factor RK4 step from t to t + dt with velocity taken from ``u_traj``
    and optional forcing ``forcing(t)`` (Fourier coefficients).

    Raises:
        VelocityCoverageError: if ``u_traj`` does not cover [t, t + dt].
    """
    if not dt > 0:
        raise ValidationError("step size must be positive, got {}".format(dt))
    _check_state(state, cfg)
    if not u_traj.covers(t, t + dt):
        raise VelocityCoverageError("velocity covers [{}, {}], step needs [{}, {}]".format(
            u_traj.t_start, u_traj.t_stop, t, t + dt))
    out = _step(state.coeffs, t, dt, cfg, _frozen_rhs(cfg, u_traj, forcing))
    if not np.all(np.isfinite(out)):
        raise FieldError("non-finite state after step of size {}".format(dt))
    return SpectralField(cfg.grid, out)


def _max_speed(grid: Grid, c: np.ndarray) -> float:
    u1, u2 = velocity_arrays(grid, c)
    return float(np.max(np.sqrt(u1 * u1 + u2 * u2)))


def _diagnostics(cfg: SimConfig, t: float, c: np.ndarray, dt: float, max_u: float) -> tuple:
    F = SpectralField(cfg.grid, c)
    return (t, plancherel_norm(F), homogeneous_sobolev_norm(F, cfg.hs), homogeneous_sobolev_norm(F, cfg.hs - 1.0),
            dt, max_u)


def _march(c0: np.ndarray, cfg: SimConfig, rhs, speed_at: Callable[[float, np.ndarray], float],
           provenance: Optional[dict]) -> Trajectory:
    grid = cfg.grid
    critical = 2.0 - cfg.params.alpha
    traj = Trajectory(grid, cfg.block_p, provenance)

    c = grid.finish(np.array(c0, dtype=np.complex128))
    reference = homogeneous_sobolev_norm(SpectralField(grid, c), critical)
    t = 0.0
    last_dt = 0.0

    def record(time, state, speed):
        diag = _diagnostics(cfg, time, state, last_dt, speed)
        if cfg.keep_fields:
            traj.append(time, state, diagnostics=diag)
        else:
            traj.append(time, None, block_lp_norms(SpectralField(grid, state), cfg.block_p), diagnostics=diag)

    record(0.0, c, speed_at(0.0, c))
    steps = 0
    for target in cfg.snapshot_times[1:]:
        while t < target:
            speed = speed_at(t, c)
            h_max = target - t
            if cfg.dt is not None:
                h_max = min(h_max, cfg.dt)
            if speed > 0:
                h_max = min(h_max, cfg.c_cfl * grid.spacing / speed)
            count = max(1, int(math.ceil((target - t) / h_max - 1e-9)))
            h = (target - t) / count

            new = _step(c, t, h, cfg, rhs)
            if not np.all(np.isfinite(new)):
                traj.blowup = BlowupFlag('non-finite', t)
                logger.warning("run stopped at t=%.6g: non-finite state", t)
                return traj
            if reference > 0 and homogeneous_sobolev_norm(SpectralField(grid, new), critical) > \
                    BLOWUP_GROWTH * reference:
                traj.blowup = BlowupFlag('norm-growth', t)
                logger.warning("run stopped at t=%.6g: H^%g norm grew beyond %g times its initial value",
                               t, critical, BLOWUP_GROWTH)
                return traj
            c = new
            t = target if count == 1 else t + h
            last_dt = h
            steps += 1
        record(target, c, speed_at(target, c))
    logger.debug("run finished at t=%g after %d steps", t, steps)
    return traj


def run(theta0: RealField, cfg: SimConfig, provenance: Optional[dict] = None) -> Trajectory:
    """
    Integrate the full equation from ``theta0`` over [0, t_end].

    The step is min(dt, c_cfl * (L/n) / max|u|), shortened so that steps land on snapshot times.
    A non-finite state or H^(2-alpha) growth by more than 1e6 stops the run and sets ``blowup``
    on the returned (partial) trajectory.
    """
    if theta0.grid != cfg.grid:
        raise FieldError("initial data grid {} does not match configuration grid {}".format(theta0.grid, cfg.grid))
    grid = cfg.grid
    c0 = forward_transform(theta0).coeffs
    if cfg.nonlinear:
        def speed_at(t, c):
            return _max_speed(grid, c)
    else:
        def speed_at(t, c):
            return 0.0
    return _march(c0, cfg, _nonlinear_rhs(cfg), speed_at, provenance)


def run_frozen(theta0: SpectralField, u_traj: VelocityTrajectory, cfg: SimConfig, forcing: Optional[Forcing] = None,
               provenance: Optional[dict] = None) -> Trajectory:
    """
    Integrate the frozen-velocity linear equation

        d/dt theta + kappa (-Laplacian)^(alpha/2) theta + A R_1 theta + u(t) . grad theta = forcing(t)

    from ``theta0`` on the schedule of ``cfg``.

    Raises:
        VelocityCoverageError: if ``u_traj`` ends before t_end.
    """
    _check_state(theta0, cfg)
    if not u_traj.covers(0.0, cfg.t_end):
        raise VelocityCoverageError("velocity covers [{}, {}], run needs [0, {}]".format(
            u_traj.t_start, u_traj.t_stop, cfg.t_end))
    return _march(theta0.coeffs, cfg, _frozen_rhs(cfg, u_traj, forcing),
                  lambda t, c: u_traj.max_speed(t), provenance)


class EnergyBudget(ModeledClass):
    """
    Discrete energy law between consecutive snapshots.

    Attributes:
        times (numpy.ndarray): Left end of each interval.
        change (numpy.ndarray): ||theta(t_{k+1})||^2 - ||theta(t_k)||^2.
        dissipation (numpy.ndarray): -2 kappa * trapezoid of ||(-Laplacian)^(alpha/4) theta||^2.
        relative_error (numpy.ndarray): |change - dissipation| / max(|dissipation|, 1e-300).
    """

    __slots__ = ['times', 'change', 'dissipation', 'relative_error']

    def __init__(self, **kwargs):
        for slot in self.__slots__:
            setattr(self, slot, kwargs.get(slot))

    @property
    def max_error(self) -> float:
        return float(np.max(self.relative_error)) if self.relative_error.size else 0.0


def energy_budget(traj: Trajectory, params: PhysParams) -> EnergyBudget:
    """
    Compare d/dt ||theta||^2 with -2 kappa ||(-Laplacian)^(alpha/4) theta||^2 on a trajectory with fields.
    """
    times = traj.times
    energy = np.array([plancherel_norm(traj.field(i)) ** 2 for i in range(len(traj))])
    rate = np.array([homogeneous_sobolev_norm(traj.field(i), params.alpha / 2.0) ** 2 for i in range(len(traj))])
    dt = np.diff(times)
    change = np.diff(energy)
    dissipation = -2.0 * params.kappa * 0.5 * dt * (rate[:-1] + rate[1:])
    relative = np.abs(change - dissipation) / np.maximum(np.abs(dissipation), 1e-300)
    return EnergyBudget(times=times[:-1], change=change, dissipation=dissipation, relative_error=relative)


def diagnostics_rows(traj: Trajectory) -> Sequence[tuple]:
    """Rows of the diagnostics table, columns ``DIAGNOSTIC_COLUMNS``."""
    return list(traj.diagnostics)


def final_real_field(traj: Trajectory) -> RealField:
    """Physical-space samples of the last snapshot."""
    return RealField(traj.grid, ifft2_real(traj.final().coeffs), check_mean=False)
