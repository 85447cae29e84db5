# SPDX-License-Identifier: Apache-2.0.

"""
Periodic 2D grid, real and spectral field representations, transforms, quadrature norms,
seeded random-field ensembles and the ``QGF1`` snapshot format.

Conventions:

    * ``samples[i1, i2]`` holds the value at ``x = (i1 * L / n, i2 * L / n)``; xi_1 varies along axis 0.
    * Coefficients are kept in FFT order. The integer lattice is the centered set {-n/2, ..., n/2 - 1},
      scaled by 2*pi/L to give the wavenumbers xi.
    * The forward transform is the unnormalized sum, the inverse divides by n^2 (``scipy.fft`` "backward").
      With cell weight (L/n)^2 this gives the Plancherel identity
      ``integral |f|^2 dx = L^2 / n^4 * sum |coeffs|^2``.
    * The zero mode is always 0 and the Nyquist row/column (index n/2 on either axis) is zeroed
      after every multiplier.
"""

import logging
import math
import struct
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft

from qglab import ModeledClass, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_LENGTH = 2.0 * math.pi * 16.0

SNAPSHOT_MAGIC = b'QGF1'
_SNAPSHOT_HEADER = struct.Struct('<4sI5d')

ROUND_TRIP_TOLERANCE = 1e-12
HERMITIAN_TOLERANCE = 1e-12
MEAN_TOLERANCE = 1e-12

_fft_workers = None  # type: Optional[int]


class FieldError(ValidationError):
    """
    Field samples or coefficients violate a representation invariant.
    """
    pass


class HermitianSymmetryError(FieldError):
    """
    Spectral coefficients do not describe a real field.

    Attributes:
        max_asymmetry (float): max |F(xi) - conj(F(-xi))| relative to max |F|.
    """

    def __init__(self, max_asymmetry: float):
        super().__init__(
            "coefficients are not Hermitian-symmetric: max relative asymmetry {:.3e} exceeds {:.0e}".format(
                max_asymmetry, HERMITIAN_TOLERANCE))
        self.max_asymmetry = max_asymmetry


class BandError(ValidationError):
    """
    Requested dyadic band is not resolved by the grid.
    """
    pass


def set_fft_workers(workers: Optional[int]):
    """
    Set the number of threads ``scipy.fft`` may use per transform (None = library default).
    """
    global _fft_workers
    if workers is not None and workers <= 0:
        workers = None
    _fft_workers = workers


def fft2(samples: np.ndarray) -> np.ndarray:
    return scipy.fft.fft2(samples, workers=_fft_workers)


def ifft2_real(coeffs: np.ndarray) -> np.ndarray:
    return scipy.fft.ifft2(coeffs, workers=_fft_workers).real


class Grid(ModeledClass):
    """
    Square periodic grid of ``n x n`` points on the torus [0, length)^2.

    Args:
        n: Points per axis, positive and even.
        length: Domain period L > 0.

    Attributes:
        n (int): Points per axis.
        length (float): Domain period.
        k1 (numpy.ndarray): Integer wavenumbers along axis 0, shape (n, 1), FFT order.
        k2 (numpy.ndarray): Integer wavenumbers along axis 1, shape (1, n), FFT order.
        xi1 (numpy.ndarray): Physical wavenumbers (2*pi/L) * k1.
        xi2 (numpy.ndarray): Physical wavenumbers (2*pi/L) * k2.
        xi_abs (numpy.ndarray): |xi| on the full (n, n) lattice.
        keep_mask (numpy.ndarray): False on the Nyquist row and column.
        dealias_mask (numpy.ndarray): True where max(|k1|, |k2|) <= n/3 (two-thirds rule).
        j_lo (int): Lowest dyadic index whose block can be nonzero.
        j_hi (int): Highest dyadic index whose block can be nonzero.
    """

    __slots__ = ['n', 'length', 'k1', 'k2', 'xi1', 'xi2', 'xi_abs', 'keep_mask', 'dealias_mask', 'j_lo', 'j_hi']

    def __init__(self, n: int, length: float = DEFAULT_LENGTH):
        if int(n) != n or n <= 0:
            raise ValidationError("grid size n must be a positive integer, got {}".format(n))
        if n % 2:
            raise ValidationError("grid size n must be even, got {}".format(n))
        if not (length > 0 and math.isfinite(length)):
            raise ValidationError("domain length must be positive and finite, got {}".format(length))
        self.n = int(n)
        self.length = float(length)

        lattice = np.fft.fftfreq(self.n, 1.0 / self.n)
        self.k1 = lattice.reshape(self.n, 1)
        self.k2 = lattice.reshape(1, self.n)
        scale = 2.0 * math.pi / self.length
        self.xi1 = scale * self.k1
        self.xi2 = scale * self.k2
        self.xi_abs = np.sqrt(self.xi1 ** 2 + self.xi2 ** 2)

        half = self.n // 2
        self.keep_mask = (np.abs(self.k1) != half) & (np.abs(self.k2) != half)
        cutoff = self.n / 3.0
        self.dealias_mask = (np.abs(self.k1) <= cutoff) & (np.abs(self.k2) <= cutoff)

        self.j_lo = int(math.floor(math.log2(self.k_min)))
        self.j_hi = int(math.ceil(math.log2(math.sqrt(2.0) * half * scale)))

    def __eq__(self, other):
        return isinstance(other, Grid) and self.n == other.n and self.length == other.length

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash((self.n, self.length))

    @property
    def spacing(self) -> float:
        """Grid spacing L/n."""
        return self.length / self.n

    @property
    def cell_area(self) -> float:
        """Quadrature weight (L/n)^2."""
        return self.spacing ** 2

    @property
    def k_min(self) -> float:
        """Smallest nonzero |xi|, 2*pi/L."""
        return 2.0 * math.pi / self.length

    @property
    def k_nyquist(self) -> float:
        """Nyquist wavenumber (n/2) * 2*pi/L."""
        return self.n / 2.0 * self.k_min

    @property
    def j_nyquist(self) -> int:
        """Dyadic index of the shell containing the Nyquist wavenumber."""
        return int(math.floor(math.log2(self.k_nyquist)))

    @property
    def dyadic_range(self) -> range:
        """All dyadic indices whose block may be nonzero, ``range(j_lo, j_hi + 1)``."""
        return range(self.j_lo, self.j_hi + 1)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical coordinates (x1, x2), each of shape (n, n)."""
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, indexing='ij')

    def unit_multiplier(self, numerator: np.ndarray) -> np.ndarray:
        """
        Return ``numerator / |xi|`` with the zero mode set to 0.
        """
        with np.errstate(divide='ignore', invalid='ignore'):
            out = np.where(self.xi_abs > 0, numerator / np.where(self.xi_abs > 0, self.xi_abs, 1.0), 0.0)
        return out

    def finish(self, coeffs: np.ndarray) -> np.ndarray:
        """
        Zero the Nyquist row/column and the zero mode, in place. Returns ``coeffs``.
        """
        coeffs *= self.keep_mask
        coeffs[0, 0] = 0.0
        return coeffs


class RealField(ModeledClass):
    """
    Real samples of a mean-zero periodic field.

    Args:
        grid: Grid the samples live on.
        samples: (n, n) real array.
        check_mean: Validate the zero-mean invariant (fields produced by
            :func:`inverse_transform` satisfy it by construction).

    Raises:
        FieldError: if the shape is wrong, a sample is not finite, or the mean is not zero.
    """

    __slots__ = ['grid', 'samples']

    def __init__(self, grid: Grid, samples, check_mean: bool = True):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.shape != (grid.n, grid.n):
            raise FieldError("samples have shape {}, grid needs {}".format(samples.shape, (grid.n, grid.n)))
        if not np.all(np.isfinite(samples)):
            raise FieldError("field contains non-finite samples")
        if check_mean:
            scale = float(np.max(np.abs(samples))) if samples.size else 0.0
            mean = float(np.mean(samples))
            if abs(mean) > MEAN_TOLERANCE * scale:
                raise FieldError(
                    "field mean {:.3e} is not zero (max |sample| {:.3e}); use RealField.from_samples".format(
                        mean, scale))
        self.grid = grid
        self.samples = samples

    @classmethod
    def from_samples(cls, grid: Grid, samples) -> 'RealField':
        """Build a field from arbitrary finite samples, removing their mean."""
        samples = np.array(samples, dtype=np.float64)
        if samples.shape != (grid.n, grid.n):
            raise FieldError("samples have shape {}, grid needs {}".format(samples.shape, (grid.n, grid.n)))
        if not np.all(np.isfinite(samples)):
            raise FieldError("field contains non-finite samples")
        samples -= samples.mean()
        return cls(grid, samples, check_mean=False)

    @classmethod
    def zeros(cls, grid: Grid) -> 'RealField':
        return cls(grid, np.zeros((grid.n, grid.n)), check_mean=False)

    def __mul__(self, scalar: float) -> 'RealField':
        return RealField(self.grid, self.samples * scalar, check_mean=False)

    __rmul__ = __mul__


class SpectralField(ModeledClass):
    """
    Fourier coefficients of a field on a grid, in FFT order.

    Args:
        grid: Grid of the field.
        coeffs: (n, n) complex coefficients. The zero mode must vanish.
    """

    __slots__ = ['grid', 'coeffs']

    def __init__(self, grid: Grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (grid.n, grid.n):
            raise FieldError("coefficients have shape {}, grid needs {}".format(coeffs.shape, (grid.n, grid.n)))
        scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
        if abs(coeffs[0, 0]) > MEAN_TOLERANCE * scale:
            raise FieldError("zero-mode coefficient must vanish, got {}".format(coeffs[0, 0]))
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, grid: Grid) -> 'SpectralField':
        return cls(grid, np.zeros((grid.n, grid.n), dtype=np.complex128))

    def _check_grid(self, other: 'SpectralField'):
        if self.grid != other.grid:
            raise FieldError("grid mismatch: {} vs {}".format(self.grid, other.grid))

    def __add__(self, other: 'SpectralField') -> 'SpectralField':
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: 'SpectralField') -> 'SpectralField':
        self._check_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> 'SpectralField':
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar) -> 'SpectralField':
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def hermitian_asymmetry(self) -> float:
        """
        Relative departure from Hermitian symmetry, max |F(xi) - conj(F(-xi))| / max |F|.
        """
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        reflected = np.roll(self.coeffs[::-1, ::-1], 1, axis=(0, 1))
        return float(np.max(np.abs(self.coeffs - np.conj(reflected)))) / scale

    def l2_norm(self) -> float:
        """L2 norm through Plancherel."""
        return plancherel_norm(self)


def forward_transform(f: RealField) -> SpectralField:
    """
    Discrete Fourier transform of a real field (unnormalized sum).

    Raises:
        FieldError: if any sample is not finite.
    """
    if not np.all(np.isfinite(f.samples)):
        raise FieldError("field contains non-finite samples")
    coeffs = fft2(f.samples)
    coeffs[0, 0] = 0.0
    return SpectralField(f.grid, coeffs)


def inverse_transform(F: SpectralField) -> RealField:
    """
    Inverse transform of Hermitian-symmetric coefficients to a real field.

    Raises:
        HermitianSymmetryError: if the coefficients are not Hermitian within tolerance.
    """
    asymmetry = F.hermitian_asymmetry()
    if asymmetry > HERMITIAN_TOLERANCE:
        raise HermitianSymmetryError(asymmetry)
    return RealField(F.grid, ifft2_real(F.coeffs), check_mean=False)


def _check_exponent(p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise ValidationError("L^p exponent must satisfy p >= 1 or p = inf, got {}".format(p))
    return p


def lp_norm_samples(samples: np.ndarray, p: float, cell_area: float) -> float:
    p = _check_exponent(p)
    if math.isinf(p):
        return float(np.max(np.abs(samples)))
    if p == 2.0:
        return math.sqrt(cell_area * float(np.sum(samples * samples)))
    return (cell_area * float(np.sum(np.abs(samples) ** p))) ** (1.0 / p)


def lp_norm(f: RealField, p: float) -> float:
    """
    Composite-rectangle quadrature of (integral |f|^p dx)^(1/p) with cell weight (L/n)^2;
    max |samples| for p = inf.
    """
    return lp_norm_samples(f.samples, p, f.grid.cell_area)


def plancherel_norm(F: SpectralField) -> float:
    """L2 norm from coefficients, (L^2 / n^4 * sum |coeffs|^2)^(1/2)."""
    grid = F.grid
    return math.sqrt(float(np.sum(np.abs(F.coeffs) ** 2))) * grid.length / grid.n ** 2


class EnsembleSpec(ModeledClass):
    """
    Recipe for a seeded ensemble of band-limited Gaussian random fields.

    All attributes may be set by keyword in the constructor.

    Keyword Args:
        count (int): Number of fields, >= 1.
        seed (int): 64-bit seed of the generator.
        spectrum_slope (float): Power-law exponent of the expected |f^(xi)|.
        band (Tuple[int, int]): Dyadic limits (j_min, j_max); fields live on 2^(j_min-1) <= |xi| <= 2^(j_max+1).
        amplitude (float): L2 norm of every generated field.
        dealias (bool): Also restrict to the two-thirds dealiased lattice (default True).
    """

    __slots__ = ['count', 'seed', 'spectrum_slope', 'band', 'amplitude', 'dealias']

    def __init__(self, **kwargs):
        self.count = int(kwargs.get('count', 1))
        self.seed = int(kwargs.get('seed', 0))
        self.spectrum_slope = float(kwargs.get('spectrum_slope', 0.0))
        band = kwargs.get('band')
        if band is None:
            raise ValidationError("EnsembleSpec needs keyword argument 'band'")
        self.band = (int(band[0]), int(band[1]))
        self.amplitude = float(kwargs.get('amplitude', 1.0))
        self.dealias = bool(kwargs.get('dealias', True))

        if self.count < 1:
            raise ValidationError("ensemble count must be >= 1, got {}".format(self.count))
        if self.band[0] > self.band[1]:
            raise ValidationError("ensemble band needs j_min <= j_max, got {}".format(self.band))
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ValidationError("ensemble amplitude must be finite and >= 0")


def band_mask(grid: Grid, j_min: int, j_max: int) -> np.ndarray:
    """Boolean mask of 2^(j_min-1) <= |xi| <= 2^(j_max+1), Nyquist and zero mode excluded."""
    mask = (grid.xi_abs >= 2.0 ** (j_min - 1)) & (grid.xi_abs <= 2.0 ** (j_max + 1)) & grid.keep_mask
    mask[0, 0] = False
    return mask


def gaussian_ensemble(spec: EnsembleSpec, grid: Grid) -> List[RealField]:
    """
    Deterministic ensemble of mean-zero Gaussian fields with expected |f^(xi)| proportional to
    |xi|^spectrum_slope on the dyadic band of ``spec``.

    Raises:
        BandError: if the band lies outside the shells the grid resolves.
    """
    j_min, j_max = spec.band
    if j_max > grid.j_nyquist:
        raise BandError("band j_max={} is above the Nyquist shell j={} (n={}, L={})".format(
            j_max, grid.j_nyquist, grid.n, grid.length))
    if j_min < grid.j_lo:
        raise BandError("band j_min={} is below the lowest resolved shell j={} (L={})".format(
            j_min, grid.j_lo, grid.length))
    mask = band_mask(grid, j_min, j_max)
    if spec.dealias:
        mask &= grid.dealias_mask
    if not np.any(mask):
        raise BandError("band {} contains no resolved wavenumbers".format(spec.band))

    with np.errstate(divide='ignore'):
        shape = np.where(mask, np.where(grid.xi_abs > 0, grid.xi_abs, 1.0) ** spec.spectrum_slope, 0.0)

    rng = np.random.default_rng(spec.seed)
    fields = []
    for _ in range(spec.count):
        white = rng.standard_normal((grid.n, grid.n))
        samples = ifft2_real(fft2(white) * shape)
        samples -= samples.mean()
        norm = lp_norm_samples(samples, 2, grid.cell_area)
        if norm > 0:
            samples *= spec.amplitude / norm
        fields.append(RealField(grid, samples, check_mean=False))
    logger.debug("generated %d fields on band %s (n=%d, slope=%g)", spec.count, spec.band, grid.n,
                 spec.spectrum_slope)
    return fields


def shell_amplitude_slope(F: SpectralField, j_min: int, j_max: int) -> float:
    """
    Log-log regression slope of the shell-averaged |F| against |xi| over unit-width
    integer shells inside the band 2^(j_min-1) <= |xi| <= 2^(j_max+1).
    """
    grid = F.grid
    mask = band_mask(grid, j_min, j_max) & (np.abs(F.coeffs) > 0)
    radius = np.rint(grid.xi_abs / grid.k_min).astype(int)
    shells = np.unique(radius[mask])
    xs, ys = [], []
    for shell in shells:
        sel = mask & (radius == shell)
        xs.append(math.log(shell * grid.k_min))
        ys.append(math.log(float(np.mean(np.abs(F.coeffs[sel])))))
    if len(xs) < 2:
        raise BandError("need at least two populated shells to fit a slope")
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def gaussian_bump(grid: Grid, width: float, center: Optional[Sequence[float]] = None) -> RealField:
    """
    Mean-removed periodized Gaussian bump exp(-|x - c|^2 / (2 width^2)), unit L1 norm before mean removal.
    """
    if center is None:
        center = (grid.length / 2.0, grid.length / 2.0)
    x1, x2 = grid.coordinates()
    d1 = (x1 - center[0] + grid.length / 2.0) % grid.length - grid.length / 2.0
    d2 = (x2 - center[1] + grid.length / 2.0) % grid.length - grid.length / 2.0
    bump = np.exp(-(d1 ** 2 + d2 ** 2) / (2.0 * width ** 2)) / (2.0 * math.pi * width ** 2)
    return RealField.from_samples(grid, bump)


class Snapshot(ModeledClass):
    """
    Contents of a ``QGF1`` snapshot file.

    Attributes:
        field (RealField): Samples on a grid rebuilt from n and L.
        alpha (float): Dissipation order.
        kappa (float): Dissipation coefficient.
        A (float): Dispersion parameter.
        t (float): Time of the sample.
    """

    __slots__ = ['field', 'alpha', 'kappa', 'A', 't']

    def __init__(self, field: RealField, alpha: float = 0.0, kappa: float = 0.0, A: float = 0.0, t: float = 0.0):
        self.field = field
        self.alpha = alpha
        self.kappa = kappa
        self.A = A
        self.t = t


def write_snapshot(path: str, snapshot: Snapshot) -> str:
    """
    Write ``magic "QGF1" | u32 n | f64 L, alpha, kappa, A, t | n*n f64 samples`` (little-endian, row-major).
    """
    grid = snapshot.field.grid
    header = _SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, grid.n, grid.length, snapshot.alpha, snapshot.kappa,
                                   snapshot.A, snapshot.t)
    with open(path, 'wb') as f:
        f.write(header)
        f.write(np.ascontiguousarray(snapshot.field.samples, dtype='<f8').tobytes(order='C'))
    return path


def read_snapshot(path: str) -> Snapshot:
    """
    Read a ``QGF1`` snapshot written by :func:`write_snapshot`.

    Raises:
        FieldError: on a bad magic number or truncated payload.
    """
    with open(path, 'rb') as f:
        header = f.read(_SNAPSHOT_HEADER.size)
        if len(header) != _SNAPSHOT_HEADER.size:
            raise FieldError("{}: truncated snapshot header".format(path))
        magic, n, length, alpha, kappa, A, t = _SNAPSHOT_HEADER.unpack(header)
        if magic != SNAPSHOT_MAGIC:
            raise FieldError("{}: bad magic {!r}, expected {!r}".format(path, magic, SNAPSHOT_MAGIC))
        payload = f.read()
    if len(payload) != 8 * n * n:
        raise FieldError("{}: expected {} sample bytes, found {}".format(path, 8 * n * n, len(payload)))
    samples = np.frombuffer(payload, dtype='<f8').reshape(n, n).astype(np.float64)
    field = RealField.from_samples(Grid(n, length), samples)
    return Snapshot(field, alpha=alpha, kappa=kappa, A=A, t=t)
