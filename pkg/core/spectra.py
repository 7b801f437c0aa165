"""Polarization-resolved photoluminescence spectra of the cascade and their analysis metrics.

The laser-parallel (H) branch of each line carries the static FSS plus the AC-Stark shift
present when the photon was emitted: the XX photon is redshifted, the X photon blueshifted.
The orthogonal (V) branch is unshifted. Energies are in eV, splittings and linewidths in ueV."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
from scipy.signal import fftconvolve

from core.cascade.model import PulseParams, QdParams, StarkCalibration, peak_stark_splitting, sample_emission_events
from core.consts import (DEFAULT_INSTRUMENT_FWHM, FWHM_TO_SIGMA, GRID_MARGIN_LINEWIDTHS, LORENTZIAN_SUPPORT,
                         MAX_MASS_OUTSIDE_GRID, UEV_PER_EV)
from core.fitting import fit_sinusoid
from core.seeding import RandomState
from core.workspace import write_csv

logger = logging.getLogger(__name__)

Line = Literal['X', 'XX']
LINES = ('X', 'XX')

SPECTRUM_HEADER = ('energy_ev', 'intensity', 'pol_angle_deg', 'line')

# Relative spacing tolerance of a uniform grid
_UNIFORM_RTOL = 1e-6
# Gaussian instrument kernels are cut at this many standard deviations
_GAUSSIAN_SUPPORT = 6


class GridError(ValueError):
    pass


class WindowError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    energies: np.ndarray  # eV, strictly increasing
    intensities: np.ndarray
    pol_angle: float  # deg
    line: Line

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        intensities = np.asarray(self.intensities, dtype=float)
        if energies.ndim != 1 or energies.shape != intensities.shape or len(energies) < 2:
            raise GridError('energies and intensities must be 1-D arrays of equal length (>= 2)')
        if np.any(np.diff(energies) <= 0):
            raise GridError('energy grid must be strictly increasing')
        if np.any(intensities < 0):
            raise ValueError('intensities must be non-negative')
        object.__setattr__(self, 'energies', energies)
        object.__setattr__(self, 'intensities', intensities)

    @property
    def bin_widths(self) -> np.ndarray:
        return bin_widths(self.energies)

    @property
    def area(self) -> float:
        return float(np.sum(self.intensities * self.bin_widths))

    def normalized(self) -> 'Spectrum':
        area = self.area
        if area <= 0:
            raise ValueError('cannot normalize a spectrum with zero area')
        return Spectrum(self.energies, self.intensities / area, self.pol_angle, self.line)


@dataclass(frozen=True)
class AnalysisWindow:
    lo: float  # eV
    hi: float  # eV

    def __post_init__(self):
        if not self.lo < self.hi:
            raise WindowError(f'window bounds must satisfy lo < hi (got {self.lo}, {self.hi})')

    def mask(self, energies: np.ndarray) -> np.ndarray:
        return (energies >= self.lo) & (energies <= self.hi)

    def to_list(self) -> list[float]:
        return [self.lo, self.hi]


class BranchSpectra(NamedTuple):
    """Area-normalized laser-parallel and orthogonal branches on a shared grid."""
    parallel: np.ndarray
    orthogonal: np.ndarray


class SpectrumGrid(NamedTuple):
    energies: np.ndarray
    noise_window: AnalysisWindow


class SplittingEstimate(NamedTuple):
    value: float  # ueV
    std: float  # ueV


def bin_widths(energies: np.ndarray) -> np.ndarray:
    """Midpoint bin widths, so sum(I * width) is the trapezoidal area."""
    edges = np.concatenate(([energies[0]], (energies[1:] + energies[:-1]) / 2, [energies[-1]]))
    return np.diff(edges)


def _grid_step(grid: np.ndarray) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise GridError('the energy grid needs at least two points')
    steps = np.diff(grid)
    if np.any(steps <= 0):
        raise GridError('energy grid must be strictly increasing')
    if np.max(np.abs(steps - steps.mean())) > _UNIFORM_RTOL * steps.mean():
        raise GridError('energy grid must be uniformly spaced')
    return float(steps.mean())


def _deposit(centers: np.ndarray, grid: np.ndarray, step: float) -> np.ndarray:
    """Linear-interpolation histogram of the line centers, dropping those off the grid."""
    position = (centers - grid[0]) / step
    inside = (position >= 0) & (position <= len(grid) - 1)
    position = position[inside]
    lower = np.minimum(np.floor(position).astype(int), len(grid) - 2)
    fraction = position - lower
    histogram = np.bincount(lower, weights=1 - fraction, minlength=len(grid))
    histogram += np.bincount(lower + 1, weights=fraction, minlength=len(grid))
    return histogram[:len(grid)]


def _kernel(profile, half_width: float, step: float, n_grid: int) -> np.ndarray:
    half_len = min(int(math.ceil(half_width / step)), n_grid - 1)
    offsets = np.arange(-half_len, half_len + 1) * step
    kernel = profile(offsets)
    return kernel / kernel.sum()


def lorentzian_kernel(linewidth: float, step: float, n_grid: int) -> np.ndarray:
    """Discrete Lorentzian of FWHM `linewidth` (eV), truncated at LORENTZIAN_SUPPORT linewidths."""
    gamma = linewidth / 2
    return _kernel(lambda d: gamma / (d**2 + gamma**2), LORENTZIAN_SUPPORT * linewidth, step, n_grid)


def gaussian_kernel(fwhm: float, step: float, n_grid: int) -> np.ndarray:
    sigma = fwhm * FWHM_TO_SIGMA
    return _kernel(lambda d: np.exp(-d**2 / (2 * sigma**2)), _GAUSSIAN_SUPPORT * sigma, step, n_grid)


def _broaden(histogram: np.ndarray, grid: np.ndarray, step: float, linewidth: float,
             instrument_fwhm: float) -> np.ndarray:
    """Convolve with the natural line shape and the instrument response, then normalize the area."""
    profile = fftconvolve(histogram, lorentzian_kernel(linewidth / UEV_PER_EV, step, len(grid)), mode='same')
    if instrument_fwhm > 0:
        profile = fftconvolve(profile, gaussian_kernel(instrument_fwhm / UEV_PER_EV, step, len(grid)), mode='same')
    profile = np.clip(profile, 0, None)
    area = float(np.sum(profile * bin_widths(grid)))
    if area <= 0:
        raise GridError('no spectral weight falls on the grid')
    return profile / area


def _line_parameters(qd: QdParams, line: Line) -> tuple[float, float, int]:
    """(line energy in eV, natural linewidth in ueV, direction of the parallel-branch shift)."""
    match line:
        case 'XX':
            return qd.e_xx_line, qd.linewidth_xx, -1
        case 'X':
            return qd.e_x_line, qd.linewidth_x, +1
        case _:
            raise ValueError(f'line must be one of {LINES} (got {line!r})')


def simulate_branches(qd: QdParams,
                      pulse: PulseParams,
                      cal: StarkCalibration,
                      line: Line,
                      grid: np.ndarray,
                      instrument_fwhm: float = DEFAULT_INSTRUMENT_FWHM,
                      n: int = 100_000,
                      seed: RandomState = 0) -> BranchSpectra:
    """Parallel and orthogonal branch spectra from one Monte Carlo sample of emission events."""
    grid = np.asarray(grid, dtype=float)
    step = _grid_step(grid)
    if instrument_fwhm < 0:
        raise ValueError(f'instrument_fwhm must be non-negative (got {instrument_fwhm})')
    energy, linewidth, direction = _line_parameters(qd, line)

    events = sample_emission_events(qd, pulse, cal, n, seed)
    shifts = events.e_shift_xx if line == 'XX' else events.e_shift_x
    centers = energy + direction * (qd.fss + shifts) / UEV_PER_EV

    margin = GRID_MARGIN_LINEWIDTHS * linewidth / UEV_PER_EV
    outside = float(np.mean((centers - margin < grid[0]) | (centers + margin > grid[-1])))
    if energy - margin < grid[0] or energy + margin > grid[-1]:
        outside = 1.0
    if outside >= MAX_MASS_OUTSIDE_GRID:
        raise GridError(f'{outside:.2%} of the {line} emission falls within {GRID_MARGIN_LINEWIDTHS} linewidths '
                        f'of the grid edges [{grid[0]}, {grid[-1]}] eV')

    parallel = _broaden(_deposit(centers, grid, step), grid, step, linewidth, instrument_fwhm)
    orthogonal = _broaden(_deposit(np.array([energy]), grid, step), grid, step, linewidth, instrument_fwhm)
    return BranchSpectra(parallel, orthogonal)


def mix_branches(branches: BranchSpectra, grid: np.ndarray, line: Line, pol_angle: float,
                 laser_angle: float) -> Spectrum:
    """Spectrum behind a linear analyzer at `pol_angle` (deg) for a laser polarized at `laser_angle`."""
    weight = math.cos(math.radians(pol_angle - laser_angle))**2
    intensities = weight * branches.parallel + (1 - weight) * branches.orthogonal
    return Spectrum(grid, intensities, pol_angle, line).normalized()


def simulate_spectrum(qd: QdParams,
                      pulse: PulseParams,
                      cal: StarkCalibration,
                      line: Line,
                      pol_angle: float,
                      grid: np.ndarray,
                      instrument_fwhm: float = DEFAULT_INSTRUMENT_FWHM,
                      n: int = 100_000,
                      seed: RandomState = 0) -> Spectrum:
    branches = simulate_branches(qd, pulse, cal, line, grid, instrument_fwhm, n, seed)
    return mix_branches(branches, np.asarray(grid, dtype=float), line, pol_angle, pulse.pol_angle)


def spectrum_grid(qd: QdParams,
                  pulse: PulseParams,
                  cal: StarkCalibration,
                  line: Line,
                  step: float,
                  instrument_fwhm: float = DEFAULT_INSTRUMENT_FWHM) -> SpectrumGrid:
    """Uniform grid (step in ueV) covering the line, its largest Stark shift and a signal-free margin.

    The noise window is the outer margin on the side opposite to the sideband."""
    if not step > 0:
        raise GridError(f'grid step must be positive (got {step})')
    energy, linewidth, direction = _line_parameters(qd, line)
    stark = peak_stark_splitting(pulse, cal) if pulse.is_on else 0.0
    reach = 2 * GRID_MARGIN_LINEWIDTHS * linewidth + _GAUSSIAN_SUPPORT * instrument_fwhm * FWHM_TO_SIGMA
    noise = max(reach / 2, 10 * step)
    near, far = reach + noise, reach + qd.fss + stark
    lo, hi = (far, near) if direction < 0 else (near, far)

    energies = energy + np.arange(-math.ceil(lo / step), math.ceil(hi / step) + 1) * step / UEV_PER_EV
    if direction < 0:
        window = AnalysisWindow(energies[-1] - noise / UEV_PER_EV, energies[-1])
    else:
        window = AnalysisWindow(energies[0], energies[0] + noise / UEV_PER_EV)
    logger.debug(f'{line} grid: {len(energies)} points from {energies[0]:.6f} to {energies[-1]:.6f} eV')
    return SpectrumGrid(energies, window)


def centroid(spec: Spectrum, window: AnalysisWindow, background: float = 0.0) -> float:
    """Intensity-weighted mean energy (eV) inside the window after subtracting `background`."""
    mask = window.mask(spec.energies)
    if not mask.any():
        raise WindowError(f'window [{window.lo}, {window.hi}] eV does not intersect the grid')
    weights = np.clip(spec.intensities[mask] - background, 0, None)
    if weights.sum() <= 0:
        raise WindowError(f'no intensity above the background in [{window.lo}, {window.hi}] eV')
    return float(np.sum(spec.energies[mask] * weights) / weights.sum())


def splitting_amplitude(series: list[tuple[float, float]]) -> SplittingEstimate:
    """Peak-to-peak energy splitting (ueV) of centroids versus analyzer angle.

    Fits c(theta) = B + (A / 2) cos(2 (theta - theta_0)) to (angle in deg, centroid in eV)
    pairs. The standard error is scaled by the reduced chi-square of the unweighted fit."""
    if len(series) < 6:
        raise WindowError(f'the splitting fit needs at least 6 analyzer angles (got {len(series)})')
    centroids = np.array([c for _, c in series], dtype=float)
    relative = (centroids - centroids.mean()) * UEV_PER_EV
    fit = fit_sinusoid([(angle, value, 1.0) for (angle, _), value in zip(series, relative)])
    dof = len(series) - 3
    scale = fit.residual_norm / math.sqrt(dof) if dof > 0 else 0.0
    return SplittingEstimate(2 * fit.params['amplitude'], 2 * fit.errors['amplitude'] * scale)


def sideband_fraction(spec_parallel: Spectrum, spec_orthogonal: Spectrum, noise_window: AnalysisWindow) -> float:
    """Positive-part area of the normalized orthogonal-minus-parallel difference.

    The mean of |difference| over `noise_window` is subtracted first as a baseline."""
    if not np.array_equal(spec_parallel.energies, spec_orthogonal.energies):
        raise GridError('spectra must share the same energy grid')
    difference = spec_orthogonal.normalized().intensities - spec_parallel.normalized().intensities
    mask = noise_window.mask(spec_parallel.energies)
    if not mask.any():
        raise WindowError('noise window does not intersect the grid')
    difference = difference - np.mean(np.abs(difference[mask]))
    area = float(np.sum(np.clip(difference, 0, None) * spec_parallel.bin_widths))
    return min(1.0, max(0.0, area))


def write_spectra_csv(spectra: list[Spectrum], path: Path) -> Path:
    rows = ((e, i, s.pol_angle, s.line) for s in spectra for e, i in zip(s.energies, s.intensities))
    return write_csv(path, SPECTRUM_HEADER, rows)
