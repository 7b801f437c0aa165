"""Forward model of the XX-X cascade under two-photon excitation.

The laser dresses the X level whose dipole is aligned with its polarization, adding a
transient splitting S_peak * f(t) on top of the static FSS. The X photon then carries the
phase (1/hbar) * integral of S(t) between the two emission times."""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special, stats

from core.consts import DEFAULT_S_CAL, DEFAULT_TAU_CAL, HBAR_UEV_PS, PREPARATION_SPAN, UEV_PER_EV
from core.seeding import RandomState, as_generator
from core.units import DomainError, lifetime_to_linewidth

PulseShape = Literal['gaussian', 'square']
PULSE_SHAPES = ('gaussian', 'square')

_GAUSSIAN_RATE = 4 * math.log(2)


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise DomainError(message)


@dataclass(frozen=True)
class QdParams:
    tau_xx: float = 35.0  # ps
    tau_x: float = 53.0  # ps
    fss: float = 0.8  # ueV
    e_x_line: float = 1.58860  # eV
    e_xx_line: float = 1.58420  # eV
    purcell: float = 1.0

    def __post_init__(self):
        _check(math.isfinite(self.tau_xx) and self.tau_xx > 0, f'tau_xx must be positive (got {self.tau_xx})')
        _check(math.isfinite(self.tau_x) and self.tau_x > 0, f'tau_x must be positive (got {self.tau_x})')
        _check(math.isfinite(self.fss) and self.fss >= 0, f'fss must be non-negative (got {self.fss})')
        _check(self.e_xx_line < self.e_x_line,
               f'XX line ({self.e_xx_line} eV) must lie below the X line ({self.e_x_line} eV)')
        _check(self.purcell > 0, f'purcell must be positive (got {self.purcell})')

    @property
    def binding_energy(self) -> float:
        """XX binding energy in ueV."""
        return (self.e_x_line - self.e_xx_line) * UEV_PER_EV

    @property
    def linewidth_xx(self) -> float:
        return lifetime_to_linewidth(self.tau_xx)

    @property
    def linewidth_x(self) -> float:
        return lifetime_to_linewidth(self.tau_x)


@dataclass(frozen=True)
class PulseParams:
    tau_l: float = 20.0  # ps, FWHM of the intensity envelope
    area: float = math.pi  # rad
    shape: PulseShape = 'gaussian'
    pol_angle: float = 0.0  # deg, H = 0

    def __post_init__(self):
        _check(math.isfinite(self.tau_l) and self.tau_l >= 0, f'tau_l must be non-negative (got {self.tau_l})')
        _check(math.isfinite(self.area) and self.area >= 0, f'area must be non-negative (got {self.area})')
        _check(self.shape in PULSE_SHAPES, f'shape must be one of {PULSE_SHAPES} (got {self.shape!r})')

    @property
    def is_on(self) -> bool:
        return self.tau_l > 0 and self.area > 0

    @property
    def half_window(self) -> float:
        """Half width (ps) of the interval in which the XX is prepared."""
        if self.shape == 'square':
            return self.tau_l / 2
        return PREPARATION_SPAN * self.tau_l


@dataclass(frozen=True)
class StarkCalibration:
    s_cal: float = DEFAULT_S_CAL  # ueV at area = pi and tau_l = tau_cal
    tau_cal: float = DEFAULT_TAU_CAL  # ps

    def __post_init__(self):
        _check(math.isfinite(self.s_cal) and self.s_cal >= 0, f's_cal must be non-negative (got {self.s_cal})')
        _check(math.isfinite(self.tau_cal) and self.tau_cal > 0, f'tau_cal must be positive (got {self.tau_cal})')


@dataclass(frozen=True)
class EmissionEvent:
    t_xx: float  # ps, relative to the pulse peak
    t_x: float  # ps
    phi: float  # rad
    e_shift_xx: float  # ueV, XX redshift at t_xx
    e_shift_x: float  # ueV, X blueshift at t_x


@dataclass(frozen=True)
class EmissionEvents:
    """A batch of emission events stored column-wise."""

    t_xx: np.ndarray
    t_x: np.ndarray
    phi: np.ndarray
    e_shift_xx: np.ndarray
    e_shift_x: np.ndarray

    def __len__(self) -> int:
        return len(self.phi)

    def __getitem__(self, index: int) -> EmissionEvent:
        return EmissionEvent(float(self.t_xx[index]), float(self.t_x[index]), float(self.phi[index]),
                             float(self.e_shift_xx[index]), float(self.e_shift_x[index]))

    def select(self, mask: np.ndarray) -> 'EmissionEvents':
        return EmissionEvents(self.t_xx[mask], self.t_x[mask], self.phi[mask], self.e_shift_xx[mask],
                              self.e_shift_x[mask])


def peak_stark_splitting(pulse: PulseParams, cal: StarkCalibration) -> float:
    """Peak AC-Stark splitting (ueV) of the laser-aligned X level.

    The two-photon area scales as peak intensity times duration and the shift is linear in
    intensity, so S_peak = s_cal * (area / pi) * (tau_cal / tau_l)."""
    if pulse.tau_l <= 0:
        raise DomainError('the peak Stark splitting is undefined for a zero pulse duration')
    return cal.s_cal * (pulse.area / math.pi) * (cal.tau_cal / pulse.tau_l)


def envelope(t, pulse: PulseParams):
    """Intensity envelope normalized to f(0) = 1."""
    t = np.asarray(t, dtype=float)
    if pulse.tau_l <= 0:
        return np.zeros_like(t)
    if pulse.shape == 'square':
        return (np.abs(t) <= pulse.tau_l / 2).astype(float)
    return np.exp(-_GAUSSIAN_RATE * t**2 / pulse.tau_l**2)


def envelope_integral(a, b, pulse: PulseParams):
    """Integral of the envelope over [a, b] in ps."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if pulse.tau_l <= 0:
        return np.zeros(np.broadcast(a, b).shape)
    if pulse.shape == 'square':
        half = pulse.tau_l / 2
        return np.clip(np.minimum(b, half) - np.maximum(a, -half), 0, None)
    root_k = math.sqrt(_GAUSSIAN_RATE) / pulse.tau_l
    return 0.5 * math.sqrt(math.pi) / root_k * (special.erf(root_k * b) - special.erf(root_k * a))


def _stark_amplitude(pulse: PulseParams, cal: StarkCalibration) -> float:
    return peak_stark_splitting(pulse, cal) if pulse.is_on else 0.0


def instantaneous_splitting(t, qd: QdParams, pulse: PulseParams, cal: StarkCalibration):
    """Splitting S(t) = fss + S_peak * f(t) of the X doublet, in ueV."""
    return qd.fss + _stark_amplitude(pulse, cal) * envelope(t, pulse)


def accumulated_phase(t_xx, t_x, qd: QdParams, pulse: PulseParams, cal: StarkCalibration):
    """Phase (rad) picked up by the X photon between the two emission times."""
    t_xx = np.asarray(t_xx, dtype=float)
    t_x = np.asarray(t_x, dtype=float)
    stark = _stark_amplitude(pulse, cal)
    area = stark * envelope_integral(t_xx, t_x, pulse) if stark else 0.0
    return (qd.fss * (t_x - t_xx) + area) / HBAR_UEV_PS


def sample_preparation_times(pulse: PulseParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """XX preparation times drawn from a density proportional to the squared envelope."""
    if pulse.tau_l <= 0:
        return np.zeros(n)
    span = pulse.half_window
    if pulse.shape == 'square':
        return rng.uniform(-span, span, size=n)
    # f^2 is a Gaussian with twice the rate of f
    sigma = pulse.tau_l / math.sqrt(4 * _GAUSSIAN_RATE)
    return stats.truncnorm.rvs(-span / sigma, span / sigma, scale=sigma, size=n, random_state=rng)


def sample_emission_events(qd: QdParams, pulse: PulseParams, cal: StarkCalibration, n: int,
                           rng_state: RandomState) -> EmissionEvents:
    rng = as_generator(rng_state)
    t0 = sample_preparation_times(pulse, n, rng)
    t_xx = t0 + rng.exponential(qd.tau_xx, size=n)
    t_x = t_xx + rng.exponential(qd.tau_x, size=n)
    stark = _stark_amplitude(pulse, cal)
    return EmissionEvents(t_xx=t_xx,
                          t_x=t_x,
                          phi=accumulated_phase(t_xx, t_x, qd, pulse, cal),
                          e_shift_xx=stark * envelope(t_xx, pulse),
                          e_shift_x=stark * envelope(t_x, pulse))


def sample_emission_event(qd: QdParams, pulse: PulseParams, cal: StarkCalibration,
                          rng_state: RandomState) -> EmissionEvent:
    return sample_emission_events(qd, pulse, cal, 1, rng_state)[0]


def rabi_population(area: float) -> float:
    """Idealized XX occupation after a two-photon pulse of the given area."""
    if area < 0:
        raise DomainError(f'area must be non-negative (got {area})')
    return math.sin(area / 2)**2


def concurrence_eq1(tau_l, tau_xx, c0):
    """Closed-form concurrence for an equivalent square pulse and negligible FSS.

    C = c0 * (1 - x * exp(-x)) with x = sqrt(2) * tau_l / (4 * tau_xx). Accepts arrays."""
    tau_xx = np.asarray(tau_xx, dtype=float)
    if np.any(tau_xx <= 0):
        raise DomainError(f'tau_xx must be positive (got {tau_xx})')
    if np.any(np.asarray(tau_l) < 0) or not np.all((0 <= np.asarray(c0)) & (np.asarray(c0) <= 1)):
        raise DomainError('tau_l must be non-negative and c0 must lie in [0, 1]')
    x = math.sqrt(2) * np.asarray(tau_l, dtype=float) / (4 * tau_xx)
    value = c0 * (1 - x * np.exp(-x))
    return float(value) if np.ndim(value) == 0 else value


def fss_coherence(qd: QdParams) -> float:
    """|E[exp(i phi)]| for a static splitting averaged over the X lifetime."""
    return 1 / math.sqrt(1 + (qd.fss * qd.tau_x / HBAR_UEV_PS)**2)
