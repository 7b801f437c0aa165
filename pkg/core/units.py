"""Conversions between energy, time, linewidth and precession period.

Public quantities are plain floats with fixed units: energies and splittings in ueV,
durations in ps. Durations and bandwidths are FWHM values."""

import math

from core.consts import HBAR, HBAR_UEV_PS, PLANCK_H, PS_PER_S, UEV_PER_EV


class DomainError(ValueError):
    pass


def _require_positive(name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f'{name} must be finite and positive (got {value})')


def bandwidth_to_duration(delta_e: float, tbp: float) -> float:
    """Pulse duration (ps) of a transform-limited pulse with spectral FWHM `delta_e` (ueV)."""
    _require_positive('delta_e', delta_e)
    _require_positive('tbp', tbp)
    return tbp * PLANCK_H / (delta_e / UEV_PER_EV) * PS_PER_S


def duration_to_bandwidth(tau_l: float, tbp: float) -> float:
    """Spectral FWHM (ueV) of a transform-limited pulse lasting `tau_l` (ps)."""
    _require_positive('tau_l', tau_l)
    _require_positive('tbp', tbp)
    return tbp * PLANCK_H / (tau_l / PS_PER_S) * UEV_PER_EV


def splitting_to_precession_period(s: float) -> float:
    """Period (ps) of the phase exp(i S t / hbar)."""
    _require_positive('splitting', s)
    return PLANCK_H / (s / UEV_PER_EV) * PS_PER_S


def splitting_to_angular_frequency(s: float) -> float:
    """Angular frequency (rad/ps) of a splitting `s` (ueV). Zero is allowed."""
    if not math.isfinite(s) or s < 0:
        raise DomainError(f'splitting must be finite and non-negative (got {s})')
    return s / HBAR_UEV_PS


def lifetime_to_linewidth(tau: float) -> float:
    """Natural linewidth hbar/tau (ueV) of a transition with lifetime `tau` (ps)."""
    _require_positive('lifetime', tau)
    return HBAR / (tau / PS_PER_S) * UEV_PER_EV


def tpe_bandwidth_ok(tau_l: float, binding_energy: float, tbp: float) -> bool:
    """Whether a pulse of duration `tau_l` is spectrally narrower than the XX binding energy.

    A broader pulse starts exciting the X level directly."""
    return duration_to_bandwidth(tau_l, tbp) < binding_energy
