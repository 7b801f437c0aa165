import math

import pytest

from core.consts import HBAR, PLANCK_H
from core.units import (DomainError, bandwidth_to_duration, duration_to_bandwidth, lifetime_to_linewidth,
                        splitting_to_angular_frequency, splitting_to_precession_period, tpe_bandwidth_ok)


def test_constants_are_consistent():
    assert abs(PLANCK_H / (2 * math.pi * HBAR) - 1) < 1e-12
    assert abs(PLANCK_H - 4.135667696e-15) < 1e-23


@pytest.mark.parametrize('bandwidth, duration, digits', [(78, 19.8, 0.05), (1170, 1.32, 0.005), (2300, 0.67, 0.005)])
def test_bandwidth_to_duration_matches_reported_pulses(bandwidth, duration, digits):
    assert abs(bandwidth_to_duration(bandwidth, 0.374) - duration) <= digits


def test_precession_period_of_200_uev():
    assert abs(splitting_to_precession_period(200) - 20.7) <= 0.05


def test_bandwidth_and_duration_are_inverse():
    for bandwidth in (10.0, 78.0, 1170.0, 5000.0):
        assert abs(duration_to_bandwidth(bandwidth_to_duration(bandwidth, 0.374), 0.374) / bandwidth - 1) < 1e-12


def test_linewidth_of_35_ps_lifetime():
    assert abs(lifetime_to_linewidth(35) - 18.806) < 1e-3


def test_angular_frequency():
    assert splitting_to_angular_frequency(0) == 0
    assert abs(splitting_to_angular_frequency(200) * splitting_to_precession_period(200) - 2 * math.pi) < 1e-12


@pytest.mark.parametrize('value', [0.0, -1.0, math.nan, math.inf])
def test_non_positive_inputs_are_rejected(value):
    with pytest.raises(DomainError):
        bandwidth_to_duration(value, 0.374)
    with pytest.raises(DomainError):
        splitting_to_precession_period(value)
    with pytest.raises(DomainError):
        lifetime_to_linewidth(value)


def test_negative_tbp_is_rejected():
    with pytest.raises(DomainError):
        duration_to_bandwidth(20, -0.374)


def test_tpe_bandwidth_check():
    assert tpe_bandwidth_ok(20, 4400, 0.374)
    assert tpe_bandwidth_ok(1.3, 4400, 0.374)
    assert not tpe_bandwidth_ok(0.1, 4400, 0.374)
