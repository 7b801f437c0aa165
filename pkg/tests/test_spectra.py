import numpy as np
import pytest

from core.cascade.model import PulseParams, QdParams, StarkCalibration
from core.spectra import (AnalysisWindow, GridError, Spectrum, WindowError, bin_widths, centroid, mix_branches,
                          sideband_fraction, simulate_branches, simulate_spectrum, spectrum_grid, splitting_amplitude,
                          write_spectra_csv)
from core.workspace import read_csv

QD = QdParams()
CAL = StarkCalibration()


def box(energies, *ranges):
    intensities = np.zeros_like(energies)
    for lo, hi, weight in ranges:
        intensities[lo:hi] += weight
    return intensities


def branch_metrics(qd, pulse, cal, line, seed=0, n=100_000):
    grid = spectrum_grid(qd, pulse, cal, line, 2.0)
    branches = simulate_branches(qd, pulse, cal, line, grid.energies, n=n, seed=seed)
    parallel = mix_branches(branches, grid.energies, line, 0, 0)
    orthogonal = mix_branches(branches, grid.energies, line, 90, 0)
    return grid, parallel, orthogonal


def test_bin_widths_give_trapezoidal_areas():
    energies = np.linspace(0, 1, 11)
    assert np.allclose(bin_widths(energies), [0.05] + [0.1] * 9 + [0.05])
    spectrum = Spectrum(energies, np.ones(11), 0, 'X')
    assert abs(spectrum.area - 1) < 1e-12
    assert abs(spectrum.normalized().area - 1) < 1e-12


def test_invalid_spectra():
    with pytest.raises(GridError):
        Spectrum(np.array([1.0, 0.5]), np.ones(2), 0, 'X')
    with pytest.raises(ValueError):
        Spectrum(np.linspace(0, 1, 3), np.array([1.0, -1.0, 1.0]), 0, 'X')
    with pytest.raises(WindowError):
        AnalysisWindow(1.59, 1.58)


def test_identical_spectra_have_no_sideband():
    energies = 1.58 + np.arange(200) * 1e-6
    spectrum = Spectrum(energies, box(energies, (50, 60, 1.0)), 0, 'XX')
    assert sideband_fraction(spectrum, spectrum, AnalysisWindow(energies[0], energies[20])) == 0


def test_half_shifted_mixture_has_half_area():
    energies = 1.58 + np.arange(200) * 1e-6
    parallel = Spectrum(energies, box(energies, (50, 60, 1.0)), 0, 'XX')
    orthogonal = Spectrum(energies, box(energies, (50, 60, 0.5), (120, 130, 0.5)), 90, 'XX')
    fraction = sideband_fraction(parallel, orthogonal, AnalysisWindow(energies[0], energies[20]))
    assert abs(fraction - 0.5) < 1e-9


def test_centroid():
    energies = 1.58 + np.arange(200) * 1e-6
    spectrum = Spectrum(energies, box(energies, (50, 61, 1.0), (150, 151, 5.0)), 0, 'X')
    window = AnalysisWindow(energies[40], energies[70])
    assert abs(centroid(spectrum, window) - energies[55]) < 1e-12
    with pytest.raises(WindowError):
        centroid(spectrum, AnalysisWindow(1.7, 1.8))
    with pytest.raises(WindowError):
        centroid(spectrum, window, background=2.0)


def test_non_uniform_or_narrow_grids_are_rejected():
    pulse = PulseParams(20)
    with pytest.raises(GridError):
        simulate_branches(QD, pulse, CAL, 'XX', np.array([1.5841, 1.5842, 1.5844]), n=1000)
    with pytest.raises(GridError):
        simulate_branches(QD, pulse, CAL, 'XX', QD.e_xx_line + np.arange(-10, 11) * 1e-7, n=1000)


def test_without_any_splitting_the_branches_coincide():
    qd, cal = QdParams(fss=0), StarkCalibration(s_cal=0)
    grid, parallel, orthogonal = branch_metrics(qd, PulseParams(20), cal, 'XX', n=5000)
    assert np.allclose(parallel.intensities, orthogonal.intensities, rtol=1e-9, atol=1e-6)


def test_stark_sidebands_point_away_from_each_other():
    pulse = PulseParams(20)
    _, xx_parallel, xx_orthogonal = branch_metrics(QD, pulse, CAL, 'XX', seed=1)
    _, x_parallel, x_orthogonal = branch_metrics(QD, pulse, CAL, 'X', seed=2)
    window_xx = AnalysisWindow(xx_parallel.energies[0], xx_parallel.energies[-1])
    window_x = AnalysisWindow(x_parallel.energies[0], x_parallel.energies[-1])
    assert centroid(xx_parallel, window_xx) < centroid(xx_orthogonal, window_xx)
    assert centroid(x_parallel, window_x) > centroid(x_orthogonal, window_x)


def test_sideband_is_stronger_on_the_biexciton():
    pulse = PulseParams(20)
    grid_xx, xx_parallel, xx_orthogonal = branch_metrics(QD, pulse, CAL, 'XX', seed=1)
    grid_x, x_parallel, x_orthogonal = branch_metrics(QD, pulse, CAL, 'X', seed=2)
    assert grid_xx.noise_window.lo > QD.e_xx_line
    assert grid_x.noise_window.hi < QD.e_x_line
    xx = sideband_fraction(xx_parallel, xx_orthogonal, grid_xx.noise_window)
    x = sideband_fraction(x_parallel, x_orthogonal, grid_x.noise_window)
    assert xx > x


def test_sideband_grows_with_pulse_duration():
    fractions = []
    for tau_l in (1.3, 5, 10, 20):
        grid, parallel, orthogonal = branch_metrics(QD, PulseParams(tau_l), CAL, 'XX', seed=3)
        fractions.append(sideband_fraction(parallel, orthogonal, grid.noise_window))
    assert np.all(np.diff(fractions) > 0)


def test_pure_fss_splitting_is_recovered():
    qd = QdParams(tau_xx=1e4, tau_x=1e4, fss=2.0)
    pulse = PulseParams(20, area=0)
    grid = qd.e_xx_line + np.arange(-1000, 1001) * 2e-8
    branches = simulate_branches(qd, pulse, CAL, 'XX', grid, instrument_fwhm=0, n=1000)
    window = AnalysisWindow(grid[0], grid[-1])
    series = [(angle, centroid(mix_branches(branches, grid, 'XX', angle, 0), window)) for angle in range(0, 180, 15)]
    estimate = splitting_amplitude(series)
    assert abs(estimate.value - 2.0) < 0.2


def test_splitting_needs_six_angles():
    with pytest.raises(WindowError):
        splitting_amplitude([(a, 1.5842) for a in (0, 30, 60, 90, 120)])


def test_spectra_csv(tmp_path):
    grid = spectrum_grid(QD, PulseParams(20), CAL, 'X', 4.0).energies
    spectra = [simulate_spectrum(QD, PulseParams(20), CAL, 'X', angle, grid, n=2000) for angle in (0, 90)]
    rows = read_csv(write_spectra_csv(spectra, tmp_path / 'spectra.csv'))
    assert list(rows[0]) == ['energy_ev', 'intensity', 'pol_angle_deg', 'line']
    assert len(rows) == 2 * len(grid)
    assert {r['pol_angle_deg'] for r in rows} == {'0', '90'}
