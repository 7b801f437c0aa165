import json
import math

import numpy as np
import pytest

from core.cascade.model import concurrence_eq1
from core.fitting import FitInputError, fit_eq1, fit_sinusoid, nls_solve


def exponential(x, a, k):
    return a * np.exp(-k * x)


def test_exact_data_is_recovered():
    x = np.linspace(0, 5, 20)
    fit = nls_solve(exponential, {'a': 1.0, 'k': 1.0}, x, exponential(x, 2.5, 0.7))
    assert fit.converged
    assert abs(fit.params['a'] - 2.5) < 1e-8 and abs(fit.params['k'] - 0.7) < 1e-8
    assert np.all(np.diff(fit.history) <= 0)


def test_analytic_jacobian_gives_the_same_answer():
    x = np.linspace(0, 5, 20)
    y = exponential(x, 2.5, 0.7) + 0.01 * np.sin(7 * x)

    def jac(x, a, k):
        return np.column_stack([np.exp(-k * x), -a * x * np.exp(-k * x)])

    numeric = nls_solve(exponential, {'a': 1.0, 'k': 1.0}, x, y)
    analytic = nls_solve(exponential, {'a': 1.0, 'k': 1.0}, x, y, jac=jac)
    assert abs(numeric.params['a'] - analytic.params['a']) < 1e-6
    assert abs(numeric.params['k'] - analytic.params['k']) < 1e-6


def test_linear_model_covariance_is_the_weighted_least_squares_one():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 10, 30)
    sigma = np.full_like(x, 0.2)
    y = 1.5 * x - 2 + rng.normal(0, 0.2, size=x.size)
    fit = nls_solve(lambda x, a, b: a * x + b, {'a': 0.0, 'b': 0.0}, x, y, sigma)

    design = np.column_stack([x, np.ones_like(x)]) / sigma[:, None]
    expected_params = np.linalg.lstsq(design, y / sigma, rcond=None)[0]
    assert np.allclose([fit.params['a'], fit.params['b']], expected_params, atol=1e-8)
    assert np.allclose(fit.covariance, np.linalg.inv(design.T @ design), rtol=1e-6)
    assert abs(fit.errors['a'] - math.sqrt(fit.covariance[0, 0])) < 1e-15


def test_rank_deficient_model_is_flagged():
    x = np.linspace(0, 1, 10)
    fit = nls_solve(lambda x, a, b: a * b * x, {'a': 1.0, 'b': 1.0}, x, 3 * x)
    assert not fit.converged
    assert 'rank' in fit.message
    assert abs(fit.params['a'] * fit.params['b'] - 3) < 1e-6


def test_iteration_limit_is_reported():
    x = np.linspace(0, 5, 20)
    fit = nls_solve(exponential, {'a': 1.0, 'k': 3.0}, x, exponential(x, 2.5, 0.7), max_iter=1)
    assert not fit.converged
    assert fit.iterations == 1


def test_bad_inputs():
    with pytest.raises(FitInputError):
        nls_solve(exponential, {'a': 1.0, 'k': 1.0}, [0.0], [1.0])
    with pytest.raises(FitInputError):
        nls_solve(exponential, {'a': 1.0, 'k': 1.0}, [0.0, 1.0, 2.0], [1.0, 1.0, 1.0], sigma=[1.0, 0.0, 1.0])
    with pytest.raises(FitInputError):
        nls_solve(exponential, {'a': 1.0, 'k': 1.0}, [0.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(FitInputError):
        fit_eq1([(1.0, 0.9, 0.01), (2.0, 0.8, 0.01)])


def test_square_pulse_fit_recovers_its_parameters():
    durations = [1.3, 2.5, 5, 10, 15, 20]
    points = [(t, concurrence_eq1(t, 35, 0.92), 0.01) for t in durations]
    fit = fit_eq1(points)
    assert fit.converged
    assert abs(fit.params['c0'] - 0.92) < 1e-6
    assert abs(fit.params['tau_xx'] - 35) < 1e-4
    assert abs(fit.r_squared - 1) < 1e-9


def test_square_pulse_fit_is_order_independent():
    durations = [1.3, 2.5, 5, 10, 15, 20]
    points = [(t, concurrence_eq1(t, 30, 0.9) + 0.002 * (-1)**i, 0.005) for i, t in enumerate(durations)]
    forward = fit_eq1(points)
    backward = fit_eq1(points[::-1])
    assert forward.params == backward.params
    assert forward.errors['tau_xx'] > 0


def test_sinusoid_fit():
    angles = np.arange(12) * 15.0
    values = 1 + 3 * np.cos(2 * np.radians(angles - 30))
    fit = fit_sinusoid([(a, v, 1.0) for a, v in zip(angles, values)])
    assert abs(fit.params['amplitude'] - 3) < 1e-9
    assert abs(fit.params['phase'] - 30) < 1e-7
    assert abs(fit.params['offset'] - 1) < 1e-9


def test_sinusoid_fit_reports_a_positive_amplitude():
    angles = np.arange(12) * 15.0
    values = -2 * np.cos(2 * np.radians(angles - 10))
    fit = fit_sinusoid([(a, v, 1.0) for a, v in zip(angles, values)])
    assert abs(fit.params['amplitude'] - 2) < 1e-9
    assert abs(fit.params['phase'] - 100) < 1e-7


def test_sinusoid_needs_distinct_angles():
    with pytest.raises(FitInputError):
        fit_sinusoid([(0.0, 1.0, 1.0), (180.0, 1.0, 1.0), (0.0, 1.1, 1.0), (180.0, 0.9, 1.0)])


def test_json_format():
    durations = [1.3, 5, 10, 20]
    fit = fit_eq1([(t, concurrence_eq1(t, 35, 0.9), 0.01) for t in durations])
    data = json.loads(fit.to_json())
    assert set(data) >= {'params', 'errors', 'covariance', 'residual_norm', 'converged', 'iterations'}
    assert data['converged'] is True
    assert len(data['covariance']) == 2


def test_square_pulse_fit_at_full_entanglement():
    durations = [1.3, 2.5, 5, 10, 15, 20]
    fit = fit_eq1([(t, concurrence_eq1(t, 35, 1.0), 1) for t in durations])
    assert fit.converged
    assert abs(fit.params['c0'] - 1) < 1e-9 and fit.params['c0'] <= 1
    assert abs(fit.params['tau_xx'] - 35) < 1e-4


def test_square_pulse_fit_pins_c0_at_one():
    durations = [1.3, 2.5, 5, 10, 15, 20]
    points = [(t, min(1.0, 1.004 * concurrence_eq1(t, 35, 1.0)), 0.01) for t in durations]
    fit = fit_eq1(points)
    assert fit.converged
    assert fit.params['c0'] == 1.0
    assert fit.covariance[0, 0] == 0 and fit.covariance[0, 1] == 0
    assert fit.errors['tau_xx'] > 0
    assert 25 < fit.params['tau_xx'] < 50


def test_square_pulse_fit_starts_far_from_short_pulses():
    # tau_xx is several times longer than every pulse on the grid
    durations = [0.5, 1, 2, 3, 4, 5]
    fit = fit_eq1([(t, concurrence_eq1(t, 40, 0.95), 0.001) for t in durations])
    assert fit.converged
    assert abs(fit.params['c0'] - 0.95) < 1e-6
    assert abs(fit.params['tau_xx'] - 40) < 1e-3
