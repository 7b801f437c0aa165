import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from core.cascade.model import concurrence_eq1

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
GRADIENT_TOL = 1e-10
MAX_ITER = 200
MAX_DAMPING = 1e16
INITIAL_DAMPING = 1e-6

# Relative step of the central-difference Jacobian
FD_STEP = np.finfo(float).eps**(1 / 3)

# tau_xx scan seeding the square-pulse fit: (low, high) multiples of the longest pulse, number of points
EQ1_SCAN = (0.05, 1000.0, 400)
EQ1_MIN_C0 = 1e-6
EQ1_LOG_TAU_LIMIT = 700.0

Model = Callable[..., np.ndarray]


class FitInputError(ValueError):
    pass


@dataclass
class FitResult:
    params: dict[str, float]
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list)
    message: str = ''
    r_squared: float = math.nan

    @property
    def errors(self) -> dict[str, float]:
        """1-sigma errors: square roots of the covariance diagonal."""
        return {name: math.sqrt(max(v, 0.0)) for name, v in zip(self.params, np.diag(self.covariance))}

    def to_dict(self) -> dict:
        return {
            'params': self.params,
            'errors': self.errors,
            'covariance': self.covariance.tolist(),
            'residual_norm': self.residual_norm,
            'r_squared': self.r_squared,
            'converged': self.converged,
            'iterations': self.iterations,
            'message': self.message
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'


def _numeric_jacobian(residuals: Callable[[np.ndarray], np.ndarray], theta: np.ndarray) -> np.ndarray:
    """Central differences with step FD_STEP * max(|theta_j|, 1)."""
    columns = []
    for j in range(len(theta)):
        h = FD_STEP * max(abs(theta[j]), 1.0)
        step = np.zeros_like(theta)
        step[j] = h
        columns.append((residuals(theta + step) - residuals(theta - step)) / (2 * h))
    return np.column_stack(columns)


def _covariance(jacobian: np.ndarray) -> tuple[np.ndarray, bool]:
    """Gauss-Newton covariance inv(J^T J); the pseudo-inverse when J is rank deficient."""
    jtj = jacobian.T @ jacobian
    full_rank = np.linalg.matrix_rank(jacobian) == jacobian.shape[1]
    covariance = np.linalg.inv(jtj) if full_rank else np.linalg.pinv(jtj)
    return (covariance + covariance.T) / 2, full_rank


def nls_solve(model: Model,
              init: dict[str, float],
              x: Sequence[float],
              y: Sequence[float],
              sigma: Sequence[float] | None = None,
              tol: float = DEFAULT_TOL,
              max_iter: int = MAX_ITER,
              jac: Callable[..., np.ndarray] | None = None) -> FitResult:
    """Minimize sum(((y - model(x, *theta)) / sigma)^2) by damped Gauss-Newton.

    Every iteration first tries the undamped step. Rejected steps raise the damping by 10
    (starting at 1e-6), accepted ones lower it by 10, so the objective never increases. The
    fit stops when the relative objective change drops below `tol`, the gradient infinity
    norm below 1e-10, or the residuals vanish. Running out of iterations or a rank
    deficient Jacobian is reported through `converged`, never raised.

    `jac(x, *theta)`, when given, returns d model / d theta with one column per parameter."""
    names = list(init)
    theta = np.array([init[name] for name in names], dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.ones_like(y) if sigma is None else np.asarray(sigma, dtype=float)
    if not (len(x) == len(y) == len(sigma)):
        raise FitInputError('x, y and sigma must have the same length')
    if len(y) < len(theta):
        raise FitInputError(f'{len(y)} points cannot determine {len(theta)} parameters')
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise FitInputError('sigma must be finite and positive')

    def residuals(t: np.ndarray) -> np.ndarray:
        return (np.asarray(model(x, *t), dtype=float) - y) / sigma

    def jacobian(t: np.ndarray) -> np.ndarray:
        if jac is None:
            return _numeric_jacobian(residuals, t)
        return np.asarray(jac(x, *t), dtype=float).reshape(len(y), len(t)) / sigma[:, None]

    r = residuals(theta)
    cost = float(r @ r)
    if not math.isfinite(cost):
        raise FitInputError(f'model is not finite at the initial parameters {init}')
    history = [cost]
    damping = 0.0
    converged, message, iterations = False, f'maximum number of iterations ({max_iter}) reached', 0

    while iterations < max_iter:
        iterations += 1
        j = jacobian(theta)
        gradient = j.T @ r
        if cost == 0 or np.max(np.abs(gradient)) < GRADIENT_TOL:
            converged, message = True, 'gradient below tolerance'
            break

        jtj = j.T @ j
        scale = np.where(np.diag(jtj) > 0, np.diag(jtj), 1.0)
        while True:
            try:
                step = np.linalg.solve(jtj + damping * np.diag(scale), -gradient)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(jtj + damping * np.diag(scale), -gradient, rcond=None)[0]
            candidate = theta + step
            r_new = residuals(candidate)
            cost_new = float(r_new @ r_new)
            if math.isfinite(cost_new) and cost_new <= cost:
                damping /= 10
                break
            damping = damping * 10 if damping else INITIAL_DAMPING
            if damping > MAX_DAMPING:
                break

        if damping > MAX_DAMPING:
            # no decrease is possible: relative change is zero
            converged, message = True, 'objective cannot be decreased further'
            break

        change = (cost - cost_new) / max(cost, np.finfo(float).tiny)
        theta, r, cost = candidate, r_new, cost_new
        history.append(cost)
        if change < tol:
            converged, message = True, 'relative objective change below tolerance'
            break

    covariance, full_rank = _covariance(jacobian(theta))
    if not full_rank:
        converged = False
        message = 'Jacobian is rank deficient; covariance from the pseudo-inverse'
        logger.warning(f'Rank-deficient fit of {names}: {message}')

    fitted = np.asarray(model(x, *theta), dtype=float)
    total = float(np.sum((y - y.mean())**2))
    r_squared = 1 - float(np.sum((y - fitted)**2)) / total if total > 0 else math.nan
    logger.debug(f'nls_solve: {message} after {iterations} iterations, cost {cost:.6g}')
    return FitResult(dict(zip(names, map(float, theta))), covariance, math.sqrt(cost), converged, iterations,
                     history, message, r_squared)


def _split_points(points, minimum: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sort (x, y[, sigma]) points by x and split them into columns."""
    points = sorted((tuple(p) for p in points), key=lambda p: p[:2])
    if len(points) < minimum:
        raise FitInputError(f'at least {minimum} points are required (got {len(points)})')
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    sigma = np.array([p[2] if len(p) > 2 else 1.0 for p in points], dtype=float)
    return x, y, sigma


def _tau(log_tau_xx: float) -> float:
    # trial steps may wander far; keep tau_xx finite and positive
    return math.exp(min(max(log_tau_xx, -EQ1_LOG_TAU_LIMIT), EQ1_LOG_TAU_LIMIT))


def _eq1_shape(tau_l, log_tau_xx):
    return concurrence_eq1(tau_l, _tau(log_tau_xx), 1.0)


def _eq1_model(tau_l, c0, log_tau_xx):
    return c0 * _eq1_shape(tau_l, log_tau_xx)


def _eq1_jacobian(tau_l, c0, log_tau_xx):
    x = math.sqrt(2) * np.asarray(tau_l, dtype=float) / (4 * _tau(log_tau_xx))
    return np.column_stack([1 - x * np.exp(-x), c0 * x * (1 - x) * np.exp(-x)])


def _profile_c0(shape: np.ndarray, c: np.ndarray, weights: np.ndarray) -> float:
    """Best c0 for a fixed shape, clipped to (0, 1]."""
    norm = float(np.sum(weights * shape**2))
    return min(1.0, max(float(np.sum(weights * shape * c)) / norm, EQ1_MIN_C0)) if norm > 0 else 1.0


def _eq1_start(tau_l: np.ndarray, c: np.ndarray, sigma: np.ndarray) -> tuple[float, float]:
    """Scan tau_xx on a log grid with c0 profiled out; the best grid point seeds the fit."""
    weights = sigma**-2
    best = (math.inf, 1.0, 0.0)
    for log_tau in np.log(np.geomspace(EQ1_SCAN[0] * tau_l.max(), EQ1_SCAN[1] * tau_l.max(), EQ1_SCAN[2])):
        shape = _eq1_shape(tau_l, log_tau)
        c0 = _profile_c0(shape, c, weights)
        cost = float(np.sum(weights * (c0 * shape - c)**2))
        if cost < best[0]:
            best = (cost, c0, float(log_tau))
    return best[1], best[2]


def fit_eq1(points: Sequence[tuple[float, float, float]]) -> FitResult:
    """Fit C(tau_l) = c0 * (1 - x exp(-x)), x = sqrt(2) tau_l / (4 tau_xx), with c0 in (0, 1] and tau_xx > 0.

    tau_xx is fitted through its logarithm, starting from a profiled grid scan. c0 enters
    linearly; when the free optimum lies above 1 the fit is repeated with c0 pinned to 1,
    whose covariance row is then zero. Parameters and covariance are reported in natural
    units (delta method)."""
    tau_l, c, sigma = _split_points(points, 3)
    if np.any(tau_l < 0):
        raise FitInputError('pulse durations must be non-negative')
    if tau_l.max() <= 0:
        raise FitInputError('at least one pulse duration must be positive')
    if c.max() <= 0:
        raise FitInputError('concurrences must not all be zero')

    start_c0, start_log_tau = _eq1_start(tau_l, c, sigma)
    fit = nls_solve(_eq1_model, {'c0': start_c0, 'tau_xx': start_log_tau}, tau_l, c, sigma, jac=_eq1_jacobian)
    c0, log_tau = fit.params['c0'], fit.params['tau_xx']
    covariance = fit.covariance
    if c0 > 1:
        logger.debug(f'Free square-pulse fit gives c0 = {c0:.6f}; refitting with c0 = 1')
        fit = nls_solve(_eq1_shape, {'tau_xx': start_log_tau}, tau_l, c, sigma,
                        jac=lambda t, lt: _eq1_jacobian(t, 1.0, lt)[:, 1:])
        c0, log_tau = 1.0, fit.params['tau_xx']
        covariance = np.zeros((2, 2))
        covariance[1, 1] = fit.covariance[0, 0]
    elif c0 <= 0:
        fit.converged, fit.message = False, f'c0 = {c0:.3g} is outside (0, 1]'

    tau_xx = _tau(log_tau)
    chain = np.diag([1.0, tau_xx])
    return FitResult({
        'c0': c0,
        'tau_xx': tau_xx
    }, chain @ covariance @ chain, fit.residual_norm, fit.converged, fit.iterations, fit.history, fit.message,
                     fit.r_squared)


def _sinusoid(theta_deg, amplitude, phase_deg, offset):
    return offset + amplitude * np.cos(2 * np.radians(np.asarray(theta_deg) - phase_deg))


def fit_sinusoid(points: Sequence[tuple[float, float, float]]) -> FitResult:
    """Fit value(theta) = offset + amplitude * cos(2 (theta - phase)), angles in degrees.

    The amplitude is reported non-negative and the phase in [0, 180)."""
    angles, values, sigma = _split_points(points, 4)
    design = np.column_stack([np.ones_like(angles), np.cos(2 * np.radians(angles)), np.sin(2 * np.radians(angles))])
    if np.linalg.matrix_rank(design) < 3:
        raise FitInputError('analyzer angles do not resolve a 180-degree sinusoid')

    # Linear least squares gives the starting point
    offset, a, b = np.linalg.lstsq(design / sigma[:, None], values / sigma, rcond=None)[0]
    init = {'amplitude': math.hypot(a, b), 'phase': math.degrees(math.atan2(b, a)) / 2, 'offset': offset}
    fit = nls_solve(_sinusoid, init, angles, values, sigma)

    amplitude, phase = fit.params['amplitude'], fit.params['phase']
    if amplitude < 0:
        amplitude, phase = -amplitude, phase + 90
    canonical = {'amplitude': amplitude, 'phase': phase % 180, 'offset': fit.params['offset']}

    def residuals(t: np.ndarray) -> np.ndarray:
        return (_sinusoid(angles, *t) - values) / sigma

    covariance, _ = _covariance(_numeric_jacobian(residuals, np.array(list(canonical.values()))))
    return FitResult(canonical, covariance, fit.residual_norm, fit.converged, fit.iterations, fit.history,
                     fit.message, fit.r_squared)
