"""Polarization tomography of XX-X photon pairs from 36 coincidence settings.

Setting labels name the projection of the XX photon first, the X photon second. The density
matrix is reconstructed by maximizing the Poisson likelihood over the Cholesky-like
parameterization rho = T^dag T / Tr(T^dag T), T lower-triangular."""

import logging
import math
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

from core.consts import POLARIZATIONS
from core.seeding import as_generator
from core.states import TwoPhotonState, concurrence, physicality_project
from core.units import DomainError
from core.workspace import read_csv, write_csv

logger = logging.getLogger(__name__)

RECORD_HEADER = ('setting_xx', 'setting_x', 'counts', 'expected_total')

# Basis pairs sharing one measurement setting of the wave plates: (+1 outcome, -1 outcome)
MEASUREMENT_BASES = {'z': ('H', 'V'), 'x': ('D', 'A'), 'y': ('R', 'L')}

PAULI = {
    'i': np.eye(2, dtype=complex),
    'x': np.array([[0, 1], [1, 0]], dtype=complex),
    'y': np.array([[0, -1j], [1j, 0]]),
    'z': np.array([[1, 0], [0, -1]], dtype=complex)
}

_MIXING_FLOOR = 1e-8
_MIN_EXPECTATION = 1e-300
_LOWER = tuple((i, j) for i in range(4) for j in range(i))
_ROWS, _COLS = (np.array(index) for index in zip(*_LOWER))


class RecordError(ValueError):
    pass


class MissingSettingError(RecordError):
    pass


class ConvergenceError(RuntimeError):

    def __init__(self, message: str, iterations: int, objective: float, trace: list[float]):
        super().__init__(f'{message} (after {iterations} iterations, objective {objective:.6g})')
        self.iterations = iterations
        self.objective = objective
        self.trace = trace


@dataclass(frozen=True)
class PolarizationProjector:
    label: str
    ket: np.ndarray

    def __post_init__(self):
        if abs(np.linalg.norm(self.ket) - 1) > 1e-12:
            raise ValueError(f'ket of {self.label} is not normalized')

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.ket, self.ket.conj())


_SQRT_HALF = 1 / math.sqrt(2)

PROJECTORS = {
    'H': PolarizationProjector('H', np.array([1, 0], dtype=complex)),
    'V': PolarizationProjector('V', np.array([0, 1], dtype=complex)),
    'D': PolarizationProjector('D', np.array([_SQRT_HALF, _SQRT_HALF], dtype=complex)),
    'A': PolarizationProjector('A', np.array([_SQRT_HALF, -_SQRT_HALF], dtype=complex)),
    'R': PolarizationProjector('R', np.array([_SQRT_HALF, 1j * _SQRT_HALF])),
    'L': PolarizationProjector('L', np.array([_SQRT_HALF, -1j * _SQRT_HALF]))
}

SETTINGS = tuple(product(POLARIZATIONS, POLARIZATIONS))


@dataclass(frozen=True)
class CoincidenceRecord:
    setting_xx: str
    setting_x: str
    counts: float
    expected_total: float  # pairs per setting before projection

    def __post_init__(self):
        if self.setting_xx not in PROJECTORS or self.setting_x not in PROJECTORS:
            raise RecordError(f'unknown setting ({self.setting_xx}, {self.setting_x})')
        if not self.counts >= 0:
            raise RecordError(f'counts must be non-negative (got {self.counts})')
        if not self.expected_total > 0:
            raise RecordError(f'expected_total must be positive (got {self.expected_total})')


@dataclass(frozen=True)
class LinearInversion:
    matrix: np.ndarray

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    @property
    def is_physical(self) -> bool:
        return self.min_eigenvalue >= -1e-8


class ConcurrenceEstimate(NamedTuple):
    concurrence: float
    std: float


def measurement_operators() -> np.ndarray:
    """The 36 two-photon projectors, ordered as `SETTINGS`."""
    return np.array([np.kron(PROJECTORS[a].matrix, PROJECTORS[b].matrix) for a, b in SETTINGS])


OPERATORS = measurement_operators()


def _probabilities(rho: np.ndarray) -> np.ndarray:
    return np.clip(np.einsum('kij,ji->k', OPERATORS, rho).real, 0, None)


def _check_total(n_per_setting: float) -> None:
    if not (math.isfinite(n_per_setting) and n_per_setting > 0):
        raise DomainError(f'n_per_setting must be positive (got {n_per_setting})')


def expected_records(rho: TwoPhotonState, n_per_setting: float) -> list[CoincidenceRecord]:
    """Noiseless expectations n * Tr(Pi rho) as (non-integer) counts."""
    _check_total(n_per_setting)
    mu = n_per_setting * _probabilities(rho.matrix)
    return [CoincidenceRecord(a, b, float(m), float(n_per_setting)) for (a, b), m in zip(SETTINGS, mu)]


def simulate_counts(rho: TwoPhotonState, n_per_setting: float, seed) -> list[CoincidenceRecord]:
    """Poisson coincidences for every setting, deterministic per seed."""
    _check_total(n_per_setting)
    counts = as_generator(seed).poisson(n_per_setting * _probabilities(rho.matrix))
    return [CoincidenceRecord(a, b, int(c), float(n_per_setting)) for (a, b), c in zip(SETTINGS, counts)]


def _arrange(records: list[CoincidenceRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Counts and totals in `SETTINGS` order."""
    table = {}
    for record in records:
        key = (record.setting_xx, record.setting_x)
        if key in table:
            raise RecordError(f'setting {key} appears more than once')
        table[key] = record
    if missing := [key for key in SETTINGS if key not in table]:
        raise MissingSettingError(f'missing settings: {", ".join(a + b for a, b in missing)}')
    counts = np.array([table[key].counts for key in SETTINGS], dtype=float)
    totals = np.array([table[key].expected_total for key in SETTINGS], dtype=float)
    return counts, totals


def log_likelihood(rho: TwoPhotonState | np.ndarray, records: list[CoincidenceRecord]) -> float:
    """Poisson log-likelihood sum(c ln mu - mu), without the count-only constant."""
    counts, totals = _arrange(records)
    matrix = rho.matrix if isinstance(rho, TwoPhotonState) else np.asarray(rho)
    mu = totals * _probabilities(matrix)
    return float(np.sum(xlogy(counts, mu) - mu))


def linear_inversion(records: list[CoincidenceRecord]) -> LinearInversion:
    """Stokes reconstruction from the normalized frequencies of each basis pair."""
    counts, _ = _arrange(records)
    frequency = dict(zip(SETTINGS, counts))

    correlations = {}
    singles = {('a', basis): [] for basis in MEASUREMENT_BASES} | {('b', basis): [] for basis in MEASUREMENT_BASES}
    for (basis_a, (plus_a, minus_a)), (basis_b, (plus_b, minus_b)) in product(MEASUREMENT_BASES.items(), repeat=2):
        group = np.array([
            frequency[plus_a, plus_b], frequency[plus_a, minus_b], frequency[minus_a, plus_b],
            frequency[minus_a, minus_b]
        ])
        if group.sum() <= 0:
            raise RecordError(f'no coincidences in the {basis_a}{basis_b} basis')
        pp, pm, mp, mm = group / group.sum()
        correlations[basis_a, basis_b] = pp - pm - mp + mm
        singles['a', basis_a].append(pp + pm - mp - mm)
        singles['b', basis_b].append(pp - pm + mp - mm)

    matrix = np.kron(PAULI['i'], PAULI['i'])
    for basis in MEASUREMENT_BASES:
        matrix = matrix + np.mean(singles['a', basis]) * np.kron(PAULI[basis], PAULI['i'])
        matrix = matrix + np.mean(singles['b', basis]) * np.kron(PAULI['i'], PAULI[basis])
    for (basis_a, basis_b), value in correlations.items():
        matrix = matrix + value * np.kron(PAULI[basis_a], PAULI[basis_b])
    estimate = LinearInversion(matrix / 4)
    if not estimate.is_physical:
        logger.warning(f'Linear inversion is not physical (smallest eigenvalue {estimate.min_eigenvalue:.3g})')
    return estimate


def _t_from_params(theta: np.ndarray) -> np.ndarray:
    t = np.diag(theta[:4]).astype(complex)
    t[_ROWS, _COLS] = theta[4::2] + 1j * theta[5::2]
    return t


def _params_from_t(t: np.ndarray) -> np.ndarray:
    theta = np.empty(16)
    theta[:4] = t.diagonal().real
    theta[4::2] = t[_ROWS, _COLS].real
    theta[5::2] = t[_ROWS, _COLS].imag
    return theta


def _initial_params(rho: TwoPhotonState) -> np.ndarray:
    """Parameters of a lower-triangular T with T^dag T = rho (slightly mixed to be full rank)."""
    flip = np.eye(4)[::-1]
    mixing = _MIXING_FLOOR
    while True:
        target = (1 - mixing) * rho.matrix + mixing * np.eye(4) / 4
        try:
            lower = np.linalg.cholesky(flip @ target @ flip)
        except np.linalg.LinAlgError:
            mixing *= 100
            continue
        return _params_from_t(flip @ lower.conj().T @ flip)


def _objective(theta: np.ndarray, counts: np.ndarray, totals: np.ndarray) -> tuple[float, np.ndarray]:
    """Poisson deviance (zero for a perfect fit) and its gradient in the T parameters."""
    t = _t_from_params(theta)
    a = t.conj().T @ t
    trace = np.trace(a).real
    rho = a / trace
    mu = np.maximum(totals * _probabilities(rho), _MIN_EXPECTATION)
    deviance = float(np.sum(mu - counts - xlogy(counts, mu) + xlogy(counts, counts)))

    # dL = Tr(G drho); through rho = A / Tr(A) and A = T^dag T, dL = 2 Re sum_kl W_kl dT_kl
    g = np.einsum('k,kij->ij', (counts / mu - 1) * totals, OPERATORS)
    g = (g - np.trace(g @ rho).real * np.eye(4)) / trace
    w = (g @ t.conj().T).T
    grad = np.empty(16)
    grad[:4] = 2 * w.diagonal().real
    grad[4::2] = 2 * w[_ROWS, _COLS].real
    grad[5::2] = -2 * w[_ROWS, _COLS].imag
    return deviance, -grad


@dataclass
class MleReport:
    state: TwoPhotonState
    iterations: int
    trace: list[float]
    message: str


def mle_fit(records: list[CoincidenceRecord], tol: float = 1e-10, max_iter: int = 5000) -> MleReport:
    """Maximum-likelihood reconstruction with its optimization trace.

    The trace holds the deviance (negative log-likelihood up to a constant) at the
    starting point and after every accepted step."""
    counts, totals = _arrange(records)
    start = physicality_project(linear_inversion(records).matrix)
    theta0 = _initial_params(start)

    trace = [_objective(theta0, counts, totals)[0]]
    result = minimize(_objective,
                      theta0,
                      args=(counts, totals),
                      jac=True,
                      method='L-BFGS-B',
                      callback=lambda theta: trace.append(_objective(theta, counts, totals)[0]),
                      options={
                          'maxiter': max_iter,
                          'maxfun': 10 * max_iter,
                          'ftol': tol,
                          'gtol': tol
                      })

    match result.status:
        case 0:
            pass
        case 2:
            # Line search stalls once the deviance is flat to machine precision
            logger.debug(f'MLE stopped by the line search: {result.message}')
        case _:
            raise ConvergenceError(f'MLE did not converge: {result.message}', result.nit, float(result.fun), trace)

    t = _t_from_params(result.x)
    a = t.conj().T @ t
    rho = physicality_project(a / np.trace(a).real)
    logger.debug(f'MLE finished after {result.nit} iterations, deviance {result.fun:.6g}')
    return MleReport(rho, int(result.nit), trace, str(result.message))


def mle_reconstruct(records: list[CoincidenceRecord], tol: float = 1e-10, max_iter: int = 5000) -> TwoPhotonState:
    return mle_fit(records, tol, max_iter).state


def concurrence_uncertainty(records: list[CoincidenceRecord], n_boot: int = 100, seed=0) -> ConcurrenceEstimate:
    """Parametric bootstrap: resample Poisson counts around the MLE expectations.

    Returns the mean and standard deviation of the replica concurrences."""
    if n_boot < 100:
        raise DomainError(f'the bootstrap needs at least 100 replicas (got {n_boot})')
    _, totals = _arrange(records)
    mu = totals * _probabilities(mle_reconstruct(records).matrix)
    rng = as_generator(seed)
    replicas = []
    for _ in range(n_boot):
        resampled = [
            CoincidenceRecord(a, b, int(c), float(n)) for (a, b), c, n in zip(SETTINGS, rng.poisson(mu), totals)
        ]
        replicas.append(concurrence(mle_reconstruct(resampled)))
    return ConcurrenceEstimate(float(np.mean(replicas)), float(np.std(replicas, ddof=1)))


def write_records_csv(records: list[CoincidenceRecord], path: Path) -> Path:
    return write_csv(path, RECORD_HEADER,
                     ((r.setting_xx, r.setting_x, r.counts, r.expected_total) for r in records))


def read_records_csv(path: Path) -> list[CoincidenceRecord]:
    rows = read_csv(path)
    if rows and tuple(rows[0]) != RECORD_HEADER:
        raise RecordError(f'unexpected header {tuple(rows[0])} in {path}')
    return [
        CoincidenceRecord(row['setting_xx'], row['setting_x'], float(row['counts']), float(row['expected_total']))
        for row in rows
    ]
