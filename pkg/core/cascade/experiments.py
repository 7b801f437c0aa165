import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from functools import partial
from pathlib import Path
from typing import NamedTuple

from tqdm import tqdm

from core.cascade.ensemble import (EnsembleError, EnsembleMethod, MonteCarlo, Quadrature, ensemble_coherence,
                                   events_coherence)
from core.cascade.model import PulseParams, PulseShape, QdParams, StarkCalibration, sample_emission_events
from core.consts import MIN_MONTE_CARLO_SAMPLES
from core.seeding import as_generator, derive_seed
from core.units import DomainError
from core.workspace import write_csv

logger = logging.getLogger(__name__)


class EmptyEnsembleError(RuntimeError):
    pass


class SweepPoint(NamedTuple):
    value: float  # tau_l in ps or area in rad
    concurrence: float
    stderr: float
    method: str
    n_samples: int
    seed: int | None

    def fit_input(self) -> tuple[float, float, float]:
        """(x, concurrence, sigma) for the square-pulse fit; unit weight for exact quadrature points."""
        return self.value, self.concurrence, self.stderr if self.stderr > 0 else 1.0


class NotchResult(NamedTuple):
    concurrence_filtered: float
    retained_fraction: float


def run_points(func: Callable, items: Sequence, jobs: int = 1, desc: str | None = None) -> list:
    """Evaluate `func` on every item, in a process pool when `jobs > 1`.

    Results come back in input order regardless of completion order."""
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in tqdm(items, desc=desc, disable=None)]

    results = [None] * len(items)
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        futures = {executor.submit(func, item): index for index, item in enumerate(items)}
        for future in tqdm(as_completed(futures), desc=desc, total=len(futures), disable=None):
            results[futures[future]] = future.result()
    return results


def _point_method(method: EnsembleMethod, tag: str, index: int) -> EnsembleMethod:
    if isinstance(method, MonteCarlo):
        return MonteCarlo(method.n, derive_seed(method.seed, tag, index))
    return method


def _evaluate(qd: QdParams, cal: StarkCalibration, value: Callable[[PulseParams], float],
              item: tuple[PulseParams, EnsembleMethod]) -> SweepPoint:
    pulse, method = item
    estimate = ensemble_coherence(qd, pulse, cal, method)
    return SweepPoint(value(pulse), estimate.concurrence, estimate.stderr, method.label, estimate.n_samples or 0,
                      method.seed)


def _tau_l(pulse: PulseParams) -> float:
    return pulse.tau_l


def _area(pulse: PulseParams) -> float:
    return pulse.area


def sweep_duration(qd: QdParams,
                   cal: StarkCalibration,
                   durations: Iterable[float],
                   area: float = math.pi,
                   shape: PulseShape = 'gaussian',
                   method: EnsembleMethod = Quadrature(),
                   jobs: int = 1) -> list[SweepPoint]:
    """Concurrence versus pulse duration (ps) at fixed pulse area."""
    durations = list(durations)
    if not durations or any(not tau > 0 for tau in durations):
        raise DomainError(f'durations must be a non-empty list of positive values (got {durations})')
    items = [(PulseParams(tau, area, shape), _point_method(method, 'sweep-duration', i))
             for i, tau in enumerate(durations)]
    return run_points(partial(_evaluate, qd, cal, _tau_l), items, jobs, desc='Duration sweep')


def sweep_power(qd: QdParams,
                cal: StarkCalibration,
                tau_l: float,
                areas: Iterable[float],
                shape: PulseShape = 'gaussian',
                method: EnsembleMethod = Quadrature(),
                jobs: int = 1) -> list[SweepPoint]:
    """Concurrence versus pulse area (rad) at fixed duration."""
    areas = list(areas)
    if not areas or any(not a >= 0 for a in areas):
        raise DomainError(f'areas must be a non-empty list of non-negative values (got {areas})')
    if not tau_l > 0:
        raise DomainError(f'tau_l must be positive (got {tau_l})')
    items = [(PulseParams(tau_l, a, shape), _point_method(method, 'sweep-power', i)) for i, a in enumerate(areas)]
    return run_points(partial(_evaluate, qd, cal, _area), items, jobs, desc='Power sweep')


def notch_filter_experiment(qd: QdParams, pulse: PulseParams, cal: StarkCalibration, cutoff: float, n: int,
                            seed: int) -> NotchResult:
    """Concurrence of the pairs whose XX photon is shifted by at most `cutoff` (ueV).

    The events are the ones `MonteCarlo(n, seed)` averages, so an infinite cutoff reproduces
    the unfiltered Monte Carlo concurrence."""
    if n < MIN_MONTE_CARLO_SAMPLES:
        raise EnsembleError(f'the notch filter needs at least {MIN_MONTE_CARLO_SAMPLES} events (got {n})')
    if not cutoff >= 0:
        raise DomainError(f'cutoff must be non-negative (got {cutoff})')
    events = sample_emission_events(qd, pulse, cal, n, as_generator(seed))
    kept = events.select(events.e_shift_xx <= cutoff)
    if len(kept) == 0:
        raise EmptyEnsembleError(f'a cutoff of {cutoff} ueV rejects all {n} events')
    retained = len(kept) / len(events)
    if retained < 0.01:
        logger.warning(f'Notch filter keeps only {retained:.2%} of the events')
    return NotchResult(events_coherence(kept).concurrence, retained)


def write_sweep_csv(points: Sequence[SweepPoint], path: Path, axis: str = 'tau_l_ps') -> Path:
    """Write sweep points with the x column named `axis` (tau_l_ps or area_over_pi)."""
    scale = math.pi if axis == 'area_over_pi' else 1.0
    rows = ((p.value / scale, p.concurrence, p.method, p.n_samples, p.seed) for p in points)
    return write_csv(path, (axis, 'concurrence', 'method', 'n_samples', 'seed'), rows)
