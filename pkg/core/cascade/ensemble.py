"""Ensemble averages over emission events.

The model only dephases the HH-VV coherence, so the averaged state is fixed by the complex
coherence E[exp(i phi)]: rho = diag(1/2, 0, 0, 1/2) with rho_14 = conj(E) / 2.

Quadrature scheme: Gauss-Legendre in the preparation time t0 over the pulse window, weighted
by the squared envelope. Each waiting time is mapped through its exponential CDF,
u = 1 - exp(-(t - t_start) / tau), so the decay weight becomes the Lebesgue measure on u, and
integrated with Gauss-Legendre up to the end T of the pulse window. Beyond T the splitting is
the static FSS only, which contributes the closed form 1 / (1 - i * omega_fss * tau_x)."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from core.cascade.model import (EmissionEvents, PulseParams, QdParams, StarkCalibration, accumulated_phase,
                                envelope, fss_coherence, sample_emission_events)
from core.consts import HBAR_UEV_PS, MIN_MONTE_CARLO_SAMPLES, N_PREPARATION_NODES, N_WAITING_NODES
from core.seeding import as_generator
from core.states import TwoPhotonState, coherent_pair, physicality_project

logger = logging.getLogger(__name__)


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class Quadrature:
    n_prep: int = N_PREPARATION_NODES
    n_wait: int = N_WAITING_NODES

    def __post_init__(self):
        if self.n_prep < 2 or self.n_wait < 2:
            raise EnsembleError(f'quadrature needs at least 2 nodes per axis (got {self.n_prep}, {self.n_wait})')

    label = 'quadrature'

    @property
    def n_samples(self) -> int:
        return self.n_prep * self.n_wait**2

    @property
    def seed(self) -> None:
        return None


@dataclass(frozen=True)
class MonteCarlo:
    n: int
    seed: int

    def __post_init__(self):
        if self.n < MIN_MONTE_CARLO_SAMPLES:
            raise EnsembleError(f'Monte Carlo needs at least {MIN_MONTE_CARLO_SAMPLES} events (got {self.n})')

    label = 'montecarlo'

    @property
    def n_samples(self) -> int:
        return self.n


EnsembleMethod = Quadrature | MonteCarlo


@dataclass(frozen=True)
class CoherenceEstimate:
    value: complex
    stderr: float
    n_samples: int

    @property
    def concurrence(self) -> float:
        return min(1.0, abs(self.value))


def _fss_tail(qd: QdParams) -> complex:
    """E[exp(i omega_fss t)] for t ~ Exp(tau_x)."""
    return 1 / (1 - 1j * qd.fss / HBAR_UEV_PS * qd.tau_x)


def _legendre_on(n: int, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, upper], broadcast over the shape of `upper`."""
    x, w = special.roots_legendre(n)
    half = upper[..., None] / 2
    return half * (x + 1), half * w


def quadrature_coherence(qd: QdParams, pulse: PulseParams, cal: StarkCalibration,
                         method: Quadrature = Quadrature()) -> CoherenceEstimate:
    tail = _fss_tail(qd)
    if not pulse.is_on:
        return CoherenceEstimate(tail, 0.0, 0)

    end = pulse.half_window
    x, w = special.roots_legendre(method.n_prep)
    t0 = end * x
    prep_weights = w * envelope(t0, pulse)**2
    prep_weights /= prep_weights.sum()

    # XX emission inside the window
    u_xx = -np.expm1(-(end - t0) / qd.tau_xx)
    s, s_weights = _legendre_on(method.n_wait, u_xx)
    t_xx = t0[:, None] - qd.tau_xx * np.log1p(-s)

    # X emission inside the window, then the FSS-only tail
    u_x = -np.expm1(-(end - t_xx) / qd.tau_x)
    v, v_weights = _legendre_on(method.n_wait, u_x)
    t_x = t_xx[..., None] - qd.tau_x * np.log1p(-v)
    inside = (v_weights * np.exp(1j * accumulated_phase(t_xx[..., None], t_x, qd, pulse, cal))).sum(axis=-1)
    outside = (1 - u_x) * np.exp(1j * accumulated_phase(t_xx, end, qd, pulse, cal)) * tail
    after_xx = (s_weights * (inside + outside)).sum(axis=-1) + (1 - u_xx) * tail

    value = complex((prep_weights * after_xx).sum())
    logger.debug(f'Quadrature coherence {value:.10f} on {method.n_samples} nodes')
    return CoherenceEstimate(value, 0.0, method.n_samples)


def events_coherence(events: EmissionEvents) -> CoherenceEstimate:
    """Sample mean of exp(i phi) with the standard error of its modulus."""
    if len(events) == 0:
        raise EnsembleError('cannot average an empty set of events')
    z = np.exp(1j * events.phi)
    mean = complex(z.mean())
    direction = mean / abs(mean) if abs(mean) > 0 else 1.0
    spread = float(np.std((z * np.conj(direction)).real, ddof=1)) if len(z) > 1 else 0.0
    return CoherenceEstimate(mean, spread / math.sqrt(len(z)), len(z))


def montecarlo_coherence(qd: QdParams, pulse: PulseParams, cal: StarkCalibration,
                         method: MonteCarlo) -> CoherenceEstimate:
    events = sample_emission_events(qd, pulse, cal, method.n, as_generator(method.seed))
    return events_coherence(events)


def ensemble_coherence(qd: QdParams, pulse: PulseParams, cal: StarkCalibration,
                       method: EnsembleMethod = Quadrature()) -> CoherenceEstimate:
    match method:
        case Quadrature():
            return quadrature_coherence(qd, pulse, cal, method)
        case MonteCarlo():
            return montecarlo_coherence(qd, pulse, cal, method)
        case _:
            raise EnsembleError(f'unknown ensemble method {method!r}')


def ensemble_state(qd: QdParams, pulse: PulseParams, cal: StarkCalibration,
                   method: EnsembleMethod = Quadrature()) -> TwoPhotonState:
    """Two-photon state averaged over the emission-event distribution."""
    return coherent_pair(ensemble_coherence(qd, pulse, cal, method).value)


def remove_fss_dephasing(rho: TwoPhotonState, qd: QdParams) -> TwoPhotonState:
    """Undo the HH-VV dephasing caused by the static FSS alone."""
    m = np.array(rho.matrix)
    factor = fss_coherence(qd)
    m[0, 3] /= factor
    m[3, 0] /= factor
    return physicality_project(m)
