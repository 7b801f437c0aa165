import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm

from core.consts import BASIS, HERMITIAN_TOL, PSD_TOL, TRACE_TOL, UNPHYSICAL_TOL

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
SPIN_FLIP = np.kron(SIGMA_Y, SIGMA_Y)
IDENTITY = np.eye(4, dtype=complex)
MAXIMALLY_MIXED = IDENTITY / 4


class UnphysicalStateError(ValueError):
    pass


class CorrectionError(ValueError):
    pass


def _hermitian_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T)))


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    """An immutable, validated 4x4 density matrix.

    Hermitian and unit-trace to 1e-10, smallest eigenvalue >= -1e-8."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise UnphysicalStateError(f'expected a 4x4 matrix, got shape {m.shape}')
        if (defect := _hermitian_defect(m)) > HERMITIAN_TOL:
            raise UnphysicalStateError(f'matrix is not Hermitian (max defect {defect:.3g})')
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise UnphysicalStateError(f'trace must be 1 (got {np.trace(m).real:.12g})')
        if (smallest := np.linalg.eigvalsh(m)[0]) < -PSD_TOL:
            raise UnphysicalStateError(f'matrix is not positive semidefinite (eigenvalue {smallest:.3g})')
        m.setflags(write=False)
        object.__setattr__(self, 'matrix', m)

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}(concurrence={concurrence(self):.6f})'

    def expectation(self, operator: np.ndarray) -> float:
        return float(np.real(np.trace(operator @ self.matrix)))

    def to_json(self) -> str:
        return json.dumps(
            {
                'basis': list(BASIS),
                're': self.matrix.real.tolist(),
                'im': self.matrix.imag.tolist()
            },
            indent=2,
            sort_keys=True) + '\n'

    @classmethod
    def from_json(cls, text: str):
        data = json.loads(text)
        if tuple(data['basis']) != BASIS:
            raise UnphysicalStateError(f'unsupported basis order {data["basis"]}')
        return cls(np.array(data['re']) + 1j * np.array(data['im']))


@dataclass(frozen=True)
class G2Pair:
    """Zero-delay autocorrelations of the X and XX photons."""

    g2_x: float
    g2_xx: float

    def __post_init__(self):
        for name in ('g2_x', 'g2_xx'):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f'{name} must lie in [0, 1] (got {getattr(self, name)})')

    @property
    def noise_weight(self) -> float:
        """Probability that either arm carries a multiphoton event."""
        return 1 - (1 - self.g2_x) * (1 - self.g2_xx)


def _as_matrix(rho: TwoPhotonState | np.ndarray) -> np.ndarray:
    if isinstance(rho, TwoPhotonState):
        return rho.matrix
    m = np.asarray(rho, dtype=complex)
    if _hermitian_defect(m) > HERMITIAN_TOL:
        raise UnphysicalStateError('matrix is not Hermitian')
    if (smallest := np.linalg.eigvalsh(m)[0]) < -UNPHYSICAL_TOL:
        raise UnphysicalStateError(f'matrix has eigenvalue {smallest:.3g}')
    return m


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.where(w > 1e-14, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def make_phi_plus() -> TwoPhotonState:
    return phase_rotated_pair(0.0)


def phase_rotated_pair(phi: float) -> TwoPhotonState:
    """The pure state (|HH> + exp(i phi)|VV>)/sqrt(2)."""
    if not np.isfinite(phi):
        raise ValueError(f'phase must be finite (got {phi})')
    ket = np.array([1, 0, 0, np.exp(1j * phi)]) / np.sqrt(2)
    return TwoPhotonState(np.outer(ket, ket.conj()))


def coherent_pair(coherence: complex) -> TwoPhotonState:
    """Mixture of phase-rotated pairs with average E[exp(i phi)] = `coherence`."""
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = m[3, 3] = 0.5
    m[3, 0] = coherence / 2
    m[0, 3] = np.conj(coherence) / 2
    return TwoPhotonState(m)


def concurrence(rho: TwoPhotonState | np.ndarray) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4).

    The l_i are the singular values of sqrt(rho) * sqrt(rho_tilde), i.e. the square roots of the
    eigenvalues of rho (sy x sy) rho* (sy x sy), obtained without a square root of a noisy spectrum."""
    m = _as_matrix(rho)
    root = _psd_sqrt(m)
    flipped_root = SPIN_FLIP @ root.conj() @ SPIN_FLIP
    lambdas = np.linalg.svd(root @ flipped_root, compute_uv=False)
    return float(min(1.0, max(0.0, lambdas[0] - lambdas[1:].sum())))


def purity(rho: TwoPhotonState | np.ndarray) -> float:
    m = _as_matrix(rho)
    return float(np.real(np.trace(m @ m)))


def fidelity(rho: TwoPhotonState | np.ndarray, sigma: TwoPhotonState | np.ndarray) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    root = _psd_sqrt(_as_matrix(rho))
    inner = sqrtm(root @ _as_matrix(sigma) @ root)
    return float(min(1.0, np.real(np.trace(inner))**2))


def max_bell_fidelity(rho: TwoPhotonState | np.ndarray) -> float:
    """Largest overlap with (|HH> + exp(i phi)|VV>)/sqrt(2) over the phase phi."""
    m = _as_matrix(rho)
    return float(np.real(m[0, 0] + m[3, 3]) / 2 + abs(m[0, 3]))


def physicality_project(m: np.ndarray) -> TwoPhotonState:
    """Clip negative eigenvalues of a Hermitian matrix and renormalize its trace."""
    m = np.asarray(m, dtype=complex)
    if m.shape != (4, 4) or _hermitian_defect(m) > HERMITIAN_TOL:
        raise UnphysicalStateError('only 4x4 Hermitian matrices can be projected')
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        raise UnphysicalStateError('matrix has no positive eigenvalue')
    projected = (v * (w / w.sum())) @ v.conj().T
    return TwoPhotonState((projected + projected.conj().T) / 2)


def depolarize(rho: TwoPhotonState, eps: float) -> TwoPhotonState:
    """The mixture (1 - eps) rho + eps I/4."""
    if not 0 <= eps <= 1:
        raise ValueError(f'noise weight must lie in [0, 1] (got {eps})')
    return TwoPhotonState((1 - eps) * rho.matrix + eps * MAXIMALLY_MIXED)


def multiphoton_correct(rho_meas: TwoPhotonState, g2: G2Pair) -> TwoPhotonState:
    """Remove isotropic multiphoton noise of weight 1 - (1 - g2_x)(1 - g2_xx)."""
    eps = g2.noise_weight
    if eps >= 1:
        raise CorrectionError(f'noise weight {eps} leaves no signal to recover')
    return physicality_project((rho_meas.matrix - eps * MAXIMALLY_MIXED) / (1 - eps))
