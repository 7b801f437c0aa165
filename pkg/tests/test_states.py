import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from core.states import (MAXIMALLY_MIXED, CorrectionError, G2Pair, TwoPhotonState, UnphysicalStateError,
                         coherent_pair, concurrence, depolarize, fidelity, make_phi_plus, max_bell_fidelity,
                         multiphoton_correct, phase_rotated_pair, physicality_project, purity)


def random_state(seed: int) -> TwoPhotonState:
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = g @ g.conj().T
    return TwoPhotonState(m / np.trace(m).real)


def werner(p: float) -> TwoPhotonState:
    return depolarize(make_phi_plus(), 1 - p)


def test_phi_plus_is_maximally_entangled():
    assert abs(concurrence(make_phi_plus()) - 1) < 1e-12


def test_maximally_mixed_state_is_separable():
    assert concurrence(TwoPhotonState(MAXIMALLY_MIXED)) == 0


@pytest.mark.parametrize('p', [0, 0.25, 1 / 3, 0.5, 0.8, 1])
def test_werner_concurrence(p):
    assert abs(concurrence(werner(p)) - max(0, (3 * p - 1) / 2)) < 1e-9


def test_concurrence_is_invariant_under_local_unitaries():
    rho = random_state(7)
    expected = concurrence(rho)
    for seed in range(50):
        u = np.kron(unitary_group.rvs(2, random_state=seed), unitary_group.rvs(2, random_state=seed + 1000))
        rotated = u @ rho.matrix @ u.conj().T
        assert abs(concurrence((rotated + rotated.conj().T) / 2) - expected) < 1e-9


def test_phase_rotated_pairs_stay_maximally_entangled():
    for phi in np.linspace(0, 2 * math.pi, 9):
        state = phase_rotated_pair(phi)
        assert abs(concurrence(state) - 1) < 1e-12
        assert abs(max_bell_fidelity(state) - 1) < 1e-12


def test_coherent_pair_concurrence_is_the_coherence_modulus():
    assert abs(concurrence(coherent_pair(0.5)) - 0.5) < 1e-12
    assert abs(concurrence(coherent_pair(0.3j)) - 0.3) < 1e-12
    assert abs(max_bell_fidelity(coherent_pair(0.3j)) - 0.65) < 1e-12


def test_invalid_matrices_are_rejected():
    m = np.array(make_phi_plus().matrix)
    m[0, 1] = 0.1
    with pytest.raises(UnphysicalStateError):
        TwoPhotonState(m)
    with pytest.raises(UnphysicalStateError):
        TwoPhotonState(2 * MAXIMALLY_MIXED)
    with pytest.raises(UnphysicalStateError):
        TwoPhotonState(np.diag([0.6, 0.5, 0.0, -0.1]))
    with pytest.raises(UnphysicalStateError):
        TwoPhotonState(np.eye(3) / 3)


def test_state_is_immutable():
    state = make_phi_plus()
    with pytest.raises(ValueError):
        state.matrix[0, 0] = 1


def test_json_round_trip():
    rho = random_state(3)
    assert np.allclose(TwoPhotonState.from_json(rho.to_json()).matrix, rho.matrix, atol=1e-15)


def test_projection_clips_negative_eigenvalues():
    state = physicality_project(np.diag([0.6, 0.5, 0.0, -0.1]))
    assert np.allclose(state.matrix, np.diag([0.6, 0.5, 0, 0]) / 1.1)
    assert np.linalg.eigvalsh(state.matrix)[0] >= 0


def test_projection_keeps_physical_states():
    rho = random_state(11)
    assert np.allclose(physicality_project(rho.matrix).matrix, rho.matrix, atol=1e-12)


def test_projection_of_negative_matrix_fails():
    with pytest.raises(UnphysicalStateError):
        physicality_project(-np.eye(4))


def test_purity_and_fidelity():
    assert abs(purity(MAXIMALLY_MIXED) - 0.25) < 1e-12
    assert abs(purity(make_phi_plus()) - 1) < 1e-12
    assert abs(fidelity(make_phi_plus(), make_phi_plus()) - 1) < 1e-9
    assert abs(fidelity(make_phi_plus(), MAXIMALLY_MIXED) - 0.25) < 1e-9


@pytest.mark.parametrize('eps', [0, 0.05, 0.2, 0.5])
def test_multiphoton_correction_inverts_the_noise(eps):
    rho = random_state(5)
    corrected = multiphoton_correct(depolarize(rho, eps), G2Pair(eps, 0))
    assert np.allclose(corrected.matrix, rho.matrix, atol=1e-9)


def test_multiphoton_correction_of_a_werner_state():
    g2 = G2Pair(0.02, 0.05)
    eps = 1 - 0.98 * 0.95
    assert abs(g2.noise_weight - eps) < 1e-15
    measured = depolarize(werner(0.9), eps)
    gain = concurrence(multiphoton_correct(measured, g2)) - concurrence(measured)
    expected = (3 * 0.9 - 1) / 2 - (3 * 0.9 * (1 - eps) - 1) / 2
    assert abs(gain - expected) < 1e-9


def test_correction_without_signal_fails():
    with pytest.raises(CorrectionError):
        multiphoton_correct(make_phi_plus(), G2Pair(1.0, 0.0))
    with pytest.raises(ValueError):
        G2Pair(1.2, 0.0)
