import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from qlg.spin.operators import (
    SX,
    SY,
    SZ,
    SpinSystem,
    bloch_vector,
    check_density_matrix,
    equalized_state,
    expm_hermitian,
    gradient_hamiltonian,
    internal_hamiltonian,
    normalized_deviation,
    propagate,
    pseudo_pure_state,
    pseudo_pure_weight,
    rf_hamiltonian,
    spin_op,
    thermal_state,
)

I2 = np.eye(2)


def random_hermitian(seed, n=4, scale=1000.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1e-2))
def test_expm_hermitian_matches_scipy(seed, t):
    H = random_hermitian(seed)
    np.testing.assert_allclose(expm_hermitian(H, t), expm(-1j * H * t), atol=1e-10)


def test_expm_hermitian_batched():
    Hs = np.stack([random_hermitian(s) for s in range(5)])
    ts = np.linspace(0, 1e-3, 5)
    U = expm_hermitian(Hs, ts)
    for k in range(5):
        np.testing.assert_allclose(U[k], expm(-1j * Hs[k] * ts[k]), atol=1e-10)


def test_spin_op_kronecker_layout():
    np.testing.assert_array_equal(spin_op("x", 1), np.kron(SX, I2))
    np.testing.assert_array_equal(spin_op("y", 2), np.kron(I2, SY))
    with pytest.raises(ValueError):
        spin_op("z", 3)


def test_internal_hamiltonian_terms():
    sys = SpinSystem(J=200.0, offset_h=10.0, offset_c=-5.0)
    H = internal_hamiltonian(sys)
    expected = (-math.pi * 10.0 * np.kron(SZ, I2) + math.pi * 5.0 * np.kron(I2, SZ)
                + 0.5 * math.pi * 200.0 * np.kron(SZ, SZ))
    np.testing.assert_allclose(H, expected)


def test_zz_delay_phase():
    # a ZZ delay of 1/(2J) gives exp(-i pi/4 ZZ)
    sys = SpinSystem(J=215.0)
    U = expm_hermitian(internal_hamiltonian(sys), 1 / (2 * sys.J))
    np.testing.assert_allclose(U, expm(-0.25j * math.pi * np.kron(SZ, SZ)), atol=1e-12)


def test_rf_pulse_rotates_z_toward_minus_x_for_phase_y():
    # H = -(w/2) Y drives r along dr/dt = r x Omega: +z tips toward -x
    H = rf_hamiltonian(1, 0.0, 2 * math.pi * 1000.0)
    rho0 = np.zeros((4, 4), complex)
    rho0[0, 0] = 1
    rho = propagate(rho0, H, 1 / 4000)  # pi/2
    np.testing.assert_allclose(bloch_vector(rho, 1), [-1, 0, 0], atol=1e-12)


def test_gradient_hamiltonian_scales_with_gamma():
    sys = SpinSystem()
    H = gradient_hamiltonian(sys, 0.01, 1e-3)
    w_h = 2 * math.pi * sys.gamma_h * 1e-5
    assert H[0, 0].real == pytest.approx(-0.5 * w_h * (1 + 1 / sys.gamma_ratio))
    assert sys.gamma_c == pytest.approx(sys.gamma_h / 3.976)


def test_propagate_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        propagate(np.eye(4) / 4, np.triu(np.ones((4, 4))), 1.0)


@pytest.mark.parametrize("factory", [thermal_state, equalized_state, pseudo_pure_state])
def test_states_are_valid_density_matrices(factory):
    check_density_matrix(factory(SpinSystem()))


def test_thermal_and_equalized_magnetization():
    sys = SpinSystem(epsilon=1e-5)
    th = thermal_state(sys)
    assert np.trace(th @ spin_op("z", 1)).real == pytest.approx(4e-5 * 3.976)
    assert np.trace(th @ spin_op("z", 2)).real == pytest.approx(4e-5)
    eq = equalized_state(sys)
    m1 = np.trace(eq @ spin_op("z", 1)).real
    assert m1 == pytest.approx(np.trace(eq @ spin_op("z", 2)).real)
    assert m1 == pytest.approx(0.5 * (4e-5 * 3.976 + 4e-5))


def test_pseudo_pure_state_deviation_is_the_pure_state():
    sys = SpinSystem(epsilon=1e-5)
    w = pseudo_pure_weight(sys)
    assert w == pytest.approx(1e-5 * math.sqrt(3) / (4 * math.sqrt(2)) * 4.976)
    ket = np.zeros((4, 4))
    ket[0, 0] = 1
    np.testing.assert_allclose(normalized_deviation(pseudo_pure_state(sys), sys), ket, atol=1e-9)


def test_deviation_evolves_like_pure_state():
    sys = SpinSystem()
    U = expm(-1j * random_hermitian(3) * 1e-3)
    ket = U[:, 0]
    rho = U @ pseudo_pure_state(sys) @ U.conj().T
    np.testing.assert_allclose(normalized_deviation(rho, sys), np.outer(ket, ket.conj()),
                               atol=1e-9)


def test_check_density_matrix_errors():
    with pytest.raises(ValueError, match="4x4"):
        check_density_matrix(np.eye(2) / 2)
    with pytest.raises(ValueError, match="Hermitian"):
        check_density_matrix(np.triu(np.ones((4, 4))) / 4)
    with pytest.raises(ValueError, match="trace"):
        check_density_matrix(np.eye(4))
    with pytest.raises(ValueError, match="negative"):
        check_density_matrix(np.diag([1.5, -0.5, 0, 0]))
    check_density_matrix(np.eye(4), trace=None)


def test_bloch_vector_batched():
    kets = np.array([[1, 0, 0, 0], [0, 0, 1, 0]], dtype=complex)
    rho = kets[:, :, None] * kets[:, None, :].conj()
    np.testing.assert_allclose(bloch_vector(rho, 1), [[0, 0, 1], [0, 0, -1]])
    np.testing.assert_allclose(bloch_vector(rho, 2), [[0, 0, 1], [0, 0, 1]])


def test_spin_system_validation():
    for bad in (dict(J=-1), dict(epsilon=0), dict(gamma_ratio=0)):
        with pytest.raises(ValueError):
            SpinSystem(**bad)
    assert SpinSystem(J=0).J == 0
