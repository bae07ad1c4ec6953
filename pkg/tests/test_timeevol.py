import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from conftest import random_state
from qforge.circuit import Circuit, StateVector
from qforge.hamiltonian import PauliSum, heisenberg_terms, pauli_sum_to_coo, tfim_terms
from qforge.lattice import build_lattice
from qforge.numerics import NumericalContractError
from qforge.timeevol import (AnalogCircuit, SpectralBounds, chebyshev_evol, ed_evol, estimate_k,
                             estimate_spectral_bounds, krylov_evol, lanczos_ground, ode_evol, run_analog_circuit)

X = PauliSum(1, [(1.0, [1])])


def tfim(n, g=1.0):
    return pauli_sum_to_coo(tfim_terms(build_lattice("chain", n), g))


def test_rabi_oscillation_ed():
    psi = ed_evol(X, StateVector.zero(1), [np.pi / 2])[0]
    assert np.allclose(psi.amplitudes, [0, -1j])


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 3.0))
def test_three_methods_match_expm(seed, t):
    h = tfim(5, 0.7)
    psi0 = random_state(5, np.random.default_rng(seed))
    ref = expm(-1j * t * h.to_dense()) @ psi0
    assert np.allclose(ed_evol(h, psi0, [t])[0], ref, atol=1e-10)
    assert np.allclose(krylov_evol(h, psi0, [t])[0], ref, atol=1e-10)
    b = estimate_spectral_bounds(h)
    assert np.allclose(chebyshev_evol(h, psi0, t, b), ref, atol=1e-10)


def test_chebyshev_long_time_substeps():
    h = pauli_sum_to_coo(heisenberg_terms(build_lattice("chain", 8, pbc=True)))
    psi0 = random_state(8, np.random.default_rng(1))
    b = estimate_spectral_bounds(h)
    k, M = estimate_k(20.0, b)
    assert M > 1
    ref = ed_evol(h, psi0, [20.0])[0]
    assert np.linalg.norm(chebyshev_evol(h, psi0, 20.0, b) - ref) < 1e-9


def test_chebyshev_bad_bounds_raise():
    h = tfim(4)
    with pytest.raises(NumericalContractError):
        chebyshev_evol(h, random_state(4, np.random.default_rng(0)), 5.0, SpectralBounds(-1.0, 1.0))
    with pytest.raises(ValueError):
        SpectralBounds(1.0, -1.0)


def test_spectral_bounds_bracket():
    h = tfim(6, 1.3)
    w = np.linalg.eigvalsh(h.to_dense())
    b = estimate_spectral_bounds(h)
    assert b.e_min <= w[0] and b.e_max >= w[-1]


def test_estimate_k_rule():
    assert estimate_k(1.0, (-1.0, 1.0)) == (22, 1)
    k, M = estimate_k(100.0, (-1.0, 1.0))
    assert M == 4 and k == int(np.ceil(1.2 * 25 + 20))


def test_lanczos_ground_two_site_tfim():
    e, v = lanczos_ground(tfim(2))
    assert e == pytest.approx(-np.sqrt(5), abs=1e-10)
    e10, _ = lanczos_ground(tfim(10))
    assert e10 == pytest.approx(np.linalg.eigvalsh(tfim(10).to_dense())[0], abs=1e-9)


def test_ode_time_dependent_matches_analytic():
    # H(t) = cos(t) X commutes with itself, so psi(t) = exp(-i sin(t) X) psi0
    hfn = lambda t: np.cos(t) * np.array([[0, 1], [1, 0]], dtype=complex)
    times = [0.5, 1.0, 2.0]
    for method, kw in (("dopri-adaptive", dict(rtol=1e-10, atol=1e-12)), ("rk4-fixed", dict(dt=1e-3))):
        out = ode_evol(hfn, StateVector.zero(1), times, method=method, **kw)
        for t, psi in zip(times, out):
            ref = np.array([np.cos(np.sin(t)), -1j * np.sin(np.sin(t))])
            assert np.allclose(psi.amplitudes, ref, atol=1e-9)


def test_ode_rejects_non_hermitian_and_bad_times():
    with pytest.raises(ValueError):
        ode_evol(lambda t: np.array([[0, 1], [0, 0]]), StateVector.zero(1), [1.0])
    with pytest.raises(ValueError):
        ode_evol(lambda t: np.eye(2), StateVector.zero(1), [1.0, 0.5])
    with pytest.raises(ValueError):
        ode_evol(lambda t: np.eye(2), StateVector.zero(1), [1.0], method="euler")


def test_analog_circuit_matches_gate_sequence():
    zz = PauliSum(2, [(1.0, [3, 3])])
    ac = AnalogCircuit(2).add_gate("h", 0).add_gate("h", 1).add_analog_block(zz, 0.4)
    ac.add_circuit(Circuit(2).rx(0, 0.3))
    psi = run_analog_circuit(ac)
    ref = Circuit(2).h(0).h(1).rzz(0, 1, 0.8).rx(0, 0.3).run()
    assert abs(np.vdot(ref.amplitudes, psi.amplitudes)) == pytest.approx(1, abs=1e-9)


@given(st.floats(0, 2), st.integers(0, 2**31 - 1))
def test_evolution_is_unitary(t, seed):
    h = tfim(4, 0.5)
    psi0 = random_state(4, np.random.default_rng(seed))
    for out in (ed_evol(h, psi0, [t])[0], krylov_evol(h, psi0, [t])[0]):
        assert np.linalg.norm(out) == pytest.approx(1, abs=1e-12)
