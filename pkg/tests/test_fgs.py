import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from fock import annihilators, block_entropy, fock_ground, fock_hamiltonian, occupation, project
from qforge.fgs import (FGSState, QuadraticHamiltonian, apply_majorana, bdg_spectrum, build_kitaev, fgs_energy,
                        fgs_entropy, fgs_evolve, fgs_ground_state, fgs_measure, fgs_parity, from_filling,
                        kitaev_entropy_scan, majorana_covariance, pfaffian, random_quadratic, two_time_correlation)
from qforge.numerics import RngStream


def fock_correlation(psi, L):
    c = annihilators(L)
    ops = c + [m.conj().T for m in c]
    C = np.empty((2 * L, 2 * L), dtype=complex)
    for a in range(2 * L):
        for b in range(2 * L):
            C[a, b] = np.vdot(psi, ops[a].conj().T @ ops[b] @ psi)
    return C


def fock_product(L, filled):
    idx = sum(1 << (L - 1 - i) for i in filled)
    v = np.zeros(2**L, dtype=complex)
    v[idx] = 1
    return v


def gapped(L, seed):
    for k in range(50):
        h = random_quadratic(L, RngStream(seed, k))
        if fock_ground(h)[2] > 1e-3:
            return h
    raise RuntimeError("no gapped sample")


@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_ground_state_matches_fock(L, seed):
    h = gapped(L, seed)
    e0, psi, _ = fock_ground(h)
    s = fgs_ground_state(h)
    assert fgs_energy(s, h) == pytest.approx(e0, abs=1e-9)
    assert np.allclose(s.C, fock_correlation(psi, L), atol=1e-8)
    assert np.allclose(s.C @ s.C, s.C, atol=1e-10)
    for k in range(1, L):
        assert fgs_entropy(s, range(k)) == pytest.approx(block_entropy(psi, L, k), abs=1e-8)


def test_kitaev_ideal_point_one_bit():
    s = fgs_ground_state(build_kitaev(8, 1.0, 1.0, 0.0))
    assert fgs_entropy(s, range(4)) == pytest.approx(1.0, abs=1e-9)
    assert s.degenerate


def test_trivial_phase_low_entropy():
    h = build_kitaev(8, 1.0, 1.0, -10.0)
    s = fgs_ground_state(h)
    _, psi, _ = fock_ground(h)
    assert fgs_entropy(s, range(4)) == pytest.approx(block_entropy(psi, 8, 4), abs=1e-9)
    assert fgs_entropy(s, range(4)) < 0.1 and not s.degenerate


def test_kitaev_scan_peak_near_transition():
    curve, mu_star = kitaev_entropy_scan(40, 1.0, 1.0, np.linspace(0, 4, 41))
    assert len(curve) == 41 and abs(mu_star - 2.0) < 0.5


@given(st.integers(2, 4), st.integers(0, 2**31 - 1), st.floats(-2, 2))
def test_real_time_evolution_matches_fock(L, seed, t):
    h = random_quadratic(L, RngStream(seed))
    filled = [0] if L > 1 else []
    s = fgs_evolve(from_filling(L, filled), h, t)
    psi = expm(-1j * t * fock_hamiltonian(h)) @ fock_product(L, filled)
    assert np.allclose(s.C, fock_correlation(psi, L), atol=1e-9)


def test_two_time_correlation_matches_fock():
    L, t = 3, 0.7
    h = random_quadratic(L, RngStream(4))
    s0 = from_filling(L, [1])
    psi = fock_product(L, [1])
    H = fock_hamiltonian(h)
    U = expm(-1j * t * H)
    c = annihilators(L)
    ref = np.array([[np.vdot(psi, U.conj().T @ c[i].conj().T @ U @ c[j] @ psi) for j in range(L)] for i in range(L)])
    assert np.allclose(two_time_correlation(s0, h, t), ref, atol=1e-10)


def test_imaginary_time_cools_to_ground_state():
    h = build_kitaev(6, 1.0, 0.8, 0.5)
    g = fgs_ground_state(h)
    s = from_filling(6, [])
    if fgs_parity(s) != fgs_parity(g):
        s = apply_majorana(s, 0)
    cooled = fgs_evolve(s, h, 40.0, mode="imaginary")
    assert fgs_energy(cooled, h) == pytest.approx(fgs_energy(g, h), abs=1e-8)


@given(st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_measurement_matches_fock_projection(L, seed):
    h = gapped(L, seed)
    _, psi, _ = fock_ground(h)
    s = fgs_ground_state(h)
    site = seed % L
    p1 = occupation(psi, L, site)
    for outcome, p_ref in ((1, p1), (0, 1 - p1)):
        if p_ref < 1e-6:
            continue
        out, p, post = fgs_measure(s, site, forced=outcome)
        assert out == outcome and p == pytest.approx(p_ref, abs=1e-9)
        assert np.allclose(post.C, fock_correlation(project(psi, L, site, outcome), L), atol=1e-7)


def test_measure_zero_probability_raises():
    with pytest.raises(ValueError):
        fgs_measure(from_filling(3, [0]), 0, forced=0)


def test_parity_and_pfaffian():
    assert fgs_parity(from_filling(4, [0])) == -1
    assert fgs_parity(from_filling(4, [0, 2])) == 1
    assert fgs_parity(apply_majorana(from_filling(4, [0, 2]), 3)) == -1
    a = np.array([[0, 1.5, 0, 0], [-1.5, 0, 0, 0], [0, 0, 0, 2.0], [0, 0, -2.0, 0]])
    assert pfaffian(a) == pytest.approx(3.0)
    g = np.random.default_rng(2).normal(size=(6, 6))
    m = g - g.T
    assert pfaffian(m) ** 2 == pytest.approx(np.linalg.det(m))


def test_majorana_covariance_pure():
    s = fgs_ground_state(build_kitaev(5, 1.0, 0.6, 0.3))
    m = majorana_covariance(s)
    assert np.allclose(m, -m.T) and np.allclose(m @ m, -np.eye(10), atol=1e-10)


def test_validation():
    with pytest.raises(ValueError):
        QuadraticHamiltonian(2, [[0, 1], [0, 0]], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        QuadraticHamiltonian(2, np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        fgs_evolve(from_filling(2, []), build_kitaev(2, 1, 1, 0), 1.0, mode="sideways")
    spec = bdg_spectrum(build_kitaev(4, 1, 1, 0.5))
    assert np.allclose(np.sort(spec), np.sort(-spec))
    assert isinstance(from_filling(2, [1]), FGSState)
