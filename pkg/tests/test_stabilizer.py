import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import PAULI, kron_all
from qforge.circuit import Circuit, StateVector, measure_collapse, subsystem_entropy
from qforge.numerics import RngStream
from qforge.stabilizer import (StabilizerTableau, apply_clifford, clifford2_matrix,
                               clifford2_tables, clifford_mipt_trajectory, gf2_rank)

LETTER = {"I": 0, "X": 1, "Y": 2, "Z": 3}


def string_matrix(s):
    sign = -1 if s[0] == "-" else 1
    return sign * kron_all([PAULI[LETTER[c]] for c in s[1:]])


def random_clifford_program(n, seed, length=20):
    g = np.random.default_rng(seed)
    prog = []
    for _ in range(length):
        name = g.choice(["h", "s", "cx", "cz", "x", "y", "z"])
        if name in ("cx", "cz"):
            if n < 2:
                continue
            a, b = g.choice(n, 2, replace=False)
            prog.append((str(name), (int(a), int(b))))
        else:
            prog.append((str(name), (int(g.integers(n)),)))
    return prog


def test_bell_stabilizers():
    t = StabilizerTableau(2)
    t.h(0)
    t.cx(0, 1)
    assert sorted(t.stabilizer_strings()) == ["+XX", "+ZZ"]
    assert t.entanglement_entropy([0]) == 1


def test_measure_deterministic_and_random():
    t = StabilizerTableau(1)
    assert t.measure(0) == (0, False)
    t.h(0)
    out, random = t.measure(0, forced=1)
    assert out == 1 and random
    assert t.measure(0) == (1, False)
    with pytest.raises(ValueError):
        t.measure(0, forced=0)


def test_gf2_rank():
    assert gf2_rank(np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], dtype=np.uint8)) == 2
    assert gf2_rank(np.eye(70, dtype=np.uint8)) == 70


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_tableau_matches_statevector(n, seed):
    prog = random_clifford_program(n, seed)
    t = StabilizerTableau(n)
    c = Circuit(n)
    for name, w in prog:
        apply_clifford(t, name, w)
        c.append(name, w)
    psi = c.run().amplitudes
    for s in t.stabilizer_strings():
        assert np.allclose(string_matrix(s) @ psi, psi, atol=1e-10)
    for k in range(1, n):
        assert t.entanglement_entropy(range(k)) == pytest.approx(subsystem_entropy(StateVector(psi, n), range(k)), abs=1e-9)


@given(st.integers(2, 4), st.integers(0, 2**31 - 1), st.data())
def test_measurement_matches_statevector(n, seed, data):
    prog = random_clifford_program(n, seed)
    t = StabilizerTableau(n)
    c = Circuit(n)
    for name, w in prog:
        apply_clifford(t, name, w)
        c.append(name, w)
    state = c.run()
    for _ in range(3):
        a = data.draw(st.integers(0, n - 1))
        det = t.is_deterministic(a)
        out, random = t.measure(a, RngStream(seed))
        assert random == (not det)
        o2, p, state = measure_collapse(state, a, forced=out)
        assert p == pytest.approx(1.0 if det else 0.5)
    for s in t.stabilizer_strings():
        assert np.allclose(string_matrix(s) @ state.amplitudes, state.amplitudes, atol=1e-10)


def test_two_qubit_clifford_group_order():
    images, signs = clifford2_tables()
    assert images.shape == (11520, 16)
    keys = {(tuple(a), tuple(b)) for a, b in zip(images, signs)}
    assert len(keys) == 11520


def pattern_pauli(pat):
    xi, xj, zi, zj = (pat >> 3) & 1, (pat >> 2) & 1, (pat >> 1) & 1, pat & 1
    code = lambda x, z: {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}[(x, z)]
    return np.kron(PAULI[code(xi, zi)], PAULI[code(xj, zj)])


@pytest.mark.parametrize("index", [0, 1, 17, 719, 720, 5000, 11519])
def test_clifford_tables_match_dense_conjugation(index):
    u = clifford2_matrix(index)
    images, signs = clifford2_tables()
    for pat in range(16):
        conj = u @ pattern_pauli(pat) @ u.conj().T
        expect = (-1) ** int(signs[index, pat]) * pattern_pauli(int(images[index, pat]))
        assert np.allclose(conj, expect, atol=1e-10)


def test_uniform_z_marginal():
    """Each non-identity Pauli image of Z x I is equally likely over the group."""
    images, signs = clifford2_tables()
    zi = 0b0010  # pattern bits: x_i x_j z_i z_j
    counts = np.bincount(images[:, zi], minlength=16)
    assert counts[0] == 0 and np.all(counts[1:] == 11520 // 15)
    assert np.mean(signs[:, zi]) == pytest.approx(0.5)


def test_mipt_limits():
    vol = clifford_mipt_trajectory(16, 32, 0.0, RngStream(1))
    area = clifford_mipt_trajectory(16, 32, 1.0, RngStream(1))
    assert vol >= 6 and area == 0
    assert clifford_mipt_trajectory(8, 10, 0.2, RngStream(4)) == clifford_mipt_trajectory(8, 10, 0.2, RngStream(4))
    with pytest.raises(ValueError):
        clifford_mipt_trajectory(5, 3, 0.1)
