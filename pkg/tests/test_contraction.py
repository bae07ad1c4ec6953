import numpy as np
import pytest
from hypothesis import given, strategies as st

from qforge.circuit import Circuit, amplitude, expectation_pauli
from qforge.contraction import (ContractionStats, ContractionTree, TensorNetwork, capture_amplitude_network,
                                capture_expectation_network, contract, find_path, load_path, random_network,
                                save_path)
from qforge.hamiltonian import PauliSum
from qforge.numerics import RngStream


def test_matrix_chain():
    g = np.random.default_rng(0)
    a, b, c = g.normal(size=(3, 4)), g.normal(size=(4, 5)), g.normal(size=(5, 2))
    net = TensorNetwork([a, b, c], [("i", "j"), ("j", "k"), ("k", "l")])
    assert net.open == ("i", "l")
    tree = find_path(net)
    assert np.allclose(contract(net, tree), a @ b @ c)


def test_trace_closed_network():
    m = np.arange(9.0).reshape(3, 3)
    net = TensorNetwork([m, np.eye(3)], [("a", "b"), ("b", "a")])
    assert contract(net, find_path(net)) == pytest.approx(np.trace(m))


def test_network_validation():
    with pytest.raises(ValueError):
        TensorNetwork([np.ones((2, 2))], [("a",)])
    with pytest.raises(ValueError):
        TensorNetwork([np.ones(2)] * 3, [("a",)] * 3)
    with pytest.raises(ValueError):
        TensorNetwork([np.ones(2), np.ones(3)], [("a",), ("a",)])
    with pytest.raises(ValueError):
        TensorNetwork([np.ones((2, 2))], [("a", "a")])


def test_expectation_network_matches_statevector():
    c = Circuit(4).h(0).cx(0, 1).ry(2, 0.4).rzz(1, 3, 0.9).rx(3, 1.2).cz(2, 3)
    obs = PauliSum(4, [(0.7, [3, 0, 1, 2])])
    net = capture_expectation_network(c, obs)
    val = contract(net, find_path(net))
    assert complex(val) == pytest.approx(expectation_pauli(c.run(), obs), abs=1e-12)


def test_amplitude_network():
    c = Circuit(3).h(0).cx(0, 1).rx(2, 0.5)
    for bits in ("000", "110", "111"):
        net = capture_amplitude_network(c, bits)
        assert complex(contract(net, find_path(net))) == pytest.approx(amplitude(c.run(), bits), abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(4, 12), st.integers(0, 2))
def test_path_contraction_matches_einsum(seed, T, num_open):
    net = random_network(T, RngStream(seed), num_open=num_open)
    ref = net.contract_dense()
    out = contract(net, find_path(net, max_repeats=3, seed=seed))
    assert np.allclose(out, ref, atol=1e-12, rtol=1e-10)


@given(st.integers(0, 2**31 - 1))
def test_slicing_respects_target_and_is_exact(seed):
    net = random_network(14, RngStream(seed), num_open=1)
    free = find_path(net)
    target = max(max(t.size for t in net.tensors), free.costs["largest_intermediate"] // 4)
    tree = find_path(net, target_size=target)
    stats = ContractionStats()
    out = contract(net, tree, stats=stats)
    assert stats.max_intermediate <= target
    assert stats.slices_executed == tree.num_slices
    assert np.allclose(out, contract(net, free), atol=1e-12)


def test_workers_bitwise_identical():
    net = random_network(16, RngStream(3))
    tree = find_path(net, target_size=max(t.size for t in net.tensors))
    assert tree.num_slices > 1
    a = contract(net, tree)
    b = contract(net, tree, workers=4)
    assert np.array_equal(a, b)


def test_target_below_input_raises():
    net = random_network(6, RngStream(0))
    with pytest.raises(ValueError):
        find_path(net, target_size=1)


def test_save_load_round_trip_and_signature(tmp_path):
    net = random_network(10, RngStream(1))
    tree = find_path(net, target_size=max(t.size for t in net.tensors))
    f = tmp_path / "p.json"
    save_path(tree, f)
    back = load_path(f, net)
    assert back == tree
    assert np.array_equal(contract(net, back), contract(net, tree))
    other = random_network(10, RngStream(2))
    with pytest.raises(ValueError):
        load_path(f, other)
    with pytest.raises(ValueError):
        contract(other, tree)


def test_tree_dict_round_trip():
    net = random_network(8, RngStream(5))
    tree = find_path(net)
    assert ContractionTree.from_dict(tree.to_dict()) == tree
    assert tree.costs["flops"] > 0


def test_find_path_deterministic():
    net = random_network(12, RngStream(9))
    assert find_path(net, seed=4) == find_path(net, seed=4)
