"""Estimate Pauli expectations of a GHZ-like state from randomized
single-qubit measurements (classical shadows).

The variance grows as 3**weight, so the five-body XXXXX estimate is far
noisier than the two-body ones at the same number of snapshots.
"""
from qforge.circuit import Circuit, expectation_pauli
from qforge.hamiltonian import PauliSum
from qforge.numerics import RngStream
from qforge.shadows import estimate_pauli, random_bases, shadow_snapshots

n = 5
c = Circuit(n).h(0)
for q in range(n - 1):
    c.cx(q, q + 1)
c.ry(2, 0.4)
psi = c.run()

ds = shadow_snapshots(psi, random_bases(60000, n, RngStream(1)), RngStream(2))
for word in ({0: "Z", 1: "Z"}, {3: "Z", 4: "Z"}, {2: "X"}, {0: "X", 1: "X", 2: "X", 3: "X", 4: "X"}):
    codes = [{"X": 1, "Y": 2, "Z": 3}[word[k]] if k in word else 0 for k in range(n)]
    exact = expectation_pauli(psi, PauliSum(n, [(1.0, codes)])).real
    est = estimate_pauli(ds, word, n_batches=10)
    label = "".join(word.get(k, "I") for k in range(n))
    print(f"{label}  shadow {est: .3f}  exact {exact: .3f}")
