"""Variational ground state of a short transverse-field Ising chain.

Runs Adam with parameter-shift gradients from a coupling-ramp start and
compares with exact diagonalization.
"""
import numpy as np

from qforge.hamiltonian import pauli_sum_to_coo, tfim_terms
from qforge.lattice import build_lattice
from qforge.numerics import RngStream
from qforge.variational import tfim_ansatz, tfim_ramp_parameters, vqe_run

n, layers = 6, 3
h = tfim_terms(build_lattice("chain", n), g=1.0)
exact = np.linalg.eigvalsh(pauli_sum_to_coo(h).to_dense())[0]

ans = tfim_ansatz(n, layers)
theta0 = tfim_ramp_parameters(n, layers) + RngStream(0).gen.normal(scale=1e-2, size=ans.num_params)
res = vqe_run(ans, theta0, h, steps=150, lr=2e-2)

for step in range(0, 151, 25):
    print(f"step {step:3d}  energy {res.traces[0][step]: .6f}")
print(f"exact       {exact: .6f}")
print(f"gap         {res.best_energy - exact:.2e}")
