"""Measurement-induced entanglement transition in random Clifford circuits.

Low measurement rates give entropy growing with system size, high rates
saturate to an area law.
"""
import numpy as np

from qforge.numerics import RngStream, rng_split
from qforge.stabilizer import clifford_mipt_trajectory

sizes = [8, 16, 24]
rates = [0.05, 0.1, 0.2, 0.3, 0.5]
ntraj = 40

print("p     " + "".join(f"L={L:<8d}" for L in sizes))
for p, stream in zip(rates, rng_split(RngStream(1), len(rates))):
    row = []
    for L, s in zip(sizes, rng_split(stream, len(sizes))):
        row.append(np.mean([clifford_mipt_trajectory(L, 4 * L, p, t) for t in rng_split(s, ntraj)]))
    print(f"{p:<5.2f} " + "".join(f"{v:<10.2f}" for v in row))
