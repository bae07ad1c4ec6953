"""qforge: state-vector, stabilizer, MPS and fermion-Gaussian simulation engines
with time evolution, noise, shadows, tensor contraction and variational drivers."""

__version__ = "0.1.0"
