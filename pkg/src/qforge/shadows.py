"""Classical shadows from random single-qubit Pauli measurements.

Basis codes are 1=X, 2=Y, 3=Z. A snapshot measures every qubit in its basis;
rotations are X -> H and Y -> H S^+ followed by a computational-basis readout.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .circuit import StateVector
from .numerics import as_stream, rng_split

_SQ2 = 1 / np.sqrt(2)
_H = np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex)
_SDG = np.diag([1, -1j])
ROTATIONS = {1: _H, 2: _H @ _SDG, 3: np.eye(2, dtype=complex)}


@dataclass
class ShadowDataset:
    n: int
    bases: np.ndarray  # (M, n) codes in {1, 2, 3}
    outcomes: np.ndarray  # (M, n) bits

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.int8).reshape(-1, self.n)
        self.outcomes = np.asarray(self.outcomes, dtype=np.uint8).reshape(-1, self.n)
        if self.bases.shape != self.outcomes.shape:
            raise ValueError("bases and outcomes must have equal shape")
        if self.bases.size and not np.isin(self.bases, (1, 2, 3)).all():
            raise ValueError("basis codes must be 1, 2 or 3")
        if self.outcomes.size and self.outcomes.max() > 1:
            raise ValueError("outcomes must be bits")

    @property
    def M(self) -> int:
        return self.bases.shape[0]

    def to_csv(self) -> str:
        lines = ["n,M", f"{self.n},{self.M}"]
        for b, o in zip(self.bases, self.outcomes):
            lines.append("".join(map(str, b)) + ";" + "".join(map(str, o)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ShadowDataset":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if lines[0].strip() != "n,M":
            raise ValueError("missing 'n,M' header")
        n, M = (int(v) for v in lines[1].split(","))
        rows = lines[2:]
        if len(rows) != M:
            raise ValueError(f"expected {M} rows, found {len(rows)}")
        bases = np.array([[int(c) for c in r.split(";")[0]] for r in rows]).reshape(M, n)
        outs = np.array([[int(c) for c in r.split(";")[1]] for r in rows]).reshape(M, n)
        return cls(n, bases, outs)


def random_bases(M: int, n: int, rng=None) -> np.ndarray:
    return as_stream(rng).gen.integers(1, 4, size=(M, n)).astype(np.int8)


def _one_snapshot(amps: np.ndarray, n: int, basis, u: np.ndarray) -> np.ndarray:
    """Measure qubits in order, collapsing after each so the vector halves every step."""
    v = amps
    out = np.zeros(n, dtype=np.uint8)
    for q in range(n):
        t = ROTATIONS[int(basis[q])] @ v.reshape(2, -1)
        w0 = np.vdot(t[0], t[0]).real
        w1 = np.vdot(t[1], t[1]).real
        bit = int(u[q] * (w0 + w1) >= w0)
        out[q] = bit
        v = t[bit]
    return out


def shadow_snapshots(psi: StateVector, bases, rng=None, workers: int = 1) -> ShadowDataset:
    """One computational-basis sample per row of ``bases`` after basis rotation.

    Row ``m`` draws from child stream ``m`` of ``rng_split(rng, M)``, so the
    dataset does not depend on ``workers``.
    """
    if psi.d != 2:
        raise ValueError("shadows need qubits")
    bases = np.asarray(bases, dtype=np.int8).reshape(-1, psi.n)
    if bases.size and not np.isin(bases, (1, 2, 3)).all():
        raise ValueError("basis codes must be 1, 2 or 3")
    M = bases.shape[0]
    if M == 0:
        return ShadowDataset(psi.n, bases, np.zeros_like(bases, dtype=np.uint8))
    streams = rng_split(as_stream(rng), M)
    amps = psi.amplitudes.astype(complex)

    def row(m):
        return _one_snapshot(amps, psi.n, bases[m], streams[m].random(psi.n))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outs = list(ex.map(row, range(M)))
    else:
        outs = [row(m) for m in range(M)]
    return ShadowDataset(psi.n, bases, np.array(outs))


def _word(obs, n: int) -> np.ndarray:
    if isinstance(obs, dict):
        codes = np.zeros(n, dtype=np.int8)
        for k, v in obs.items():
            codes[k] = {"X": 1, "Y": 2, "Z": 3}.get(v, v)
        return codes
    codes = np.asarray(obs, dtype=np.int8)
    if codes.shape != (n,):
        raise ValueError(f"observable must have {n} codes")
    return codes


def snapshot_estimates(ds: ShadowDataset, obs) -> np.ndarray:
    """Per-snapshot unbiased estimates of a Pauli word."""
    codes = _word(obs, ds.n)
    supp = np.nonzero(codes)[0]
    if len(supp) == 0:
        return np.ones(ds.M)
    hit = np.all(ds.bases[:, supp] == codes[supp], axis=1)
    signs = np.prod(1 - 2 * ds.outcomes[:, supp].astype(np.int64), axis=1)
    return np.where(hit, 3.0 ** len(supp) * signs, 0.0)


def estimate_pauli(ds: ShadowDataset, obs, n_batches: int = 1) -> float:
    """Median of ``n_batches`` batch means of the per-snapshot estimates."""
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    if not np.any(_word(obs, ds.n)):
        return 1.0
    est = snapshot_estimates(ds, obs)
    means = [b.mean() for b in np.array_split(est, n_batches) if len(b)]
    return float(np.median(means))


def exact_shadow_mean(psi: StateVector, obs) -> float:
    """Estimator averaged over all 3**n bases and exact outcome probabilities."""
    n = psi.n
    codes = _word(obs, n)
    total = 0.0
    for basis in itertools.product((1, 2, 3), repeat=n):
        t = psi.amplitudes.reshape((2,) * n)
        for q, b in enumerate(basis):
            t = np.moveaxis(np.tensordot(ROTATIONS[b], t, axes=(1, q)), 0, q)
        probs = (np.abs(t) ** 2).reshape(-1)
        bits = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)
        ds = ShadowDataset(n, np.tile(basis, (2**n, 1)), bits)
        total += float(probs @ snapshot_estimates(ds, codes))
    return total / 3**n
