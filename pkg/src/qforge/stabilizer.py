"""Clifford simulation on a stabilizer tableau.

The tableau keeps ``n`` destabilizer rows followed by ``n`` stabilizer rows,
each a Pauli word stored as X bits, Z bits and a sign bit (``Y`` is ``x=z=1``).
Measurement follows the destabilizer bookkeeping of Aaronson and Gottesman.
Entanglement entropy is the GF(2) rank of the stabilizer rows clipped to a
subsystem minus the subsystem size; ranks are computed on rows bit-packed into
64-bit words.
"""

from __future__ import annotations

import itertools

import numpy as np

from .circuit import Circuit, apply_matrix, gate_matrix
from .numerics import as_stream

CLIFFORD_GATES = ("h", "s", "cx", "cz", "x", "y", "z")


class StabilizerTableau:
    """Tableau of the state ``|0...0>`` acted on by Clifford gates."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need at least one qubit")
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        idx = np.arange(n)
        self.x[idx, idx] = 1
        self.z[n + idx, idx] = 1

    def copy(self) -> "StabilizerTableau":
        t = StabilizerTableau.__new__(StabilizerTableau)
        t.n, t.x, t.z, t.r = self.n, self.x.copy(), self.z.copy(), self.r.copy()
        return t

    @property
    def stabilizers(self):
        """``(x_bits, z_bits, signs)`` of the n stabilizer generators."""
        n = self.n
        return self.x[n:], self.z[n:], self.r[n:]

    def stabilizer_strings(self) -> list[str]:
        out = []
        xs, zs, rs = self.stabilizers
        for xr, zr, s in zip(xs, zs, rs):
            word = "".join("IXZY"[a + 2 * b] for a, b in zip(xr, zr))
            out.append(("-" if s else "+") + word)
        return out

    # -- gates ------------------------------------------------------------

    def _check(self, *wires):
        for w in wires:
            if not 0 <= w < self.n:
                raise ValueError(f"wire {w} out of range for n={self.n}")
        if len(set(wires)) != len(wires):
            raise ValueError("wires must be distinct")

    def h(self, a: int):
        self._check(a)
        xa, za = self.x[:, a].copy(), self.z[:, a].copy()
        self.r ^= xa & za
        self.x[:, a], self.z[:, a] = za, xa

    def s(self, a: int):
        self._check(a)
        self.r ^= self.x[:, a] & self.z[:, a]
        self.z[:, a] ^= self.x[:, a]

    def cx(self, a: int, b: int):
        self._check(a, b)
        xa, xb, za, zb = self.x[:, a], self.x[:, b], self.z[:, a], self.z[:, b]
        self.r ^= xa & zb & (xb ^ za ^ 1)
        self.x[:, b] ^= xa
        self.z[:, a] ^= zb

    def cz(self, a: int, b: int):
        self.h(b)
        self.cx(a, b)
        self.h(b)

    def x_gate(self, a: int):
        self._check(a)
        self.r ^= self.z[:, a]

    def z_gate(self, a: int):
        self._check(a)
        self.r ^= self.x[:, a]

    def y_gate(self, a: int):
        self._check(a)
        self.r ^= self.x[:, a] ^ self.z[:, a]

    # -- measurement ------------------------------------------------------

    def _rowsum_many(self, targets: np.ndarray, src: int):
        """Replace each target row ``h`` by the product ``P_src * P_h``."""
        if len(targets) == 0:
            return
        x1, z1 = self.x[src].astype(np.int8), self.z[src].astype(np.int8)
        x2, z2 = self.x[targets].astype(np.int8), self.z[targets].astype(np.int8)
        g = _phase_exponent(x1, z1, x2, z2).sum(axis=1)
        total = 2 * self.r[targets].astype(np.int64) + 2 * int(self.r[src]) + g
        self.r[targets] = ((total % 4) // 2).astype(np.uint8)
        self.x[targets] ^= self.x[src]
        self.z[targets] ^= self.z[src]

    def is_deterministic(self, a: int) -> bool:
        """True when ``+-Z_a`` lies in the stabilizer group."""
        return not np.any(self.x[self.n:, a])

    def measure(self, a: int, rng=None, forced: int | None = None) -> tuple[int, bool]:
        """Measure ``Z_a``; returns ``(outcome, was_random)``.

        ``forced`` picks the outcome of a random measurement; forcing a
        deterministic measurement to the other value raises ``ValueError``.
        """
        self._check(a)
        n = self.n
        hits = np.nonzero(self.x[n:, a])[0]
        if len(hits):
            p = n + int(hits[0])
            others = np.nonzero(self.x[:, a])[0]
            others = others[others != p]
            self._rowsum_many(others, p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, a] = 1
            if forced is None:
                outcome = int(as_stream(rng).random() < 0.5)
            else:
                outcome = int(forced)
                if outcome not in (0, 1):
                    raise ValueError("forced outcome must be 0 or 1")
            self.r[p] = outcome
            return outcome, True
        # deterministic: accumulate stabilizers paired with destabilizers hitting X_a
        sx = np.zeros(n, dtype=np.int8)
        sz = np.zeros(n, dtype=np.int8)
        sr = 0
        for i in np.nonzero(self.x[:n, a])[0]:
            row = n + i
            x1, z1 = self.x[row].astype(np.int8), self.z[row].astype(np.int8)
            g = int(_phase_exponent(x1, z1, sx, sz).sum())
            sr = ((2 * sr + 2 * int(self.r[row]) + g) % 4) // 2
            sx ^= x1
            sz ^= z1
        if forced is not None and int(forced) != sr:
            raise ValueError(f"forced outcome {forced} has zero probability")
        return int(sr), False

    # -- entropy ----------------------------------------------------------

    def entanglement_entropy(self, subsystem) -> int:
        """Entropy in bits of the reduced state on ``subsystem``."""
        sub = sorted(set(int(s) for s in subsystem))
        if not sub or len(sub) >= self.n or any(not 0 <= s < self.n for s in sub):
            raise ValueError("subsystem must be a proper nonempty subset of qubits")
        xs, zs, _ = self.stabilizers
        clipped = np.concatenate([xs[:, sub], zs[:, sub]], axis=1)
        return gf2_rank(clipped) - len(sub)


def _phase_exponent(x1, z1, x2, z2):
    """Power of ``i`` picked up when multiplying single-qubit Paulis (x1,z1)(x2,z2)."""
    return np.where(
        (x1 == 1) & (z1 == 1),
        z2 - x2,
        np.where(x1 == 1, z2 * (2 * x2 - 1), np.where(z1 == 1, x2 * (1 - 2 * z2), 0)),
    )


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a 0/1 matrix row-wise into uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    rows, cols = bits.shape
    words = max(1, -(-cols // 64))
    padded = np.zeros((rows, words * 64), dtype=np.uint8)
    padded[:, :cols] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view(np.uint64).reshape(rows, words)


def gf2_rank(bits: np.ndarray) -> int:
    """Rank over GF(2) by elimination on bit-packed rows."""
    bits = np.asarray(bits)
    if bits.size == 0:
        return 0
    m = pack_rows(bits)
    ncols = bits.shape[1]
    rank = 0
    nrows = m.shape[0]
    for col in range(ncols):
        if rank == nrows:
            break
        w, b = divmod(col, 64)
        mask = np.uint64(1) << np.uint64(b)
        has = (m[rank:, w] & mask) != 0
        if not has.any():
            continue
        piv = rank + int(np.argmax(has))
        if piv != rank:
            m[[rank, piv]] = m[[piv, rank]]
        below = rank + 1 + np.nonzero((m[rank + 1:, w] & mask) != 0)[0]
        m[below] ^= m[rank]
        rank += 1
    return rank


# ---------------------------------------------------------------------------
# two-qubit Clifford group


def _local_table(words) -> tuple[np.ndarray, np.ndarray]:
    """Action of a two-qubit gate word on the 16 local Pauli patterns.

    Pattern index is ``8 x_i + 4 x_j + 2 z_i + z_j``; returns the image
    pattern and the sign flip for every input pattern.
    """
    t = StabilizerTableau.__new__(StabilizerTableau)
    t.n = 2
    pats = np.array(list(itertools.product((0, 1), repeat=4)), dtype=np.uint8)
    t.x = pats[:, :2].copy()
    t.z = pats[:, 2:].copy()
    t.r = np.zeros(16, dtype=np.uint8)
    for name, *w in words:
        if name == "h":
            t.h(*w)
        elif name == "s":
            t.s(*w)
        elif name == "cx":
            t.cx(*w)
        elif name == "x":
            t.x_gate(*w)
        elif name == "z":
            t.z_gate(*w)
    image = 8 * t.x[:, 0] + 4 * t.x[:, 1] + 2 * t.z[:, 0] + t.z[:, 1]
    return image.astype(np.intp), t.r.copy()


def _clifford2_words():
    """Gate words for all 11520 two-qubit Cliffords (mod global phase).

    The 720 symplectic classes are found by breadth-first search over words in
    ``h, s, cx``; each is followed by one of the 16 Pauli sign patterns.
    """
    global _WORDS
    if _WORDS is None:
        gens = [("h", 0), ("h", 1), ("s", 0), ("s", 1), ("cx", 0, 1)]
        seen = {_local_table([])[0].tobytes(): []}
        frontier = [[]]
        while frontier:
            nxt = []
            for word in frontier:
                for g in gens:
                    w2 = word + [g]
                    key = _local_table(w2)[0].tobytes()
                    if key not in seen:
                        seen[key] = w2
                        nxt.append(w2)
            frontier = nxt
        paulis = [[], ["x"], ["z"], ["x", "z"]]
        _WORDS = [
            word + [(name, 0) for name in p0] + [(name, 1) for name in p1]
            for word in seen.values()
            for p0 in paulis
            for p1 in paulis
        ]
    return _WORDS


_WORDS = None
_CLIFFORD2 = None


def clifford2_tables():
    """Lookup tables ``(images, signs)`` of shape (11520, 16) for every two-qubit Clifford."""
    global _CLIFFORD2
    if _CLIFFORD2 is None:
        tabs = [_local_table(w) for w in _clifford2_words()]
        _CLIFFORD2 = (np.array([a for a, _ in tabs]), np.array([b for _, b in tabs]))
    return _CLIFFORD2


def clifford2_matrix(index: int) -> np.ndarray:
    """Dense 4x4 unitary (up to phase) of the two-qubit Clifford ``index``."""
    c = Circuit(2)
    for name, *w in _clifford2_words()[index]:
        c.append(name, w)
    u = np.eye(4, dtype=complex)
    for g in c.ops:
        # columns are basis states; act on each
        u = np.stack([apply_matrix(col, 2, 2, gate_matrix(g), g.wires) for col in u.T], axis=1)
    return u


def apply_clifford2(t: StabilizerTableau, index: int, i: int, j: int) -> None:
    """Apply the two-qubit Clifford number ``index`` (of 11520) on wires (i, j)."""
    t._check(i, j)
    images, signs = clifford2_tables()
    pat = (8 * t.x[:, i] + 4 * t.x[:, j] + 2 * t.z[:, i] + t.z[:, j]).astype(np.intp)
    new = images[index][pat]
    t.r ^= signs[index][pat]
    t.x[:, i] = (new >> 3) & 1
    t.x[:, j] = (new >> 2) & 1
    t.z[:, i] = (new >> 1) & 1
    t.z[:, j] = new & 1


def apply_clifford2_layer(t: StabilizerTableau, indices, bonds) -> None:
    """Apply independent two-qubit Cliffords on disjoint bonds at once."""
    if len(bonds) == 0:
        return
    images, signs = clifford2_tables()
    bi = np.array([b[0] for b in bonds])
    bj = np.array([b[1] for b in bonds])
    idx = np.asarray(indices, dtype=np.intp)
    pat = (8 * t.x[:, bi] + 4 * t.x[:, bj] + 2 * t.z[:, bi] + t.z[:, bj]).astype(np.intp)
    new = images[idx[None, :], pat]
    flip = signs[idx[None, :], pat]
    t.r ^= np.bitwise_xor.reduce(flip, axis=1)
    t.x[:, bi] = (new >> 3) & 1
    t.x[:, bj] = (new >> 2) & 1
    t.z[:, bi] = (new >> 1) & 1
    t.z[:, bj] = new & 1


def random_two_qubit_clifford(t: StabilizerTableau, i: int, j: int, rng=None) -> int:
    """Apply a uniformly random two-qubit Clifford on (i, j); returns its index."""
    if i == j:
        raise ValueError("need two distinct wires")
    k = int(as_stream(rng).gen.integers(len(_clifford2_words())))
    apply_clifford2(t, k, i, j)
    return k


def apply_clifford(t: StabilizerTableau, gate: str, wires) -> None:
    wires = tuple(int(w) for w in np.atleast_1d(wires))
    gate = {"cnot": "cx"}.get(gate, gate)
    if gate not in CLIFFORD_GATES:
        raise ValueError(f"{gate!r} is not a supported Clifford gate")
    fn = {"h": t.h, "s": t.s, "cx": t.cx, "cz": t.cz, "x": t.x_gate, "y": t.y_gate, "z": t.z_gate}[gate]
    fn(*wires)


# ---------------------------------------------------------------------------
# measurement-induced transition


def clifford_mipt_trajectory(L: int, depth: int, p: float, rng=None) -> float:
    """Half-chain entropy (bits) after a random Clifford brick wall with measurements.

    Each time step applies random two-qubit Cliffords on the even bonds, then
    on the odd bonds (periodic ring, so bond ``(L-1, 0)`` is included), each
    brick followed by single-qubit Z measurements with probability ``p``.
    """
    if L < 4 or L % 2:
        raise ValueError("L must be even and >= 4")
    rng = as_stream(rng)
    g = rng.gen
    t = StabilizerTableau(L)
    even = [(i, i + 1) for i in range(0, L, 2)]
    odd = [(i, (i + 1) % L) for i in range(1, L, 2)]
    ncliff = len(clifford2_tables()[0])
    for _ in range(depth):
        for bonds in (even, odd):
            apply_clifford2_layer(t, g.integers(ncliff, size=len(bonds)), bonds)
            for w in np.nonzero(g.random(L) < p)[0]:
                t.measure(int(w), rng)
    return float(t.entanglement_entropy(range(L // 2)))
