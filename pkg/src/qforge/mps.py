"""Matrix-product-state circuit simulation with SVD truncation.

Site tensors have shape ``(left bond, d, right bond)``. Two-site gates are
applied after moving the orthogonality center onto the pair, so each SVD split
is the optimal truncation of the full state; the state is renormalized after
every split and the discarded weight is accumulated.
"""

from __future__ import annotations

import numpy as np

from .circuit import MAX_AMPLITUDES, Circuit, GateInstruction, StateVector, gate_matrix, make_instruction
from .hamiltonian import PAULI_MATRICES
from .numerics import svd_truncated

_SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]


class MPSState:
    def __init__(self, n: int, d: int = 2, max_singular_values: int | None = None,
                 max_truncation_err: float | None = None):
        if n < 1:
            raise ValueError("need at least one site")
        self.n, self.d = n, d
        self.max_singular_values = max_singular_values
        self.max_truncation_err = max_truncation_err
        t = np.zeros((1, d, 1), dtype=complex)
        t[0, 0, 0] = 1
        self.tensors = [t.copy() for _ in range(n)]
        self.discarded_weight = 0.0
        self.center = 0

    @classmethod
    def product(cls, digits, d: int = 2, **policy) -> "MPSState":
        s = cls(len(digits), d, **policy)
        for k, c in enumerate(digits):
            t = np.zeros((1, d, 1), dtype=complex)
            t[0, int(c), 0] = 1
            s.tensors[k] = t
        return s

    def copy(self) -> "MPSState":
        s = MPSState(self.n, self.d, self.max_singular_values, self.max_truncation_err)
        s.tensors = [t.copy() for t in self.tensors]
        s.discarded_weight, s.center = self.discarded_weight, self.center
        return s

    def bond_dimensions(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    # -- canonical-center moves -------------------------------------------

    def _move_center(self, target: int):
        while self.center < target:
            k = self.center
            a = self.tensors[k]
            dl, d, dr = a.shape
            q, r = np.linalg.qr(a.reshape(dl * d, dr))
            self.tensors[k] = q.reshape(dl, d, -1)
            self.tensors[k + 1] = np.tensordot(r, self.tensors[k + 1], axes=(1, 0))
            self.center += 1
        while self.center > target:
            k = self.center
            a = self.tensors[k]
            dl, d, dr = a.shape
            q, r = np.linalg.qr(a.reshape(dl, d * dr).T)
            self.tensors[k] = q.T.reshape(-1, d, dr)
            self.tensors[k - 1] = np.tensordot(self.tensors[k - 1], r.T, axes=(2, 0))
            self.center -= 1

    # -- gates ------------------------------------------------------------

    def _apply_one(self, m: np.ndarray, w: int):
        self.tensors[w] = np.einsum("ab,lbr->lar", m, self.tensors[w])

    def _apply_adjacent(self, m: np.ndarray, w: int):
        """Two-site gate on (w, w+1) with ``m`` acting on the (w, w+1) ordering."""
        self._move_center(w)
        a, b = self.tensors[w], self.tensors[w + 1]
        d = self.d
        theta = np.tensordot(a, b, axes=(2, 0))  # l, s1, s2, r
        g = m.reshape(d, d, d, d)
        theta = np.einsum("abcd,lcdr->labr", g, theta)
        dl, dr = theta.shape[0], theta.shape[3]
        u, s, v, disc = svd_truncated(theta.reshape(dl * d, d * dr), self.max_singular_values,
                                      self.max_truncation_err)
        self.discarded_weight += disc
        s = s / np.linalg.norm(s)
        self.tensors[w] = u.reshape(dl, d, -1)
        self.tensors[w + 1] = (s[:, None] * v).reshape(-1, d, dr)
        self.center = w + 1

    def apply(self, g: GateInstruction):
        for w in g.wires:
            if not 0 <= w < self.n:
                raise ValueError(f"wire {w} out of range")
        m = gate_matrix(g, self.d)
        if len(g.wires) == 1:
            self._apply_one(m, g.wires[0])
            return
        if len(g.wires) != 2:
            raise ValueError("MPS engine supports one- and two-site gates")
        i, j = g.wires
        if i > j:
            # reorder the gate so it acts on (low, high)
            d = self.d
            m = m.reshape(d, d, d, d).transpose(1, 0, 3, 2).reshape(d * d, d * d)
            i, j = j, i
        swap = _SWAP if self.d == 2 else _swap_matrix(self.d)
        # bring j next to i by swaps, apply, then swap back
        for k in range(j - 1, i, -1):
            self._apply_adjacent(swap, k)
        self._apply_adjacent(m, i)
        for k in range(i + 1, j):
            self._apply_adjacent(swap, k)

    # -- readout ----------------------------------------------------------

    def to_statevector(self) -> StateVector:
        if self.d**self.n > MAX_AMPLITUDES:
            raise MemoryError("state too large for dense conversion")
        psi = self.tensors[0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(psi.ndim - 1, 0))
        return StateVector(psi.reshape(-1), self.n, self.d)

    def norm(self) -> float:
        return float(np.sqrt(abs(expectation_local(self, []))))


def _swap_matrix(d: int) -> np.ndarray:
    m = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            m[b * d + a, a * d + b] = 1
    return m


def apply_gate_mps(s: MPSState, gate, wires=None, params=()) -> None:
    """Apply a gate given as a GateInstruction or as ``(name, wires, params)``."""
    if not isinstance(gate, GateInstruction):
        gate = make_instruction(gate, wires, params, n=s.n)
    s.apply(gate)


def run_mps(c: Circuit, max_singular_values: int | None = None,
            max_truncation_err: float | None = None) -> MPSState:
    s = MPSState(c.n, c.d, max_singular_values, max_truncation_err)
    for g in c.ops:
        s.apply(g)
    return s


def expectation_local(s: MPSState, ops) -> complex:
    """``<psi| prod_k O_k |psi>`` for local operators ``[(site, matrix), ...]``."""
    local = {}
    for site, m in ops:
        if site in local:
            raise ValueError(f"site {site} listed twice")
        if not 0 <= site < s.n:
            raise ValueError(f"site {site} out of range")
        local[site] = np.asarray(m, dtype=complex)
    env = np.ones((1, 1), dtype=complex)
    for k, a in enumerate(s.tensors):
        b = a if k not in local else np.einsum("ab,lbr->lar", local[k], a)
        # env[l', l] with l' bra index, l ket index
        env = np.einsum("xy,xsu,ysv->uv", env, a.conj(), b)
    return complex(env[0, 0])


def pauli_expectation(s: MPSState, obs) -> complex:
    """Expectation of a PauliSum, term by term."""
    total = 0j
    for w, codes in obs.terms:
        ops = [(k, PAULI_MATRICES[c]) for k, c in enumerate(codes) if c]
        total += w * expectation_local(s, ops)
    return complex(total)
