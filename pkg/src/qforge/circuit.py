"""Exact state-vector engine for qubits and qudits.

Gates act by reshaping the amplitude vector and contracting the gate matrix
against the wire axes. Rotation convention: ``rx(t) = exp(-i t X / 2)`` and
likewise for ``ry``, ``rz``, ``rzz``; the 15-parameter ``su4`` gate is
``exp(-i sum_k t_k P_k / 2)`` over the ordered non-identity two-qubit Pauli
words.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import PAULI_MATRICES, PauliSum, _site_masks, clock_matrix, pauli_phase, shift_matrix
from .numerics import as_stream, cdtype, expm_dense

MAX_AMPLITUDES = 2**24
UNITARY_TOL = 1e-10

_SQ2 = 1 / np.sqrt(2)
_FIXED = {
    "h": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "x": PAULI_MATRICES[1],
    "y": PAULI_MATRICES[2],
    "z": PAULI_MATRICES[3],
    "s": np.diag([1, 1j]),
    "cx": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "cz": np.diag([1, 1, 1, -1]).astype(complex),
}

# name -> (wire count, parameter count); None means "given by the matrix"
GATE_ARITY = {
    "h": (1, 0), "x": (1, 0), "y": (1, 0), "z": (1, 0), "s": (1, 0),
    "rx": (1, 1), "ry": (1, 1), "rz": (1, 1), "rzz": (2, 1),
    "cx": (2, 0), "cz": (2, 0), "su4": (2, 15), "csum": (2, 0),
    "subspace_ry": (1, 1), "subspace_rz": (1, 1), "unitary": (None, 0),
}
ALIASES = {"cnot": "cx"}
QUBIT_ONLY = {"h", "y", "s", "rx", "ry", "rz", "rzz", "cx", "cz", "su4"}
QASM_GATES = {"h", "x", "y", "z", "s", "rx", "ry", "rz", "cx", "cz", "rzz"}

SU4_BASIS = [
    np.kron(PAULI_MATRICES[a], PAULI_MATRICES[b])
    for a, b in itertools.product(range(4), repeat=2)
    if (a, b) != (0, 0)
]


@dataclass(frozen=True, eq=False)
class GateInstruction:
    name: str
    wires: tuple
    params: tuple = ()
    levels: tuple = ()
    matrix: np.ndarray | None = None

    def descriptor(self) -> dict:
        return {"name": self.name, "index": self.wires, "params": self.params}


def _rot(pauli: np.ndarray, theta: float) -> np.ndarray:
    return np.cos(theta / 2) * np.eye(len(pauli)) - 1j * np.sin(theta / 2) * pauli


def su4_matrix(params) -> np.ndarray:
    gen = sum(t * p for t, p in zip(params, SU4_BASIS))
    return expm_dense(-0.5j * gen)


def subspace_matrix(d: int, axis: str, theta: float, j: int, k: int) -> np.ndarray:
    """Two-level rotation on ``span{|j>, |k>}``, identity elsewhere."""
    if j == k or not (0 <= j < d and 0 <= k < d):
        raise ValueError(f"invalid subspace levels ({j}, {k}) for d={d}")
    block = _rot(PAULI_MATRICES[2] if axis == "y" else PAULI_MATRICES[3], theta)
    m = np.eye(d, dtype=complex)
    idx = [j, k]
    m[np.ix_(idx, idx)] = block
    return m


def csum_matrix(d: int) -> np.ndarray:
    m = np.zeros((d * d, d * d), dtype=complex)
    for x in range(d):
        for y in range(d):
            m[x * d + (x + y) % d, x * d + y] = 1
    return m


def gate_matrix(g: GateInstruction, d: int = 2) -> np.ndarray:
    name = g.name
    if name == "unitary":
        return np.asarray(g.matrix, dtype=complex)
    if d != 2 and name in QUBIT_ONLY:
        raise ValueError(f"gate {name!r} is qubit-only; circuit has d={d}")
    if name in ("x", "z") and d != 2:
        return shift_matrix(d) if name == "x" else clock_matrix(d)
    if name in _FIXED:
        return _FIXED[name]
    if name == "rx":
        return _rot(PAULI_MATRICES[1], g.params[0])
    if name == "ry":
        return _rot(PAULI_MATRICES[2], g.params[0])
    if name == "rz":
        return _rot(PAULI_MATRICES[3], g.params[0])
    if name == "rzz":
        return _rot(np.diag([1.0, -1.0, -1.0, 1.0]).astype(complex), g.params[0])
    if name == "su4":
        return su4_matrix(g.params)
    if name == "csum":
        return csum_matrix(d)
    if name in ("subspace_ry", "subspace_rz"):
        j, k = g.levels
        return subspace_matrix(d, name[-1], g.params[0], j, k)
    raise ValueError(f"unknown gate {name!r}")


def make_instruction(name: str, wires, params=(), levels=(), matrix=None, n: int | None = None) -> GateInstruction:
    name = ALIASES.get(name, name)
    if name not in GATE_ARITY:
        raise ValueError(f"unknown gate {name!r}")
    wires = tuple(int(w) for w in np.atleast_1d(wires))
    params = tuple(float(p) for p in np.atleast_1d(params)) if np.size(params) else ()
    nw, npar = GATE_ARITY[name]
    if name == "unitary":
        matrix = np.asarray(matrix, dtype=complex)
        dimk = matrix.shape[0]
        if matrix.shape != (dimk, dimk):
            raise ValueError("unitary matrix must be square")
        if np.max(np.abs(matrix.conj().T @ matrix - np.eye(dimk))) > UNITARY_TOL:
            raise ValueError("matrix is not unitary within tolerance")
    else:
        if len(wires) != nw:
            raise ValueError(f"{name} acts on {nw} wires, got {len(wires)}")
        if len(params) != npar:
            raise ValueError(f"{name} takes {npar} parameters, got {len(params)}")
    if not all(np.isfinite(params)):
        raise ValueError("gate parameters must be finite")
    if len(set(wires)) != len(wires):
        raise ValueError(f"wires must be distinct, got {wires}")
    if n is not None and any(not 0 <= w < n for w in wires):
        raise ValueError(f"wire out of range in {wires} for n={n}")
    if name.startswith("subspace") and len(levels) != 2:
        raise ValueError("subspace rotations need two levels (j, k)")
    return GateInstruction(name, wires, params, tuple(int(v) for v in levels), matrix)


class StateVector:
    """Dense amplitudes over ``d**n`` basis states, site 0 most significant."""

    def __init__(self, amplitudes, n: int, d: int = 2):
        amps = np.asarray(amplitudes, dtype=cdtype()).ravel()
        if len(amps) != d**n:
            raise ValueError(f"expected {d**n} amplitudes, got {len(amps)}")
        self.n, self.d, self.amplitudes = n, d, amps

    @classmethod
    def zero(cls, n: int, d: int = 2) -> "StateVector":
        if d**n > MAX_AMPLITUDES:
            raise MemoryError(f"{d}**{n} amplitudes exceeds guard {MAX_AMPLITUDES}")
        a = np.zeros(d**n, dtype=cdtype())
        a[0] = 1
        return cls(a, n, d)

    @classmethod
    def basis(cls, digits, d: int = 2) -> "StateVector":
        digits = [int(c) for c in digits]
        a = np.zeros(d ** len(digits), dtype=cdtype())
        a[_digits_to_index(digits, d)] = 1
        return cls(a, len(digits), d)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n, self.d)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self) -> str:
        return f"StateVector(n={self.n}, d={self.d})"


def _digits_to_index(digits, d: int) -> int:
    idx = 0
    for c in digits:
        if not 0 <= c < d:
            raise ValueError(f"digit {c} out of range for d={d}")
        idx = idx * d + c
    return idx


def apply_matrix(psi: np.ndarray, n: int, d: int, mat: np.ndarray, wires) -> np.ndarray:
    """Return ``mat`` applied on ``wires`` of the flat amplitude array ``psi``."""
    k = len(wires)
    if k == 1 or (k == 2 and wires[1] == wires[0] + 1):
        w = wires[0]
        t = psi.reshape(d**w, d**k, -1)
        return np.matmul(mat, t).reshape(-1)
    t = psi.reshape((d,) * n)
    m = mat.reshape((d,) * (2 * k))
    t = np.tensordot(m, t, axes=(list(range(k, 2 * k)), list(wires)))
    t = np.moveaxis(t, list(range(k)), list(wires))
    return np.ascontiguousarray(t).reshape(-1)


class Circuit:
    """Ordered gate list over ``n`` wires of local dimension ``d``."""

    def __init__(self, n: int, d: int = 2, initial_state: StateVector | None = None):
        if n < 1:
            raise ValueError("need at least one wire")
        if d < 2:
            raise ValueError("local dimension must be >= 2")
        self.n, self.d = n, d
        self.ops: list[GateInstruction] = []
        if initial_state is not None and (initial_state.n, initial_state.d) != (n, d):
            raise ValueError("initial state shape mismatch")
        self.initial_state = initial_state

    def append(self, name: str, wires, params=(), levels=(), matrix=None) -> "Circuit":
        g = make_instruction(name, wires, params, levels, matrix, n=self.n)
        if self.d != 2 and g.name in QUBIT_ONLY:
            raise ValueError(f"gate {g.name!r} is qubit-only; circuit has d={self.d}")
        if g.name == "unitary" and g.matrix.shape[0] != self.d ** len(g.wires):
            raise ValueError("unitary matrix size does not match wire count")
        self.ops.append(g)
        return self

    def h(self, w): return self.append("h", w)
    def x(self, w): return self.append("x", w)
    def y(self, w): return self.append("y", w)
    def z(self, w): return self.append("z", w)
    def s(self, w): return self.append("s", w)
    def rx(self, w, theta): return self.append("rx", w, theta)
    def ry(self, w, theta): return self.append("ry", w, theta)
    def rz(self, w, theta): return self.append("rz", w, theta)
    def rzz(self, a, b, theta): return self.append("rzz", (a, b), theta)
    def cx(self, a, b): return self.append("cx", (a, b))
    def cz(self, a, b): return self.append("cz", (a, b))
    def su4(self, a, b, params): return self.append("su4", (a, b), params)
    def csum(self, control, target): return self.append("csum", (control, target))

    def subspace_ry(self, w, theta, j, k):
        return self.append("subspace_ry", w, theta, levels=(j, k))

    def subspace_rz(self, w, theta, j, k):
        return self.append("subspace_rz", w, theta, levels=(j, k))

    def unitary(self, wires, matrix):
        return self.append("unitary", wires, matrix=matrix)

    def __len__(self) -> int:
        return len(self.ops)

    def run(self) -> StateVector:
        return run(self)

    def to_dict(self) -> dict:
        ops = []
        for g in self.ops:
            op = {"name": g.name, "wires": list(g.wires), "params": list(g.params)}
            if g.levels:
                op["levels"] = list(g.levels)
            if g.matrix is not None:
                op["matrix"] = [[[z.real, z.imag] for z in row] for row in g.matrix]
            ops.append(op)
        return {"n": self.n, "d": self.d, "ops": ops}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        c = cls(int(data["n"]), int(data.get("d", 2)))
        for op in data["ops"]:
            m = op.get("matrix")
            if m is not None:
                m = np.array([[complex(re, im) for re, im in row] for row in m])
            c.append(op["name"], op["wires"], op.get("params", ()), op.get("levels", ()), m)
        return c

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


def run(c: Circuit) -> StateVector:
    """Apply every instruction of ``c`` to its initial state."""
    if c.d**c.n > MAX_AMPLITUDES:
        raise MemoryError(f"{c.d}**{c.n} amplitudes exceeds guard {MAX_AMPLITUDES}")
    psi = (c.initial_state.amplitudes.copy() if c.initial_state is not None
           else StateVector.zero(c.n, c.d).amplitudes)
    for g in c.ops:
        psi = apply_matrix(psi, c.n, c.d, gate_matrix(g, c.d).astype(psi.dtype, copy=False), g.wires)
    return StateVector(psi, c.n, c.d)


def apply_gate(psi: StateVector, g: GateInstruction) -> StateVector:
    amps = apply_matrix(psi.amplitudes, psi.n, psi.d, gate_matrix(g, psi.d), g.wires)
    return StateVector(amps, psi.n, psi.d)


# ---------------------------------------------------------------------------
# observables and sampling


_ARANGE_CACHE: dict[int, np.ndarray] = {}


def _arange(dim: int) -> np.ndarray:
    a = _ARANGE_CACHE.get(dim)
    if a is None:
        a = _ARANGE_CACHE[dim] = np.arange(dim, dtype=np.int64)
    return a


def expectation_pauli(psi: StateVector, obs: PauliSum) -> complex:
    """``sum_t w_t <psi|P_t|psi>`` by direct index action of each Pauli word."""
    if psi.d != 2:
        raise ValueError("Pauli expectations need qubits")
    if obs.n != psi.n:
        raise ValueError(f"observable has {obs.n} sites, state has {psi.n}")
    amps = psi.amplitudes
    idx = _arange(len(amps))
    total = 0j
    for w, codes in obs.terms:
        flip, sign, ny = _site_masks(psi.n, codes)
        if flip == 0 and sign == 0:
            total += w * np.vdot(amps, amps)
            continue
        cols = idx ^ flip if flip else idx
        total += w * np.vdot(amps, pauli_phase(cols, sign, ny) * amps[cols])
    return complex(total)


def amplitude(psi: StateVector, bitstring) -> complex:
    digits = [int(c) for c in bitstring]
    if len(digits) != psi.n:
        raise ValueError(f"bitstring length {len(digits)} != {psi.n}")
    return complex(psi.amplitudes[_digits_to_index(digits, psi.d)])


def index_to_bitstring(i: int, n: int, d: int = 2) -> str:
    if d == 2:
        return format(i, f"0{n}b")
    return "".join(str(x) for x in np.unravel_index(i, (d,) * n))


def sample(psi: StateVector, shots: int, rng=None) -> dict:
    """Draw ``shots`` i.i.d. basis outcomes; returns ``{bitstring: count}``."""
    rng = as_stream(rng)
    p = psi.probabilities().astype(np.float64)
    p = p / p.sum()
    counts = rng.gen.multinomial(shots, p)
    nz = np.nonzero(counts)[0]
    return {index_to_bitstring(int(i), psi.n, psi.d): int(counts[i]) for i in nz}


def measure_collapse(psi: StateVector, wire: int, rng=None, forced: int | None = None):
    """Projective measurement of one wire.

    Returns ``(outcome, probability, post_state)``. With ``forced`` set the
    named outcome is selected instead of sampled; forcing an outcome of zero
    probability raises ``ValueError``.
    """
    if not 0 <= wire < psi.n:
        raise ValueError(f"wire {wire} out of range")
    d = psi.d
    t = psi.amplitudes.reshape(d**wire, d, -1)
    probs = np.einsum("iaj,iaj->a", t.conj(), t).real
    probs = probs / probs.sum()
    if forced is None:
        u = as_stream(rng).random()
        outcome = int(min(np.searchsorted(np.cumsum(probs), u, side="right"), d - 1))
    else:
        outcome = int(forced)
        if not 0 <= outcome < d:
            raise ValueError(f"forced outcome {outcome} out of range")
        if probs[outcome] < 1e-14:
            raise ValueError(f"forced outcome {outcome} has zero probability")
    p = float(probs[outcome])
    out = np.zeros_like(t)
    out[:, outcome, :] = t[:, outcome, :] / np.sqrt(p)
    return outcome, p, StateVector(out.reshape(-1), psi.n, d)


def reduced_density_matrix(psi: StateVector, keep) -> np.ndarray:
    keep = sorted(int(k) for k in keep)
    rest = [w for w in range(psi.n) if w not in keep]
    t = psi.amplitudes.reshape((psi.d,) * psi.n).transpose(keep + rest)
    m = t.reshape(psi.d ** len(keep), -1)
    return m @ m.conj().T


def subsystem_entropy(psi: StateVector, keep) -> float:
    """Von Neumann entropy (bits) of the reduced state on ``keep``."""
    keep = sorted(set(int(k) for k in keep))
    if not keep or len(keep) >= psi.n or any(not 0 <= k < psi.n for k in keep):
        raise ValueError("subsystem must be a proper nonempty subset of wires")
    rest = [w for w in range(psi.n) if w not in keep]
    t = psi.amplitudes.reshape((psi.d,) * psi.n).transpose(keep + rest)
    s = np.linalg.svd(t.reshape(psi.d ** len(keep), -1), compute_uv=False)
    lam = np.clip(s**2, 0.0, 1.0)
    lam = lam[lam > 1e-16]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def haar_su4(rng=None) -> np.ndarray:
    """Haar-random element of SU(4) via phase-fixed QR of a Ginibre matrix."""
    g = as_stream(rng).gen
    z = (g.standard_normal((4, 4)) + 1j * g.standard_normal((4, 4))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    q = q * (diag / np.abs(diag))
    det = np.linalg.det(q)
    return q / det ** 0.25


# ---------------------------------------------------------------------------
# measurement-induced transition on a Haar brick wall


@dataclass
class BrickwallSchedule:
    """Gates and measurement masks of a brick-wall circuit, one entry per time step."""

    n: int
    gates: list = field(default_factory=list)  # per step: list of ((i, i+1), U)
    masks: list = field(default_factory=list)  # per step: bool array of measured wires


def brickwall_schedule(n: int, depth: int, p: float, rng=None) -> BrickwallSchedule:
    """Haar SU(4) gates on even then odd bonds, then each wire measured with probability ``p``."""
    rng = as_stream(rng)
    sched = BrickwallSchedule(n)
    for _ in range(depth):
        layer = []
        for start in (0, 1):
            for i in range(start, n - 1, 2):
                layer.append(((i, i + 1), haar_su4(rng)))
        sched.gates.append(layer)
        sched.masks.append(rng.random(n) < p)
    return sched


def run_brickwall(sched: BrickwallSchedule, rng=None, forced=None):
    """Evolve ``|0...0>`` through a schedule.

    Returns ``(state, outcomes, probability)`` where ``probability`` is the
    Born probability of the realized measurement record. ``forced`` may supply
    the full outcome record in measurement order.
    """
    rng = as_stream(rng) if forced is None else None
    n = sched.n
    psi = StateVector.zero(n).amplitudes
    outcomes, prob = [], 1.0
    forced_iter = iter(forced) if forced is not None else None
    for layer, mask in zip(sched.gates, sched.masks):
        for wires, u in layer:
            psi = apply_matrix(psi, n, 2, u, wires)
        state = StateVector(psi, n)
        for w in np.nonzero(mask)[0]:
            f = next(forced_iter) if forced_iter is not None else None
            out, pr, state = measure_collapse(state, int(w), rng, forced=f)
            outcomes.append(out)
            prob *= pr
        psi = state.amplitudes
    return StateVector(psi, n), outcomes, prob


# ---------------------------------------------------------------------------
# export


def to_openqasm(c: Circuit) -> str:
    """OpenQASM 2.0 text; ``rzz`` is lowered to ``cx; rz; cx``."""
    if c.d != 2:
        raise ValueError("OpenQASM export needs qubits")
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{c.n}];"]
    for k, g in enumerate(c.ops):
        if g.name not in QASM_GATES:
            raise ValueError(f"instruction {k} ({g.name}) has no OpenQASM 2.0 form")
        q = [f"q[{w}]" for w in g.wires]
        if g.name == "rzz":
            a, b = q
            lines += [f"cx {a},{b};", f"rz({g.params[0]!r}) {b};", f"cx {a},{b};"]
        elif g.params:
            lines.append(f"{g.name}({g.params[0]!r}) {','.join(q)};")
        else:
            lines.append(f"{g.name} {','.join(q)};")
    return "\n".join(lines) + "\n"
