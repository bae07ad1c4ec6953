"""Kraus channels, rule-based noise attachment, Monte-Carlo trajectories,
density-matrix simulation and readout error mitigation.

Depolarizing convention: ``depolarizing(p, k)`` keeps the identity with weight
``1 - p`` and spreads ``p`` uniformly over the ``4**k - 1`` non-identity Pauli
words. Noise always acts after the gate it is attached to.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .circuit import ALIASES, GATE_ARITY, Circuit, GateInstruction, StateVector, apply_matrix, gate_matrix
from .hamiltonian import PAULI_MATRICES, PauliSum, pauli_sum_to_coo
from .numerics import as_stream, rng_split

COMPLETENESS_TOL = 1e-10
MAX_DM_QUBITS = 10


@dataclass(frozen=True, eq=False)
class KrausChannel:
    name: str
    k: int
    operators: tuple

    def __post_init__(self):
        dim = 2**self.k
        ops = tuple(np.asarray(m, dtype=complex) for m in self.operators)
        for m in ops:
            if m.shape != (dim, dim):
                raise ValueError(f"Kraus operators must be {dim}x{dim}")
        total = sum(m.conj().T @ m for m in ops)
        if np.max(np.abs(total - np.eye(dim))) > COMPLETENESS_TOL:
            raise ValueError(f"channel {self.name!r} violates Kraus completeness")
        object.__setattr__(self, "operators", ops)


def _check_prob(name: str, v: float):
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {v}")


def depolarizing(p: float, k: int = 1) -> KrausChannel:
    _check_prob("p", p)
    if k < 1:
        raise ValueError("arity must be >= 1")
    if p == 0:
        return KrausChannel("depolarizing", k, (np.eye(2**k),))
    ops = []
    nwords = 4**k - 1
    for word in itertools.product(range(4), repeat=k):
        m = np.ones((1, 1), dtype=complex)
        for c in word:
            m = np.kron(m, PAULI_MATRICES[c])
        w = 1 - p if not any(word) else p / nwords
        ops.append(np.sqrt(w) * m)
    return KrausChannel("depolarizing", k, tuple(ops))


def amplitude_damping(gamma: float) -> KrausChannel:
    _check_prob("gamma", gamma)
    k0 = np.diag([1.0, np.sqrt(1 - gamma)])
    k1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]])
    return KrausChannel("amplitude_damping", 1, (k0, k1))


def phase_damping(lam: float) -> KrausChannel:
    _check_prob("lambda", lam)
    return KrausChannel("phase_damping", 1, (np.diag([1.0, np.sqrt(1 - lam)]), np.diag([0.0, np.sqrt(lam)])))


def reset(p: float) -> KrausChannel:
    """With probability ``p`` the qubit is reset to ``|0>``."""
    _check_prob("p", p)
    ops = (np.sqrt(1 - p) * np.eye(2), np.sqrt(p) * np.array([[1.0, 0], [0, 0]]),
           np.sqrt(p) * np.array([[0, 1.0], [0, 0]]))
    return KrausChannel("reset", 1, ops)


def compose(first: KrausChannel, second: KrausChannel, name: str | None = None) -> KrausChannel:
    """Channel applying ``first`` then ``second``."""
    if first.k != second.k:
        raise ValueError("arity mismatch")
    ops = tuple(b @ a for a in first.operators for b in second.operators)
    return KrausChannel(name or f"{first.name}+{second.name}", first.k, ops)


def thermal_relaxation(t1: float, t2: float, duration: float) -> KrausChannel:
    """Amplitude damping followed by pure dephasing for a gate of length ``duration``."""
    if t1 <= 0 or t2 <= 0 or duration < 0:
        raise ValueError("t1, t2 must be positive and duration non-negative")
    if t2 > 2 * t1:
        raise ValueError("need t2 <= 2 t1")
    gamma = 1 - np.exp(-duration / t1)
    inv_tphi = 1 / t2 - 1 / (2 * t1)
    lam = 1 - np.exp(-2 * duration * inv_tphi)
    return compose(amplitude_damping(gamma), phase_damping(lam), "thermal_relaxation")


_KINDS = {
    "depolarizing": depolarizing,
    "amplitude_damping": amplitude_damping,
    "phase_damping": phase_damping,
    "reset": reset,
}


def make_channel(kind: str, *params) -> KrausChannel:
    if kind not in _KINDS:
        raise ValueError(f"unknown channel kind {kind!r}")
    return _KINDS[kind](*params)


# ---------------------------------------------------------------------------
# rules


@dataclass
class NoiseRule:
    channel: KrausChannel
    gate: str | None = None
    qubits: list | None = None
    predicate: Callable | None = None

    def matches(self, g: GateInstruction) -> bool:
        if self.gate is not None and g.name != self.gate:
            return False
        if self.qubits is not None and tuple(g.wires) not in self.qubits:
            return False
        if self.predicate is not None and not self.predicate(g.descriptor()):
            return False
        return True


@dataclass
class NoiseConf:
    """Ordered noise rules plus optional per-qubit readout ``(p(0|0), p(1|1))``.

    Every matching rule applies, in insertion order, after the gate.
    """

    rules: list = field(default_factory=list)
    readout: dict = field(default_factory=dict)

    def add_noise(self, gate: str, channel: KrausChannel, qubits=None) -> "NoiseConf":
        gate = ALIASES.get(gate, gate)
        if gate not in GATE_ARITY:
            raise ValueError(f"unknown gate {gate!r}")
        arity = GATE_ARITY[gate][0]
        if arity is not None and arity != channel.k:
            raise ValueError(f"channel arity {channel.k} does not match {gate} arity {arity}")
        if qubits is not None:
            qubits = [tuple(int(w) for w in np.atleast_1d(q)) for q in qubits]
            if any(len(q) != channel.k for q in qubits):
                raise ValueError("qubit tuples must match the channel arity")
        self.rules.append(NoiseRule(channel, gate=gate, qubits=qubits))
        return self

    def add_noise_by_condition(self, predicate: Callable, channel: KrausChannel) -> "NoiseConf":
        """``predicate`` receives ``{"name", "index", "params"}`` of each instruction."""
        self.rules.append(NoiseRule(channel, predicate=predicate))
        return self

    def set_readout(self, qubit: int, p00: float, p11: float) -> "NoiseConf":
        _check_prob("p00", p00)
        _check_prob("p11", p11)
        self.readout[int(qubit)] = (float(p00), float(p11))
        return self

    def to_dict(self) -> dict:
        rules = []
        for r in self.rules:
            if r.predicate is not None:
                raise ValueError("predicate rules cannot be serialized")
            rules.append({
                "gate": r.gate,
                "qubits": None if r.qubits is None else [list(q) for q in r.qubits],
                "channel": {"name": r.channel.name, "k": r.channel.k,
                            "operators": [[[[z.real, z.imag] for z in row] for row in m]
                                          for m in r.channel.operators]},
            })
        return {"rules": rules, "readout": {str(q): list(v) for q, v in self.readout.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseConf":
        conf = cls()
        for r in data.get("rules", []):
            ch = r["channel"]
            ops = [np.array([[complex(a, b) for a, b in row] for row in m]) for m in ch["operators"]]
            conf.add_noise(r["gate"], KrausChannel(ch["name"], ch["k"], tuple(ops)), r.get("qubits"))
        for q, (p00, p11) in data.get("readout", {}).items():
            conf.set_readout(int(q), p00, p11)
        return conf


def match(conf: NoiseConf, g: GateInstruction) -> list:
    """Channels to apply after ``g`` as ``[(channel, wires), ...]`` in rule order."""
    out = []
    for r in conf.rules:
        if r.matches(g):
            if r.channel.k != len(g.wires):
                raise ValueError(f"rule channel arity {r.channel.k} does not fit {g.name} on {g.wires}")
            out.append((r.channel, g.wires))
    return out


# ---------------------------------------------------------------------------
# trajectories


def _apply_batch(psi: np.ndarray, n: int, mat: np.ndarray, wires) -> np.ndarray:
    """Apply ``mat`` on ``wires`` to every row of a ``(T, 2**n)`` batch."""
    T = psi.shape[0]
    k = len(wires)
    if k == 1 or (k == 2 and wires[1] == wires[0] + 1):
        t = psi.reshape(T, 2 ** wires[0], 2**k, -1)
        return np.matmul(mat, t).reshape(T, -1)
    t = psi.reshape((T,) + (2,) * n)
    m = mat.reshape((2,) * (2 * k))
    axes = [w + 1 for w in wires]
    t = np.tensordot(m, t, axes=(list(range(k, 2 * k)), axes))
    t = np.moveaxis(t, list(range(k)), axes)
    return np.ascontiguousarray(t).reshape(T, -1)


def _noise_plan(c: Circuit, conf: NoiseConf):
    plan = []
    for g in c.ops:
        plan.append((g, match(conf, g)))
    return plan


def count_channel_applications(c: Circuit, conf: NoiseConf) -> int:
    return sum(len(chs) for _, chs in _noise_plan(c, conf))


def _run_batch(c: Circuit, conf: NoiseConf, uniforms: np.ndarray):
    """Evolve a batch of trajectories; ``uniforms`` has one row per trajectory."""
    if c.d != 2:
        raise ValueError("trajectories need qubits")
    T = uniforms.shape[0]
    dim = 2**c.n
    psi = np.zeros((T, dim), dtype=complex)
    if c.initial_state is not None:
        psi[:] = c.initial_state.amplitudes
    else:
        psi[:, 0] = 1
    logp = np.zeros(T)
    slot = 0
    rows = np.arange(T)
    for g, chans in _noise_plan(c, conf):
        psi = _apply_batch(psi, c.n, gate_matrix(g), g.wires)
        for ch, wires in chans:
            branches = np.stack([_apply_batch(psi, c.n, K, wires) for K in ch.operators])
            probs = np.einsum("btd,btd->bt", branches.conj(), branches).real  # (B, T)
            cum = np.cumsum(probs, axis=0)
            u = uniforms[:, slot] * cum[-1]
            pick = np.minimum((cum < u[None, :]).sum(axis=0), len(ch.operators) - 1)
            p = probs[pick, rows]
            if np.any(p <= 0):
                raise RuntimeError("selected a zero-probability Kraus branch")
            psi = branches[pick, rows] / np.sqrt(p)[:, None]
            logp += np.log(p)
            slot += 1
    return psi, logp


def mc_trajectory(c: Circuit, conf: NoiseConf, rng=None):
    """One Monte-Carlo trajectory; returns ``(StateVector, log_probability)``."""
    rng = as_stream(rng)
    K = count_channel_applications(c, conf)
    psi, logp = _run_batch(c, conf, rng.random((1, K)))
    return StateVector(psi[0], c.n), float(logp[0])


def trajectory_batch(c: Circuit, conf: NoiseConf, ntraj: int, rng=None, chunk: int = 2048):
    """States and log-probabilities of ``ntraj`` trajectories.

    Trajectory ``t`` draws its uniforms from child stream ``t`` of
    ``rng_split(rng, ntraj)``, so it equals ``mc_trajectory`` with that stream.
    """
    streams = rng_split(as_stream(rng), ntraj)
    K = count_channel_applications(c, conf)
    uniforms = np.stack([s.random(K) for s in streams]) if K else np.zeros((ntraj, 0))
    states, logps = [], []
    for lo in range(0, ntraj, chunk):
        psi, lp = _run_batch(c, conf, uniforms[lo : lo + chunk])
        states.append(psi)
        logps.append(lp)
    return np.concatenate(states), np.concatenate(logps)


def trajectory_expectation(c: Circuit, conf: NoiseConf, obs: PauliSum, ntraj: int, rng=None):
    """Mean and standard error of ``<obs>`` over trajectories."""
    states, _ = trajectory_batch(c, conf, ntraj, rng)
    H = pauli_sum_to_coo(obs).to_scipy()
    vals = np.real(np.einsum("td,td->t", states.conj(), (H @ states.T).T))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(ntraj)) if ntraj > 1 else 0.0


# ---------------------------------------------------------------------------
# density matrices


def _apply_dm(rho: np.ndarray, n: int, mat: np.ndarray, wires) -> np.ndarray:
    """``mat rho mat^+`` on ``wires``; ``rho`` is flattened as a 2n-wire tensor."""
    v = apply_matrix(rho.reshape(-1), 2 * n, 2, mat, list(wires))
    v = apply_matrix(v, 2 * n, 2, mat.conj(), [w + n for w in wires])
    return v.reshape(2**n, 2**n)


def density_matrix_run(c: Circuit, conf: NoiseConf | None = None) -> np.ndarray:
    if c.n > MAX_DM_QUBITS:
        raise ValueError(f"density matrices limited to {MAX_DM_QUBITS} qubits")
    conf = conf or NoiseConf()
    if c.initial_state is not None:
        a = c.initial_state.amplitudes
        rho = np.outer(a, a.conj())
    else:
        rho = np.zeros((2**c.n, 2**c.n), dtype=complex)
        rho[0, 0] = 1
    for g, chans in _noise_plan(c, conf):
        rho = _apply_dm(rho, c.n, gate_matrix(g), g.wires)
        for ch, wires in chans:
            rho = sum(_apply_dm(rho, c.n, K, wires) for K in ch.operators)
    return rho


def dm_expectation(rho: np.ndarray, obs: PauliSum) -> float:
    H = pauli_sum_to_coo(obs).to_scipy()
    return float(np.real(np.trace((H @ rho))))


# ---------------------------------------------------------------------------
# readout


def _readout_pairs(readout, n: int):
    if isinstance(readout, dict):
        return [readout.get(q, (1.0, 1.0)) for q in range(n)]
    readout = list(readout)
    if len(readout) == 2 and np.isscalar(readout[0]):
        return [tuple(readout)] * n
    if len(readout) != n:
        raise ValueError("need one (p00, p11) pair per qubit")
    return [tuple(r) for r in readout]


def apply_readout_error(counts: dict, readout, rng=None) -> dict:
    """Flip each measured bit independently: 0->1 w.p. 1-p00 and 1->0 w.p. 1-p11."""
    if not counts:
        return {}
    n = len(next(iter(counts)))
    pairs = _readout_pairs(readout, n)
    for p00, p11 in pairs:
        _check_prob("p00", p00)
        _check_prob("p11", p11)
    keys = sorted(counts)
    bits = np.array([[int(ch) for ch in k] for k in keys], dtype=np.uint8)
    shots = np.repeat(bits, [counts[k] for k in keys], axis=0)
    u = as_stream(rng).random(shots.shape)
    p_flip = np.where(shots == 0, 1 - np.array([p[0] for p in pairs]), 1 - np.array([p[1] for p in pairs]))
    shots = shots ^ (u < p_flip).astype(np.uint8)
    out: dict = {}
    for row in shots:
        key = "".join("1" if b else "0" for b in row)
        out[key] = out.get(key, 0) + 1
    return dict(sorted(out.items()))


def readout_calibrate(execute: Callable, n: int, qubits=None) -> dict:
    """Per-qubit confusion matrices ``M[measured, prepared]`` from two calibration runs."""
    qubits = list(range(n)) if qubits is None else list(qubits)
    zeros = Circuit(n)
    ones = Circuit(n)
    for q in range(n):
        ones.x(q)
    c0, c1 = execute(zeros), execute(ones)
    mats = {}
    for q in qubits:
        tot0, tot1 = sum(c0.values()), sum(c1.values())
        p10 = sum(v for k, v in c0.items() if k[q] == "1") / tot0
        p01 = sum(v for k, v in c1.items() if k[q] == "0") / tot1
        mats[q] = np.array([[1 - p10, p01], [p10, 1 - p01]])
    return mats


@dataclass
class QuasiDistribution:
    probs: dict
    negative: bool  # true when mitigation produced negative entries

    def expectation_z(self, qubit: int) -> float:
        return float(sum(p * (1 - 2 * int(k[qubit])) for k, p in self.probs.items()))


def readout_correct(mit: dict, counts: dict) -> QuasiDistribution:
    """Apply the tensored inverse of the confusion matrices to the empirical distribution."""
    n = len(next(iter(counts)))
    total = sum(counts.values())
    vec = np.zeros(2**n)
    for k, v in counts.items():
        vec[int(k, 2)] += v / total
    for q, m in mit.items():
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValueError(f"confusion matrix of qubit {q} is singular")
        inv = np.linalg.inv(m)
        vec = np.moveaxis(np.tensordot(inv, vec.reshape((2,) * n), axes=(1, q)), 0, q).reshape(-1)
    probs = {format(i, f"0{n}b"): float(p) for i, p in enumerate(vec) if abs(p) > 1e-15}
    return QuasiDistribution(probs, bool(np.any(vec < -1e-12)))
