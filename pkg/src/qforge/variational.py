"""Variational drivers: energies, gradients, Adam, batched VQE and the
trace-of-inverse-overlap objective for several states at once."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse

from .circuit import Circuit, StateVector, run
from .hamiltonian import (PauliSum, QuditOperatorSum, clock_matrix, pauli_sum_to_coo,
                          qudit_sum_to_dense, shift_matrix)
from .numerics import NumericalContractError, SparseCOO, expm_dense

# gates whose generator has eigenvalues +-1/2, so the two-point shift rule is exact
SHIFT_GATES = frozenset({"rx", "ry", "rz", "rzz", "exchange"})
SUBSPACE_GATES = frozenset({"subspace_ry", "subspace_rz"})


@dataclass
class AnsatzSpec:
    """``builder(theta) -> Circuit``; ``generators[j]`` names the single gate fed by
    parameter ``j`` (use any other tag, e.g. "shared", when it feeds several)."""

    builder: Callable[[np.ndarray], Circuit]
    num_params: int
    generators: Sequence[str] = ()
    d: int = 2

    def __post_init__(self):
        if not self.generators:
            self.generators = ("unknown",) * self.num_params
        if len(self.generators) != self.num_params:
            raise ValueError("one generator tag per parameter")

    def shift_eligible(self) -> np.ndarray:
        return np.array([g in SHIFT_GATES or (g in SUBSPACE_GATES and self.d == 2)
                         for g in self.generators])

    def circuit(self, theta) -> Circuit:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        return self.builder(theta)

    def state(self, theta) -> StateVector:
        return run(self.circuit(theta))


# -- observables -------------------------------------------------------------


def prepare_observable(h):
    """Lower a Hamiltonian to something supporting ``h @ amplitudes``."""
    if isinstance(h, PauliSum):
        return pauli_sum_to_coo(h).to_scipy()
    if isinstance(h, SparseCOO):
        return h.to_scipy()
    if isinstance(h, QuditOperatorSum):
        return qudit_sum_to_dense(h)
    if scipy.sparse.issparse(h) or isinstance(h, np.ndarray):
        return h
    raise TypeError(f"unsupported Hamiltonian type {type(h).__name__}")


def _expect(op, amps: np.ndarray) -> complex:
    return complex(np.vdot(amps, op @ amps))


def energy(ansatz: AnsatzSpec, theta, h) -> float:
    op = prepare_observable(h)
    e = _expect(op, ansatz.state(theta).amplitudes)
    if abs(e.imag) > 1e-10 * max(1.0, abs(e.real)):
        raise NumericalContractError(f"energy has imaginary part {e.imag:.3e}; is H Hermitian?")
    return e.real


def gradient(ansatz: AnsatzSpec, theta, h, mode: str = "parameter_shift",
             fd_step: float = 1e-5) -> np.ndarray:
    """Shift rule ``[E(t+pi/2) - E(t-pi/2)]/2`` or central differences; 2k energies."""
    theta = np.asarray(theta, dtype=float)
    op = prepare_observable(h)
    if mode == "parameter_shift":
        bad = np.nonzero(~ansatz.shift_eligible())[0]
        if len(bad):
            j = int(bad[0])
            raise ValueError(f"parameter {j} ({ansatz.generators[j]}) is not shift-eligible; "
                             "use mode='finite_diff'")
        step, scale = np.pi / 2, 0.5
    elif mode == "finite_diff":
        step, scale = fd_step, 0.5 / fd_step
    else:
        raise ValueError(f"unknown gradient mode {mode!r}")
    g = np.empty_like(theta)
    for j in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += step
        tm[j] -= step
        ep = _expect(op, ansatz.state(tp).amplitudes).real
        em = _expect(op, ansatz.state(tm).amplitudes).real
        g[j] = scale * (ep - em)
    return g


# -- optimizer ---------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, k: int) -> "AdamState":
        return cls(np.zeros(k), np.zeros(k), 0)


def adam_step(state: AdamState, theta, grad, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if theta.shape != grad.shape or state.m.shape != grad.shape:
        raise ValueError("parameter, gradient and state shapes differ")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad**2
    mhat = m / (1 - beta1**t)
    vhat = v / (1 - beta2**t)
    return AdamState(m, v, t), theta - lr * mhat / (np.sqrt(vhat) + eps)


@dataclass
class VQEResult:
    traces: list  # energy before each step plus the final energy, per batch entry
    thetas: list
    best_energy: float = field(init=False)
    best_index: int = field(init=False)

    def __post_init__(self):
        finals = [tr[-1] for tr in self.traces]
        self.best_index = int(np.argmin(finals))
        self.best_energy = float(finals[self.best_index])


def vqe_run(ansatz: AnsatzSpec, theta0, h, steps: int, lr: float = 2e-2,
            grad_mode: str = "parameter_shift", batch=None, workers: int = 1,
            fd_step: float = 1e-5) -> VQEResult:
    """Adam descent from ``theta0`` or from every entry of ``batch``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    op = prepare_observable(h)
    starts = [np.asarray(theta0, dtype=float)] if batch is None else [np.asarray(b, dtype=float) for b in batch]

    def one(theta):
        state = AdamState.zeros(len(theta))
        trace = []
        for _ in range(steps):
            trace.append(_expect(op, ansatz.state(theta).amplitudes).real)
            g = gradient(ansatz, theta, op, grad_mode, fd_step)
            state, theta = adam_step(state, theta, g, lr)
        trace.append(_expect(op, ansatz.state(theta).amplitudes).real)
        return np.array(trace), theta

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, starts))
    else:
        out = [one(s) for s in starts]
    return VQEResult([o[0] for o in out], [o[1] for o in out])


# -- ansatz library ------------------------------------------------------------


def tfim_ansatz(n: int, layers: int) -> AnsatzSpec:
    """Hadamard layer, then per layer rzz on every open-chain bond and rx on every site."""
    per = 2 * n - 1

    def build(theta):
        c = Circuit(n)
        for q in range(n):
            c.h(q)
        for layer in range(layers):
            p = theta[layer * per:(layer + 1) * per]
            for i in range(n - 1):
                c.rzz(i, i + 1, p[i])
            for i in range(n):
                c.rx(i, p[n - 1 + i])
        return c

    tags = (["rzz"] * (n - 1) + ["rx"] * n) * layers
    return AnsatzSpec(build, layers * per, tags)


def tfim_ramp_parameters(n: int, layers: int, g: float = 1.0, dt: float = 0.3) -> np.ndarray:
    """Starting angles for :func:`tfim_ansatz` that follow a Trotterized linear ramp
    of the ZZ coupling from 0 to 1 at fixed field ``g``, starting from ``|+...+>``."""
    out = []
    for k in range(1, layers + 1):
        s = k / (layers + 1)
        out += [-2 * s * dt] * (n - 1) + [-2 * g * dt] * n
    return np.array(out)


def qudit_ansatz(n: int, d: int, layers: int) -> AnsatzSpec:
    """Per site: subspace_rz on adjacent level pairs, subspace_ry on all pairs; then a csum chain."""
    rz_pairs = [(j, j + 1) for j in range(d - 1)]
    ry_pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    per_site = len(rz_pairs) + len(ry_pairs)

    def build(theta):
        c = Circuit(n, d)
        k = 0
        for _ in range(layers):
            for q in range(n):
                for a, b in rz_pairs:
                    c.subspace_rz(q, theta[k], a, b)
                    k += 1
                for a, b in ry_pairs:
                    c.subspace_ry(q, theta[k], a, b)
                    k += 1
            for q in range(n - 1):
                c.csum(q, q + 1)
        return c

    tags = (["subspace_rz"] * len(rz_pairs) + ["subspace_ry"] * len(ry_pairs)) * n * layers
    return AnsatzSpec(build, layers * n * per_site, tags, d)


def clock_hva_ansatz(n: int, d: int, layers: int) -> AnsatzSpec:
    """Alternating clock-coupling and field exponentials from the uniform product state,
    one angle per bond and per site in every layer (open chain)."""
    Z, X = clock_matrix(d), shift_matrix(d)
    zz = np.kron(Z, Z.conj().T)
    zz = zz + zz.conj().T
    xx = X + X.conj().T
    plus = np.full(d, d**-0.5, dtype=complex)
    amps = plus
    for _ in range(n - 1):
        amps = np.kron(amps, plus)
    initial = StateVector(amps, n, d)
    per = 2 * n - 1

    def build(theta):
        c = Circuit(n, d, initial)
        for layer in range(layers):
            p = theta[layer * per:(layer + 1) * per]
            for i in range(n - 1):
                c.unitary((i, i + 1), expm_dense(-0.5j * p[i] * zz))
            for i in range(n):
                c.unitary((i,), expm_dense(-0.5j * p[n - 1 + i] * xx))
        return c

    tags = (["clock_coupling"] * (n - 1) + ["clock_field"] * n) * layers
    return AnsatzSpec(build, layers * per, tags, d)


def exchange_matrix(theta: float) -> np.ndarray:
    """``exp(-i theta SWAP / 2)``; commutes with total spin."""
    swap = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
    return np.cos(theta / 2) * np.eye(4) - 1j * np.sin(theta / 2) * swap


def exchange_ansatz(n: int, layers: int, initial: StateVector, pbc: bool = True,
                    shared: bool = False) -> AnsatzSpec:
    """Brick layers of exchange gates (odd bonds, then even bonds) on a fixed initial state.

    With ``shared`` each half-layer uses one angle for all its bonds, which keeps
    translation symmetry by two sites and makes those parameters not shift-eligible.
    """
    odd = [(i, (i + 1) % n) for i in range(1, n if pbc else n - 1, 2)]
    even = [(i, i + 1) for i in range(0, n - 1, 2)]
    halves = [odd, even]

    def build(theta):
        c = Circuit(n, 2, initial)
        k = 0
        for _ in range(layers):
            for bonds in halves:
                for i, j in bonds:
                    c.unitary((i, j), exchange_matrix(theta[k]))
                    if not shared:
                        k += 1
                if shared:
                    k += 1
        return c

    if shared:
        return AnsatzSpec(build, 2 * layers, ["shared"] * (2 * layers))
    count = layers * (len(odd) + len(even))
    return AnsatzSpec(build, count, ["exchange"] * count)


def dimer_state(n: int, triplet: str | None = None) -> StateVector:
    """Singlets on bonds (0,1), (2,3), ...

    With ``triplet`` = ``"+"`` or ``"0"`` one dimer is replaced by that triplet,
    summed over all dimers (even under translation by two sites).
    """
    if n % 2 or n < 2:
        raise ValueError("dimer covering needs an even chain")
    s = 1 / np.sqrt(2)
    singlet = np.array([0, s, -s, 0], dtype=complex)
    if triplet is None:
        amps = singlet
        for _ in range(n // 2 - 1):
            amps = np.kron(amps, singlet)
        return StateVector(amps, n, 2)
    trip = {"+": np.array([1, 0, 0, 0], dtype=complex),
            "0": np.array([0, s, s, 0], dtype=complex)}[triplet]
    total = np.zeros(2**n, dtype=complex)
    for j in range(n // 2):
        amps = np.ones(1, dtype=complex)
        for k in range(n // 2):
            amps = np.kron(amps, trip if k == j else singlet)
        total += amps
    return StateVector(total / np.linalg.norm(total), n, 2)


# -- several states at once ------------------------------------------------------


@dataclass
class SubspaceProblem:
    """``k`` states, each from its own ansatz; theta concatenates their parameters."""

    ansatze: list
    hamiltonian: object
    ridge: float = 1e-6

    def __post_init__(self):
        if not self.ansatze:
            raise ValueError("need at least one state")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        self.op = prepare_observable(self.hamiltonian)
        self.offsets = np.cumsum([0] + [a.num_params for a in self.ansatze])

    @property
    def k(self) -> int:
        return len(self.ansatze)

    @property
    def num_params(self) -> int:
        return int(self.offsets[-1])

    def states(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters")
        return np.array([a.state(theta[lo:hi]).amplitudes
                         for a, lo, hi in zip(self.ansatze, self.offsets[:-1], self.offsets[1:])])


def subspace_matrices(p: SubspaceProblem, theta) -> tuple[np.ndarray, np.ndarray]:
    psi = p.states(theta)
    if np.any(np.linalg.norm(psi, axis=1) == 0):
        raise ValueError("zero state in subspace")
    hpsi = np.array([p.op @ v for v in psi])
    S = psi.conj() @ psi.T
    H = psi.conj() @ hpsi.T
    return S, H


def subspace_loss(p: SubspaceProblem, theta):
    """``Re Tr((S + ridge I)^-1 H)`` together with ``S`` and ``H``."""
    S, H = subspace_matrices(p, theta)
    reg = S + p.ridge * np.eye(p.k)
    w = np.linalg.eigvalsh(reg)
    if w[0] <= 1e-14 * max(1.0, w[-1]):
        raise NumericalContractError("regularized overlap matrix is singular")
    loss = np.trace(np.linalg.solve(reg, H)).real
    return float(loss), S, H


def subspace_spectrum(S, H, floor: float = 1e-10) -> np.ndarray:
    """Generalized eigenvalues of ``H c = E S c`` after whitening ``S``."""
    S = np.asarray(S, dtype=complex)
    H = np.asarray(H, dtype=complex)
    s, U = np.linalg.eigh(0.5 * (S + S.conj().T))
    if s[-1] <= 1e-14:
        raise NumericalContractError("overlap matrix is numerically zero")
    keep = s > floor * s[-1]
    X = U[:, keep] / np.sqrt(s[keep])
    Hw = X.conj().T @ H @ X
    return np.linalg.eigvalsh(0.5 * (Hw + Hw.conj().T))


def subspace_gradient(p: SubspaceProblem, theta, fd_step: float = 1e-5) -> np.ndarray:
    """Gradient of the subspace loss.

    With X = (S + ridge I)^-1, dL = 2 Re <dpsi_i| sum_b (X_bi H psi_b - (X H X)_bi psi_b>.
    For shift-eligible parameters dpsi/dtheta = psi(theta + pi)/2 exactly; other
    parameters use a central difference of the state.
    """
    theta = np.asarray(theta, dtype=float)
    psi = p.states(theta)
    hpsi = np.array([p.op @ v for v in psi])
    S = psi.conj() @ psi.T + p.ridge * np.eye(p.k)
    H = psi.conj() @ hpsi.T
    X = np.linalg.inv(S)
    N = X @ H @ X
    # column i of the contraction: sum_b X_bi H psi_b - N_bi psi_b
    w = X.T @ hpsi - N.T @ psi
    g = np.empty_like(theta)
    for i, a in enumerate(p.ansatze):
        lo = p.offsets[i]
        block = theta[lo:lo + a.num_params]
        elig = a.shift_eligible()
        for j in range(a.num_params):
            tp = block.copy()
            if elig[j]:
                tp[j] += np.pi
                dpsi = 0.5 * a.state(tp).amplitudes
            else:
                tm = block.copy()
                tp[j] += fd_step
                tm[j] -= fd_step
                dpsi = (a.state(tp).amplitudes - a.state(tm).amplitudes) / (2 * fd_step)
            g[lo + j] = 2 * np.vdot(dpsi, w[i]).real
    return g


def subspace_optimize(p: SubspaceProblem, theta0, steps: int, lr: float = 2e-2,
                      fd_step: float = 1e-5):
    """Adam on the subspace loss; returns (theta, loss trace)."""
    theta = np.asarray(theta0, dtype=float)
    state = AdamState.zeros(len(theta))
    trace = []
    for _ in range(steps):
        trace.append(subspace_loss(p, theta)[0])
        state, theta = adam_step(state, theta, subspace_gradient(p, theta, fd_step), lr)
    trace.append(subspace_loss(p, theta)[0])
    return theta, np.array(trace)
