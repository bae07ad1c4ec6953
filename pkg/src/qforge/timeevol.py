"""Time evolution: exact diagonalization, Lanczos/Krylov, Chebyshev expansion,
ODE integration for time-dependent generators, and digital-analog circuits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.special

from .circuit import Circuit, GateInstruction, StateVector, apply_gate
from .hamiltonian import PauliSum, pauli_sum_to_coo
from .numerics import NumericalContractError, SparseCOO, as_operator, as_stream, eigh

MAX_ED_DIM = 2**14
BREAKDOWN_TOL = 1e-12
KRYLOV_TOL = 1e-13
CHEB_SHRINK = 1 + 1e-8
NORM_DRIFT_TOL = 1e-6


def _vec(psi) -> np.ndarray:
    return np.asarray(psi.amplitudes if isinstance(psi, StateVector) else psi, dtype=complex)


def _wrap(v, like) -> StateVector | np.ndarray:
    if isinstance(like, StateVector):
        return StateVector(v, like.n, like.d)
    return v


def _dense(h) -> np.ndarray:
    if isinstance(h, SparseCOO):
        return h.to_dense()
    if isinstance(h, PauliSum):
        return pauli_sum_to_coo(h).to_dense()
    return np.asarray(h, dtype=complex)


# ---------------------------------------------------------------------------
# exact diagonalization


def ed_evol(h, psi0, times) -> list:
    """``psi(t) = exp(-iHt) psi0`` through the eigendecomposition of ``h``."""
    H = _dense(h)
    if H.shape[0] > MAX_ED_DIM:
        raise ValueError(f"dimension {H.shape[0]} exceeds the ED guard {MAX_ED_DIM}")
    w, V = eigh(H)
    c = V.conj().T @ _vec(psi0)
    return [_wrap(V @ (np.exp(-1j * w * t) * c), psi0) for t in times]


# ---------------------------------------------------------------------------
# Lanczos


def lanczos(h, v0: np.ndarray, m: int):
    """Lanczos tridiagonalization with full reorthogonalization.

    Returns ``(V, alpha, beta)`` with ``V`` of shape ``(dim, k)``, ``k <= m``;
    stops early on breakdown (``beta < 1e-12``), in which case ``span(V)`` is
    invariant under ``h``.
    """
    op = as_operator(h)
    dim = v0.shape[0]
    m = max(1, min(m, dim))
    nrm = np.linalg.norm(v0)
    if nrm == 0:
        raise ValueError("zero start vector")
    V = np.zeros((dim, m), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[:, 0] = v0 / nrm
    k = m
    for j in range(m):
        w = op @ V[:, j]
        alpha[j] = np.real(np.vdot(V[:, j], w))
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < BREAKDOWN_TOL:
            k = j + 1
            break
        if j + 1 < m:
            V[:, j + 1] = w / b
    return V[:, :k], alpha[:k], beta[:k]


def _tridiag(alpha, beta) -> np.ndarray:
    k = len(alpha)
    T = np.diag(alpha).astype(complex)
    if k > 1:
        T += np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    return T


def lanczos_ground(h, m: int = 80, restarts: int = 20, tol: float = 1e-10, rng=None):
    """Lowest eigenpair by restarted Lanczos; returns ``(energy, vector)``."""
    op = as_operator(h)
    dim = op.shape[0]
    g = as_stream(0 if rng is None else rng).gen
    v = g.normal(size=dim) + 1j * g.normal(size=dim)
    e_prev = np.inf
    for _ in range(restarts):
        V, a, b = lanczos(op, v, m)
        w, s = np.linalg.eigh(_tridiag(a, b))
        v = V @ s[:, 0]
        v /= np.linalg.norm(v)
        resid = np.linalg.norm(op @ v - w[0] * v)
        if resid < tol or abs(w[0] - e_prev) < tol * max(1.0, abs(w[0])) * 1e-2:
            return float(w[0]), v
        e_prev = w[0]
    return float(w[0]), v


def krylov_evol(h, psi0, times, m: int = 30) -> list:
    """Krylov propagation ``psi(t) ~ |psi0| V exp(-iTt) e1``.

    Long times are split into sub-steps whose size is chosen from the standard
    a-posteriori estimate ``beta_m |[exp(-iT dt) e1]_m|`` so that each step
    stays below ``KRYLOV_TOL``.
    """
    if m < 2:
        raise ValueError("subspace dimension must be >= 2")
    op = as_operator(h)
    v = _vec(psi0).copy()
    order = np.argsort(times)
    out = [None] * len(times)
    t_now = 0.0
    for idx in order:
        target = float(times[idx])
        while t_now < target - 1e-15:
            V, a, b = lanczos(op, v, m)
            w, s = np.linalg.eigh(_tridiag(a, b))
            e1 = s.conj()[0]
            k = len(a)
            dt = target - t_now
            if k == m and b[-1] > BREAKDOWN_TOL:
                while True:
                    y = s @ (np.exp(-1j * w * dt) * e1)
                    if b[-1] * abs(y[-1]) < KRYLOV_TOL or dt < 1e-12:
                        break
                    dt *= 0.5
            y = s @ (np.exp(-1j * w * dt) * e1)
            v = np.linalg.norm(v) * (V @ y)
            t_now += dt
        out[idx] = _wrap(v.copy(), psi0)
    return out


# ---------------------------------------------------------------------------
# Chebyshev


@dataclass(frozen=True)
class SpectralBounds:
    e_min: float
    e_max: float

    def __post_init__(self):
        if not (np.isfinite(self.e_min) and np.isfinite(self.e_max)):
            raise ValueError("bounds must be finite")
        if self.e_min > self.e_max:
            raise ValueError("e_min must not exceed e_max")


def estimate_spectral_bounds(h, m: int = 40, margin: float = 0.01, rng=None) -> SpectralBounds:
    """Extremal Ritz values from Lanczos, widened by a safety margin.

    The widening is the larger of ``margin`` times the half-width and the
    Ritz residual norm of each extreme pair.
    """
    op = as_operator(h)
    dim = op.shape[0]
    g = as_stream(12345 if rng is None else rng).gen
    v0 = g.normal(size=dim) + 1j * g.normal(size=dim)
    V, a, b = lanczos(op, v0, m)
    w, s = np.linalg.eigh(_tridiag(a, b))
    beta_last = b[-1] if len(b) == min(m, dim) else 0.0
    r_lo = abs(beta_last * s[-1, 0])
    r_hi = abs(beta_last * s[-1, -1])
    half = 0.5 * (w[-1] - w[0])
    lo = w[0] - max(margin * half, r_lo)
    hi = w[-1] + max(margin * half, r_hi)
    if half == 0:
        lo, hi = w[0] - margin * max(1.0, abs(w[0])), w[-1] + margin * max(1.0, abs(w[-1]))
    return SpectralBounds(float(lo), float(hi))


def estimate_k(t_max: float, bounds) -> tuple[int, int]:
    """Chebyshev order ``k`` and number of time sub-steps ``M``."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    e_min, e_max = (bounds.e_min, bounds.e_max) if isinstance(bounds, SpectralBounds) else bounds
    e_min, e_max = min(e_min, e_max), max(e_min, e_max)
    if e_max == e_min:
        return 1, 1
    a = (e_max - e_min) * t_max / 2
    M = 1 if a <= 30 else math.ceil(a / 30)
    k = math.ceil(1.2 * (a / M) + 20)
    return k, M


def chebyshev_evol(h, psi0, t: float, bounds, k: int | None = None, M: int | None = None):
    """Chebyshev expansion of ``exp(-iHt)`` applied to ``psi0``.

    Raises ``NumericalContractError`` if the norm drifts by more than 1e-6,
    which signals bounds that do not bracket the spectrum.
    """
    op = as_operator(h)
    e_min, e_max = (bounds.e_min, bounds.e_max) if isinstance(bounds, SpectralBounds) else bounds
    e_min, e_max = min(e_min, e_max), max(e_min, e_max)
    v = _vec(psi0).copy()
    if t == 0:
        return _wrap(v, psi0)
    if k is None or M is None:
        k0, M0 = estimate_k(abs(t), (e_min, e_max))
        k = k0 if k is None else k
        M = M0 if M is None else M
    nrm0 = np.linalg.norm(v)
    if e_max == e_min:
        return _wrap(np.exp(-1j * e_min * t) * v, psi0)
    width = (e_max - e_min) * CHEB_SHRINK
    center = e_max + e_min
    dt = t / M
    a = width * dt / 2  # same widened width as the rescaled operator
    # c_j = (2 - delta_j0) (-i)^j J_j(a)
    j = np.arange(k + 1)
    coef = (2 - (j == 0)) * (-1j) ** j * scipy.special.jv(j, a)
    phase = np.exp(-1j * center * dt / 2)

    def hmul(x):
        return (2 * (op @ x) - center * x) / width

    for _ in range(M):
        t0 = v
        t1 = hmul(v)
        acc = coef[0] * t0 + (coef[1] * t1 if k >= 1 else 0)
        for c in coef[2:]:
            t0, t1 = t1, 2 * hmul(t1) - t0
            acc = acc + c * t1
        v = phase * acc
    drift = abs(np.linalg.norm(v) - nrm0)
    if drift > NORM_DRIFT_TOL * max(1.0, nrm0):
        raise NumericalContractError(f"Chebyshev norm drift {drift:.3g}: bounds do not bracket the spectrum")
    return _wrap(v, psi0)


# ---------------------------------------------------------------------------
# time-dependent generators


def _generator_op(hval):
    if isinstance(hval, PauliSum):
        return pauli_sum_to_coo(hval).to_scipy()
    return as_operator(hval)


def ode_evol(h_fn: Callable, psi0, times, method: str = "dopri-adaptive",
             rtol: float = 1e-6, atol: float = 1e-9, dt: float | None = None,
             check_hermitian: bool = True) -> list:
    """Integrate ``dpsi/dt = -i H(t) psi`` from ``t = 0`` through ``times``.

    ``method`` is ``"rk4-fixed"`` (step ``dt``) or ``"dopri-adaptive"``
    (Dormand-Prince with ``rtol``/``atol``). Norm drift is not corrected.
    """
    psi = _vec(psi0)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and sorted")
    if check_hermitian:
        for tt in (0.0, float(times[-1]) if len(times) else 0.0):
            H = _generator_op(h_fn(tt))
            if H.shape[0] <= 256:
                Hd = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
                if np.max(np.abs(Hd - Hd.conj().T)) > 1e-8:
                    raise ValueError(f"generator is not Hermitian at t={tt}")

    def rhs(t, y):
        return -1j * (_generator_op(h_fn(t)) @ y)

    if method == "rk4-fixed":
        step = dt if dt is not None else 1e-2
        out, t_now, y = [], 0.0, psi.copy()
        for target in times:
            nsteps = int(np.ceil((target - t_now) / step - 1e-12))
            if nsteps > 0:
                h_ = (target - t_now) / nsteps
                for _ in range(nsteps):
                    k1 = rhs(t_now, y)
                    k2 = rhs(t_now + h_ / 2, y + h_ / 2 * k1)
                    k3 = rhs(t_now + h_ / 2, y + h_ / 2 * k2)
                    k4 = rhs(t_now + h_, y + h_ * k3)
                    y = y + h_ / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                    t_now += h_
            t_now = float(target)
            out.append(_wrap(y.copy(), psi0))
        return out
    if method != "dopri-adaptive":
        raise ValueError(f"unknown method {method!r}")
    if len(times) == 0:
        return []
    t_end = float(times[-1])
    if t_end == 0:
        return [_wrap(psi.copy(), psi0) for _ in times]
    solver = "DOP853" if rtol < 1e-8 else "RK45"
    sol = scipy.integrate.solve_ivp(rhs, (0.0, t_end), psi.astype(complex), method=solver,
                                    t_eval=times, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise NumericalContractError(f"ODE integration failed: {sol.message}")
    return [_wrap(sol.y[:, k].copy(), psi0) for k in range(len(times))]


# ---------------------------------------------------------------------------
# digital-analog circuits


@dataclass
class AnalogBlock:
    generator: object  # PauliSum, matrix, SparseCOO, or callable t -> one of those
    duration: float
    method: str = "dopri-adaptive"
    rtol: float = 1e-10
    atol: float = 1e-12
    dt: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.duration) or self.duration < 0:
            raise ValueError("analog block duration must be finite and >= 0")


@dataclass
class AnalogCircuit:
    n: int
    blocks: list = field(default_factory=list)

    def add_gate(self, name, wires, params=()):
        c = Circuit(self.n)
        c.append(name, wires, params)
        self.blocks.append(c.ops[0])
        return self

    def add_circuit(self, c: Circuit):
        if c.n != self.n:
            raise ValueError("wire count mismatch")
        self.blocks.extend(c.ops)
        return self

    def add_analog_block(self, generator, duration: float, **solver):
        self.blocks.append(AnalogBlock(generator, float(duration), **solver))
        return self


def run_analog_circuit(c: AnalogCircuit, psi0: StateVector | None = None) -> StateVector:
    psi = psi0 if psi0 is not None else StateVector.zero(c.n)
    for blk in c.blocks:
        if isinstance(blk, GateInstruction):
            psi = apply_gate(psi, blk)
            continue
        if blk.duration == 0:
            continue
        gen = blk.generator
        fn = gen if callable(gen) else (lambda t, g=gen: g)
        psi = ode_evol(fn, psi, [blk.duration], method=blk.method, rtol=blk.rtol,
                       atol=blk.atol, dt=blk.dt)[0]
    return psi
