"""Fermion Gaussian states in the Nambu basis.

With ``Psi = (c_0..c_{L-1}, c_0^+..c_{L-1}^+)`` a quadratic Hamiltonian

    H = sum_ij A_ij c_i^+ c_j + 1/2 sum_ij (B_ij c_i^+ c_j^+ + h.c.)

equals ``1/2 Psi^+ h Psi + 1/2 Tr A`` with the BdG matrix
``h = [[A, B], [-conj(B), -conj(A)]]``. A state is stored as the correlation
matrix ``C_ab = <Psi_a^+ Psi_b>``; its top-left block is ``<c_i^+ c_j>`` and its
bottom-left block is ``<c_i c_j>``. Pure states have ``C @ C = C`` and the
null space of ``C`` spans the linear combinations of ``Psi`` that annihilate
the state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_stream, eigh

ZERO_MODE_TOL = 1e-9
IMAG_STEP = 0.1


@dataclass
class QuadraticHamiltonian:
    L: int
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=complex)
        self.B = np.asarray(self.B, dtype=complex)
        if self.A.shape != (self.L, self.L) or self.B.shape != (self.L, self.L):
            raise ValueError("A and B must be L x L")
        if np.max(np.abs(self.A - self.A.conj().T), initial=0) > 1e-10:
            raise ValueError("A must be Hermitian")
        if np.max(np.abs(self.B + self.B.T), initial=0) > 1e-10:
            raise ValueError("B must be antisymmetric")

    def bdg(self) -> np.ndarray:
        return np.block([[self.A, self.B], [-self.B.conj(), -self.A.conj()]])


@dataclass
class FGSState:
    L: int
    C: np.ndarray
    degenerate: bool = False  # set when zero modes were tie-broken

    def gamma(self) -> np.ndarray:
        """``<c_i^+ c_j>`` block."""
        return self.C[: self.L, : self.L]

    def pairing(self) -> np.ndarray:
        """``<c_i c_j>`` block."""
        return self.C[self.L :, : self.L]

    def occupations(self) -> np.ndarray:
        return np.real(np.diag(self.gamma()))

    def copy(self) -> "FGSState":
        return FGSState(self.L, self.C.copy(), self.degenerate)


def build_kitaev(L: int, t: float, delta: float, mu: float) -> QuadraticHamiltonian:
    """Open Kitaev chain: hopping ``-t``, pairing ``delta``, chemical potential ``mu``."""
    if L < 2:
        raise ValueError("need L >= 2")
    A = -mu * np.eye(L, dtype=complex)
    B = np.zeros((L, L), dtype=complex)
    for i in range(L - 1):
        A[i, i + 1] = A[i + 1, i] = -t
        B[i, i + 1] = delta
        B[i + 1, i] = -delta
    return QuadraticHamiltonian(L, A, B)


def random_quadratic(L: int, rng=None, pairing: bool = True) -> QuadraticHamiltonian:
    g = as_stream(rng).gen
    a = g.normal(size=(L, L)) + 1j * g.normal(size=(L, L))
    A = (a + a.conj().T) / 2
    B = np.zeros((L, L), dtype=complex)
    if pairing:
        b = g.normal(size=(L, L)) + 1j * g.normal(size=(L, L))
        B = (b - b.T) / 2
    return QuadraticHamiltonian(L, A, B)


def from_filling(L: int, filled) -> FGSState:
    """Product state with modes in ``filled`` occupied."""
    occ = np.zeros(L)
    occ[list(filled)] = 1
    C = np.diag(np.concatenate([occ, 1 - occ])).astype(complex)
    return FGSState(L, C)


def _flip(v: np.ndarray, L: int) -> np.ndarray:
    """Particle-hole conjugation ``(a, b) -> (conj b, conj a)`` on columns."""
    return np.concatenate([v[L:].conj(), v[:L].conj()])


def _from_filled_modes(L: int, Y: np.ndarray) -> np.ndarray:
    """Correlation matrix of the state whose occupied quasi-modes span ``Y``."""
    return (Y @ Y.conj().T).conj()


def _zero_mode_half(Z: np.ndarray, L: int) -> np.ndarray:
    """Half of a particle-hole symmetric zero space, orthogonal to its conjugate.

    Vectors fixed by particle-hole conjugation have the form ``(a, conj a)``
    and map to real vectors ``sqrt(2) (Re a, Im a)``; an orthonormal real basis
    ``w_k`` is paired as ``(w_1 + i w_2)/sqrt(2)``, ...
    """
    cands = np.concatenate([Z + _flip(Z, L), 1j * (Z - _flip(Z, L))], axis=1)
    a = cands[:L]
    real = np.concatenate([a.real, a.imag], axis=0) * np.sqrt(2)
    u, s, _ = np.linalg.svd(real, full_matrices=False)
    w = u[:, : Z.shape[1]]
    a = (w[:L] + 1j * w[L:]) / np.sqrt(2)
    fixed = np.concatenate([a, a.conj()], axis=0)  # unit-norm, particle-hole fixed
    half = Z.shape[1] // 2
    return (fixed[:, 0 : 2 * half : 2] + 1j * fixed[:, 1 : 2 * half : 2]) / np.sqrt(2)


def fgs_ground_state(h: QuadraticHamiltonian) -> FGSState:
    """Fill every negative-energy BdG mode; zero modes are split deterministically."""
    L = h.L
    eps, W = eigh(h.bdg())
    neg = eps < -ZERO_MODE_TOL
    zero = np.abs(eps) <= ZERO_MODE_TOL
    Y = W[:, neg]
    degenerate = bool(zero.any())
    if degenerate:
        Y = np.concatenate([Y, _zero_mode_half(W[:, zero], L)], axis=1)
    if Y.shape[1] != L:
        raise ValueError("BdG spectrum is not particle-hole symmetric")
    return FGSState(L, _from_filled_modes(L, Y), degenerate)


def fgs_energy(s: FGSState, h: QuadraticHamiltonian) -> float:
    return float(np.real(0.5 * np.sum(h.bdg() * s.C) + 0.5 * np.trace(h.A)))


def bdg_spectrum(h: QuadraticHamiltonian) -> np.ndarray:
    return eigh(h.bdg())[0]


def _filled_modes(s: FGSState) -> np.ndarray:
    P = s.C.conj()
    nu, V = np.linalg.eigh(0.5 * (P + P.conj().T))
    if np.max(np.minimum(np.abs(nu), np.abs(1 - nu))) > 1e-6:
        raise ValueError("state is not pure")
    return V[:, nu > 0.5]


def propagator(h: QuadraticHamiltonian, t: float) -> np.ndarray:
    eps, W = eigh(h.bdg())
    return (W * np.exp(-1j * eps * t)) @ W.conj().T


def fgs_evolve(s: FGSState, h: QuadraticHamiltonian, t: float, mode: str = "real") -> FGSState:
    """Evolve under ``h`` for time ``t`` (real) or imaginary time ``t`` (cooling)."""
    if not np.isfinite(t):
        raise ValueError("evolution time must be finite")
    if h.L != s.L:
        raise ValueError("mode count mismatch")
    if mode == "real":
        U = propagator(h, t)
        return FGSState(s.L, U.conj() @ s.C @ U.T, s.degenerate)
    if mode != "imaginary":
        raise ValueError(f"unknown mode {mode!r}")
    if t < 0:
        raise ValueError("imaginary time must be non-negative")
    Y = _filled_modes(s)
    if t > 0:
        steps = int(np.ceil(t / IMAG_STEP))
        eps, W = eigh(h.bdg())
        shift = np.min(eps)  # keeps the largest factor at 1
        step = (W * np.exp(-(eps - shift) * t / steps)) @ W.conj().T
        for _ in range(steps):
            Y, _ = np.linalg.qr(step @ Y)
    return FGSState(s.L, _from_filled_modes(s.L, Y), s.degenerate)


def two_time_correlation(s0: FGSState, h: QuadraticHamiltonian, t: float) -> np.ndarray:
    """``<c_i^+(t) c_j(0)>`` with operators evolved in the Heisenberg picture."""
    U = propagator(h, t)
    return (U.conj() @ s0.C)[: s0.L, : s0.L]


def _h2(nu: np.ndarray) -> np.ndarray:
    nu = np.clip(nu, 0.0, 1.0)
    out = np.zeros_like(nu)
    m = (nu > 1e-15) & (nu < 1 - 1e-15)
    p = nu[m]
    out[m] = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return out


def fgs_entropy(s: FGSState, subsystem) -> float:
    """Entanglement entropy (bits) of the modes in ``subsystem``."""
    sub = sorted(set(int(k) for k in subsystem))
    if not sub or len(sub) >= s.L or any(not 0 <= k < s.L for k in sub):
        raise ValueError("subsystem must be a proper nonempty subset of modes")
    idx = np.array(sub + [k + s.L for k in sub])
    block = s.C[np.ix_(idx, idx)]
    nu = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
    return float(0.5 * np.sum(_h2(nu)))


def _orthonormal(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    u, sv, _ = np.linalg.svd(m, full_matrices=False)
    return u[:, sv > tol * max(1.0, sv[0] if len(sv) else 1.0)]


def fgs_measure(s: FGSState, site: int, rng=None, forced: int | None = None):
    """Projective measurement of ``n_site``; returns ``(outcome, prob, post_state)``."""
    L = s.L
    if not 0 <= site < L:
        raise ValueError(f"site {site} out of range")
    p1 = float(np.clip(np.real(s.C[site, site]), 0.0, 1.0))
    if forced is None:
        outcome = int(as_stream(rng).random() < p1)
    else:
        outcome = int(forced)
        if outcome not in (0, 1):
            raise ValueError("forced outcome must be 0 or 1")
    prob = p1 if outcome == 1 else 1 - p1
    if prob < 1e-14:
        raise ValueError(f"outcome {outcome} has zero probability")
    # annihilator space of the current (pure) state
    nu, V = np.linalg.eigh(0.5 * (s.C + s.C.conj().T))
    K = V[:, nu < 0.5]
    killer, kept = (site + L, site) if outcome == 1 else (site, site + L)
    row = K[killer]
    if np.linalg.norm(row) > 1e-12:
        # null space of the 1 x L row inside span(K)
        _, _, vh = np.linalg.svd(row[None, :])
        K = K @ vh[1:].conj().T
    K = K.copy()
    K[kept] = 0
    K = _orthonormal(K)
    e = np.zeros((2 * L, 1), dtype=complex)
    e[killer] = 1
    K = _orthonormal(np.concatenate([K, e], axis=1))
    if K.shape[1] != L:
        raise ValueError("measurement update lost rank")
    C = np.eye(2 * L, dtype=complex) - K @ K.conj().T
    return outcome, prob, FGSState(L, C, s.degenerate)


def majorana_covariance(s: FGSState) -> np.ndarray:
    """Real antisymmetric ``M_ab = (i/2) <[g_a, g_b]>`` with ``g_2j = c_j + c_j^+``,
    ``g_2j+1 = i (c_j^+ - c_j)``."""
    L = s.L
    omega = np.zeros((2 * L, 2 * L), dtype=complex)
    for j in range(L):
        omega[2 * j, j] = 1
        omega[2 * j, j + L] = 1
        omega[2 * j + 1, j] = -1j
        omega[2 * j + 1, j + L] = 1j
    flip = np.block([[np.zeros((L, L)), np.eye(L)], [np.eye(L), np.zeros((L, L))]])
    X = omega @ flip @ s.C @ omega.T  # <g_a g_b>
    return np.real(0.5j * (X - X.T))


def pfaffian(a: np.ndarray) -> float:
    """Pfaffian of a real antisymmetric matrix by pivoted Parlett-Reid elimination."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if n % 2:
        return 0.0
    pf = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(a[k + 1 :, k])))
        if kp != k + 1:
            a[[k + 1, kp]] = a[[kp, k + 1]]
            a[:, [k + 1, kp]] = a[:, [kp, k + 1]]
            pf = -pf
        if a[k + 1, k] == 0:
            return 0.0
        pf *= a[k, k + 1]
        if k + 2 < n:
            tau = a[k, k + 2 :] / a[k, k + 1]
            col = a[k + 2 :, k + 1].copy()
            a[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return float(pf)


def fgs_parity(s: FGSState) -> int:
    """Fermion parity (+1 even, -1 odd) of a pure Gaussian state."""
    return 1 if pfaffian(-majorana_covariance(s)) > 0 else -1


def apply_majorana(s: FGSState, mode: int) -> FGSState:
    """Act with the unitary ``c_j + c_j^+``; flips the fermion parity."""
    L = s.L
    D = -np.eye(2 * L)
    D[mode, mode] = D[mode + L, mode + L] = 0
    D[mode, mode + L] = D[mode + L, mode] = 1
    return FGSState(L, D @ s.C @ D.T, s.degenerate)


def kitaev_entropy_scan(L: int, t: float, delta: float, mu_grid):
    """Half-chain entropy of the Kitaev ground state across ``mu_grid``.

    Returns ``(curve, mu_at_max)`` with ``curve`` a list of ``(mu, bits)``.
    """
    mu_grid = list(mu_grid)
    if not mu_grid:
        raise ValueError("mu grid is empty")
    half = range(L // 2)
    curve = [(float(mu), fgs_entropy(fgs_ground_state(build_kitaev(L, t, delta, mu)), half))
             for mu in mu_grid]
    best = max(curve, key=lambda r: r[1])
    return curve, best[0]
