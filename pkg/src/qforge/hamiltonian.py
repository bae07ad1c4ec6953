"""Pauli-sum and qudit operator-sum model builders, lowered to sparse COO or
dense matrices.

Bit order: site 0 is the most significant digit of a basis index, for every
engine in the package.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice, pair_distances
from .numerics import SparseCOO

MAX_COO_SITES = 26
MAX_QUDIT_DIM = 2**14

PAULI_CODES = {"I": 0, "X": 1, "Y": 2, "Z": 3}
PAULI_MATRICES = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass
class PauliSum:
    """Weighted list of Pauli strings; codes 0=I, 1=X, 2=Y, 3=Z."""

    n: int
    terms: list = field(default_factory=list)

    def __post_init__(self):
        terms = []
        for w, codes in self.terms:
            codes = tuple(int(c) for c in codes)
            if len(codes) != self.n:
                raise ValueError(f"term has {len(codes)} codes, expected {self.n}")
            if any(c not in (0, 1, 2, 3) for c in codes):
                raise ValueError(f"invalid Pauli code in {codes}")
            w = complex(w)
            if not np.isfinite(w):
                raise ValueError("Pauli weights must be finite")
            terms.append((w, codes))
        self.terms = terms

    @classmethod
    def from_strings(cls, n: int, spec) -> "PauliSum":
        """``spec`` is a list of ``(weight, {site: "X"|"Y"|"Z"})`` pairs."""
        terms = []
        for w, ops in spec:
            codes = [0] * n
            for site, p in ops.items():
                codes[site] = PAULI_CODES[p]
            terms.append((w, codes))
        return cls(n, terms)

    def add_term(self, weight, codes) -> None:
        self.terms.extend(PauliSum(self.n, [(weight, codes)]).terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if other.n != self.n:
            raise ValueError("site count mismatch")
        return PauliSum(self.n, self.terms + other.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "terms": [{"w_re": w.real, "w_im": w.imag, "codes": list(c)} for w, c in self.terms],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PauliSum":
        return cls(
            int(d["n"]),
            [(complex(t["w_re"], t.get("w_im", 0.0)), t["codes"]) for t in d["terms"]],
        )

    @classmethod
    def from_json(cls, text: str) -> "PauliSum":
        return cls.from_dict(json.loads(text))


def _site_masks(n: int, codes) -> tuple[int, int, int]:
    """Bit masks of sites carrying a flip (X or Y), a sign (Z or Y), and Y."""
    flip = sign = ny = 0
    for site, c in enumerate(codes):
        bit = 1 << (n - 1 - site)
        if c in (1, 2):
            flip |= bit
        if c in (2, 3):
            sign |= bit
        if c == 2:
            ny += 1
    return flip, sign, ny


def pauli_phase(cols: np.ndarray, sign_mask: int, ny: int) -> np.ndarray:
    """Value of ``<col ^ flip| P |col>`` for each basis index in ``cols``."""
    parity = np.bitwise_count(cols & sign_mask) & 1
    return (1j**ny) * (1 - 2 * parity.astype(np.int8))


def pauli_sum_to_coo(h: PauliSum, max_sites: int = MAX_COO_SITES, workers: int = 1) -> SparseCOO:
    """Lower a Pauli sum to a canonical COO matrix.

    Terms sharing a flip mask share a sparsity pattern, so their values are
    accumulated per row before emission. Row blocks may be processed by a
    thread pool; blocks are concatenated in order so the output is identical
    for any worker count.
    """
    n = h.n
    if n > max_sites:
        raise ValueError(f"{n} sites exceeds the COO memory guard of {max_sites}")
    dim = 1 << n
    groups: dict[int, list] = {}
    for w, codes in h.terms:
        if w == 0:
            continue
        flip, sign, ny = _site_masks(n, codes)
        groups.setdefault(flip, []).append((w, sign, ny))
    if not groups:
        return SparseCOO.zeros(dim)
    masks = sorted(groups)
    idx_dtype = np.int64

    def block(lo: int, hi: int):
        rows = np.arange(lo, hi, dtype=idx_dtype)
        ncols = len(masks)
        cols = np.empty((hi - lo, ncols), dtype=idx_dtype)
        vals = np.zeros((hi - lo, ncols), dtype=np.complex128)
        for k, flip in enumerate(masks):
            c = rows ^ flip
            cols[:, k] = c
            acc = vals[:, k]
            for w, sign, ny in groups[flip]:
                acc += w * pauli_phase(c, sign, ny)
        if ncols > 1:
            order = np.argsort(cols, axis=1, kind="stable")
            cols = np.take_along_axis(cols, order, axis=1)
            vals = np.take_along_axis(vals, order, axis=1)
        r = np.repeat(rows, ncols)
        c = cols.ravel()
        v = vals.ravel()
        nz = v != 0
        return r[nz], c[nz], v[nz]

    nblocks = max(1, min(workers, dim // 1024 or 1))
    bounds = np.linspace(0, dim, nblocks + 1).astype(np.int64)
    spans = list(zip(bounds[:-1], bounds[1:]))
    if nblocks == 1:
        parts = [block(0, dim)]
    else:
        with ThreadPoolExecutor(nblocks) as ex:
            parts = list(ex.map(lambda s: block(*s), spans))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return SparseCOO.from_triplets(dim, rows, cols, vals, canonical=True)


def pauli_sum_to_dense(h: PauliSum) -> np.ndarray:
    return pauli_sum_to_coo(h).to_dense()


def pauli_string_matrix(codes) -> np.ndarray:
    """Kronecker product of single-site Pauli matrices (reference path)."""
    m = np.ones((1, 1), dtype=complex)
    for c in codes:
        m = np.kron(m, PAULI_MATRICES[c])
    return m


# ---------------------------------------------------------------------------
# lattice models


def _bonds(lat: Lattice, order: int = 1):
    edges = lat.edges.get(order, [])
    if not edges and lat.num_sites > 1:
        raise ValueError(f"lattice has no order-{order} edges")
    return edges


def tfim_terms(lat: Lattice, g: float) -> PauliSum:
    """``-sum_<ij> Z_i Z_j - g sum_i X_i`` over nearest-neighbor bonds."""
    n = lat.num_sites
    h = PauliSum(n)
    for i, j in _bonds(lat):
        codes = [0] * n
        codes[i] = codes[j] = 3
        h.add_term(-1.0, codes)
    for i in range(n):
        codes = [0] * n
        codes[i] = 1
        h.add_term(-g, codes)
    return h


def heisenberg_terms(lat: Lattice, jx: float = 1.0, jy: float = 1.0, jz: float = 1.0, hz=None) -> PauliSum:
    """``sum_<ij> (Jx X X + Jy Y Y + Jz Z Z)`` plus an optional per-site Z field."""
    n = lat.num_sites
    h = PauliSum(n)
    for i, j in _bonds(lat):
        for code, J in ((1, jx), (2, jy), (3, jz)):
            if J == 0:
                continue
            codes = [0] * n
            codes[i] = codes[j] = code
            h.add_term(J, codes)
    if hz is not None:
        for i, f in enumerate(np.broadcast_to(hz, (n,))):
            codes = [0] * n
            codes[i] = 3
            h.add_term(float(f), codes)
    return h


def rydberg_terms(lat: Lattice, omega: float, delta: float, c6: float, cutoff: float | None = None) -> PauliSum:
    """Rydberg array Hamiltonian expanded into I/Z/ZZ/X Pauli terms.

    ``H = sum_i (omega/2) X_i - delta n_i + sum_{i<j} V_ij n_i n_j`` with
    ``n_i = (1 - Z_i)/2`` and ``V_ij = c6 / r_ij^6``. All pairs are included
    unless ``cutoff`` limits the interaction radius. The constant is kept as
    an all-identity term.
    """
    n = lat.num_sites
    if n < 2:
        raise ValueError("need at least two sites")
    dist = pair_distances(lat)
    iu, ju = np.triu_indices(n, k=1)
    if np.any(dist[iu, ju] <= 0):
        raise ValueError("coincident sites")
    const = 0.0
    zfield = np.zeros(n)
    h = PauliSum(n)
    for i, j in zip(iu, ju):
        r = dist[i, j]
        if cutoff is not None and r > cutoff:
            continue
        v = c6 / r**6
        # n_i n_j = (1 - Z_i - Z_j + Z_i Z_j) / 4
        const += v / 4
        zfield[i] -= v / 4
        zfield[j] -= v / 4
        codes = [0] * n
        codes[i] = codes[j] = 3
        h.add_term(v / 4, codes)
    for i in range(n):
        # -delta n_i = -delta/2 + (delta/2) Z_i
        const -= delta / 2
        zfield[i] += delta / 2
        if omega != 0:
            codes = [0] * n
            codes[i] = 1
            h.add_term(omega / 2, codes)
        if zfield[i] != 0:
            codes = [0] * n
            codes[i] = 3
            h.add_term(zfield[i], codes)
    if const != 0:
        h.add_term(const, [0] * n)
    return h


# ---------------------------------------------------------------------------
# qudits


def clock_matrix(d: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def shift_matrix(d: int) -> np.ndarray:
    """``X|j> = |j+1 mod d>``."""
    return np.roll(np.eye(d, dtype=complex), 1, axis=0)


@dataclass
class QuditOperatorSum:
    """Sum of weighted products of local ``d x d`` operators."""

    n: int
    d: int
    terms: list = field(default_factory=list)

    def __post_init__(self):
        for _, ops in self.terms:
            sites = [s for s, _ in ops]
            if len(set(sites)) != len(sites):
                raise ValueError("sites must be distinct within a term")
            for s, m in ops:
                if not 0 <= s < self.n:
                    raise ValueError(f"site {s} out of range")
                if np.shape(m) != (self.d, self.d):
                    raise ValueError(f"local operator must be {self.d}x{self.d}")


def clock_model(n: int, d: int, J: float, h: float) -> QuditOperatorSum:
    """Open-chain Z_d clock model ``-J sum (Z_i Z_{i+1}^+ + h.c.) - h sum (X_i + X_i^+)``."""
    if d < 2:
        raise ValueError("local dimension must be >= 2")
    if n < 2:
        raise ValueError("need at least two sites")
    Z = clock_matrix(d)
    X = shift_matrix(d)
    terms = []
    for i in range(n - 1):
        terms.append((-J, [(i, Z), (i + 1, Z.conj().T)]))
        terms.append((-J, [(i, Z.conj().T), (i + 1, Z)]))
    for i in range(n):
        terms.append((-h, [(i, X)]))
        terms.append((-h, [(i, X.conj().T)]))
    return QuditOperatorSum(n, d, terms)


def qudit_sum_to_dense(h: QuditOperatorSum, max_dim: int = MAX_QUDIT_DIM) -> np.ndarray:
    dim = h.d**h.n
    if dim > max_dim:
        raise ValueError(f"dimension {dim} exceeds guard {max_dim}")
    eye = np.eye(h.d, dtype=complex)
    out = np.zeros((dim, dim), dtype=complex)
    for w, ops in h.terms:
        local = dict(ops)
        m = np.ones((1, 1), dtype=complex)
        for s in range(h.n):
            m = np.kron(m, local.get(s, eye))
        out += w * m
    return out
