"""Shared numerical kernels: dense linear algebra wrappers, canonical COO
sparse matrices and a splittable counter-based random stream."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

HERMITIAN_TOL = 1e-10

_PRECISION = {"double": (np.complex128, np.float64), "single": (np.complex64, np.float32)}
_current_precision = "double"


class NumericalContractError(RuntimeError):
    """A numerical post-condition (norm, bounds, positivity) was violated."""


def set_precision(name: str) -> None:
    """Select the global working precision, ``"double"`` (default) or ``"single"``."""
    global _current_precision
    if name not in _PRECISION:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_PRECISION)}")
    _current_precision = name


def get_precision() -> str:
    return _current_precision


def cdtype():
    return _PRECISION[_current_precision][0]


def rdtype():
    return _PRECISION[_current_precision][1]


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m)
    if a.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _require_square(a: np.ndarray, name: str = "matrix") -> None:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


# ---------------------------------------------------------------------------
# dense kernels


def svd_truncated(m, max_keep: int | None = None, max_err: float | None = None):
    """Singular value decomposition with optional truncation.

    ``max_keep`` caps the number of kept singular values. ``max_err`` caps the
    discarded weight (sum of squared dropped singular values). When both are
    given the stricter cap, i.e. the smaller kept count, wins.

    Returns ``(U, S, V, discarded_weight)`` with ``U @ diag(S) @ V`` the
    truncated approximation of ``m``.
    """
    a = as_matrix(m)
    if max_keep is not None and max_keep < 1:
        raise ValueError("max_keep must be >= 1")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        u, s, vh = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
    keep = len(s)
    if max_keep is not None:
        keep = min(keep, max_keep)
    if max_err is not None:
        # tail[j] = weight discarded when keeping the first j values
        sq = s**2
        tail = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
        by_err = int(np.argmax(tail <= max_err))
        keep = min(keep, max(by_err, 1))
    discarded = float(np.sum(s[keep:] ** 2))
    return u[:, :keep], s[:keep], vh[:keep, :], discarded


def eigh(m):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Inputs are symmetrized as ``(m + m^H)/2``; anything further than
    ``HERMITIAN_TOL`` (relative to the matrix norm) from Hermitian is rejected.
    """
    a = as_matrix(m)
    _require_square(a)
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if a.size and np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return np.linalg.eigh(0.5 * (a + a.conj().T))


def expm_dense(m) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    a = as_matrix(m)
    _require_square(a)
    return scipy.linalg.expm(a)


# ---------------------------------------------------------------------------
# sparse COO


@dataclass(frozen=True, eq=False)
class SparseCOO:
    """Square sparse matrix in canonical coordinate form.

    Canonical means entries sorted row-major, duplicates summed and explicit
    zeros dropped. Use :meth:`from_triplets` to build one from raw lists.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    _csr: list = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def from_triplets(cls, dim: int, rows, cols, vals, canonical: bool = False) -> "SparseCOO":
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.complex128).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("rows, cols and vals must have equal length")
        if len(rows) and (rows.min() < 0 or cols.min() < 0 or rows.max() >= dim or cols.max() >= dim):
            raise ValueError("COO index out of range")
        if not np.all(np.isfinite(vals)):
            raise ValueError("COO values must be finite")
        if not canonical:
            key = rows * dim + cols
            order = np.argsort(key, kind="stable")
            key = key[order]
            vals = vals[order]
            uniq, start = np.unique(key, return_index=True)
            vals = np.add.reduceat(vals, start) if len(vals) else vals
            rows, cols = uniq // dim, uniq % dim
            nz = vals != 0
            rows, cols, vals = rows[nz], cols[nz], vals[nz]
        return cls(int(dim), rows, cols, vals)

    @classmethod
    def from_dense(cls, m) -> "SparseCOO":
        a = as_matrix(m)
        _require_square(a)
        r, c = np.nonzero(a)
        return cls.from_triplets(a.shape[0], r, c, a[r, c], canonical=True)

    @classmethod
    def zeros(cls, dim: int) -> "SparseCOO":
        e = np.zeros(0, dtype=np.int64)
        return cls(int(dim), e, e.copy(), np.zeros(0, dtype=np.complex128))

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        out[self.rows, self.cols] = self.vals
        return out

    def to_scipy(self):
        if not self._csr:
            self._csr.append(
                scipy.sparse.csr_array((self.vals, (self.rows, self.cols)), shape=self.shape)
            )
        return self._csr[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x

    __matmul__ = matvec

    def __add__(self, other: "SparseCOO") -> "SparseCOO":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return SparseCOO.from_triplets(
            self.dim,
            np.concatenate([self.rows, other.rows]),
            np.concatenate([self.cols, other.cols]),
            np.concatenate([self.vals, other.vals]),
        )

    def scale(self, w: complex) -> "SparseCOO":
        if w == 0:
            return SparseCOO.zeros(self.dim)
        return SparseCOO(self.dim, self.rows, self.cols, self.vals * w)

    def adjoint(self) -> "SparseCOO":
        return SparseCOO.from_triplets(self.dim, self.cols, self.rows, self.vals.conj())

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        diff = (self + self.adjoint().scale(-1)).vals
        return bool(len(diff) == 0 or np.max(np.abs(diff)) <= tol)


def as_operator(h):
    """Return something supporting ``h @ vector`` for dense or COO input."""
    if isinstance(h, SparseCOO):
        return h.to_scipy()
    if scipy.sparse.issparse(h):
        return h
    return as_matrix(h)


# ---------------------------------------------------------------------------
# random streams

_MASK64 = (1 << 64) - 1


class RngStream:
    """Counter-based random stream identified by ``(seed, stream_id)``.

    Backed by the Philox counter generator keyed from the pair, so a stream is
    reproducible on any host and children from :func:`rng_split` never share
    state. Draw through :attr:`gen` (a ``numpy.random.Generator``).
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.random.SeedSequence([self.seed, self.stream_id]).generate_state(2, np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def random(self, size=None):
        return self.gen.random(size)


def rng_split(parent: RngStream, n: int) -> list[RngStream]:
    """Derive ``n`` child streams, deterministic in the parent's identity and ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seq = np.random.SeedSequence([parent.seed, parent.stream_id, n, 0x5EED])
    words = seq.generate_state(n, np.uint64)
    return [RngStream(parent.seed, int(w)) for w in words]


def as_stream(rng) -> RngStream:
    """Coerce ``None``, an int seed or an :class:`RngStream` to a stream."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(int(np.random.SeedSequence().entropy) & _MASK64)
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"cannot build an RngStream from {type(rng).__name__}")
