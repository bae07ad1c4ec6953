"""Lattice geometry: standard Bravais lattices with bases, boundary
conditions, neighbor shells by distance, and site removal for defects."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace

import numpy as np

SHELL_RTOL = 1e-6

_S3 = np.sqrt(3.0)

# Lattice vectors and basis positions, in units where the nearest-neighbor
# distance is 1. Honeycomb and kagome sit on a triangular Bravais lattice.
_GEOMETRY = {
    "chain": (np.array([[1.0]]), np.array([[0.0]])),
    "square": (np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 0.0]])),
    "triangular": (np.array([[1.0, 0.0], [0.5, _S3 / 2]]), np.array([[0.0, 0.0]])),
    "honeycomb": (
        np.array([[_S3, 0.0], [_S3 / 2, 1.5]]),
        np.array([[0.0, 0.0], [0.0, 1.0]]),
    ),
    "kagome": (
        np.array([[2.0, 0.0], [1.0, _S3]]),
        np.array([[0.0, 0.0], [1.0, 0.0], [0.5, _S3 / 2]]),
    ),
}

KINDS = tuple(_GEOMETRY) + ("custom",)


@dataclass(frozen=True, eq=False)
class Lattice:
    """Immutable set of sites with coordinates and neighbor shells.

    ``edges`` maps neighbor order (1 = nearest) to sorted ``(i, j)`` pairs with
    ``i < j``. ``box`` holds one periodic translation vector per dimension
    (``None`` for open dimensions) and drives the minimum-image convention.
    """

    kind: str
    ids: tuple
    coords: np.ndarray
    edges: dict
    pbc: tuple
    lattice_constant: float
    box: tuple
    neighbor_order: int

    @property
    def num_sites(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, identifier: str) -> int:
        return self.ids.index(identifier)

    def get_identifier(self, site_index: int) -> str:
        return self.ids[site_index]

    def neighbors(self, order: int = 1) -> list:
        return list(self.edges.get(order, []))

    def displacement(self, i: int, j: int) -> np.ndarray:
        return _min_image(self.coords[j] - self.coords[i], self.box)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lattice_constant": self.lattice_constant,
            "pbc": list(self.pbc),
            "sites": [
                {"id": sid, "coords": [float(x) for x in xyz]}
                for sid, xyz in zip(self.ids, self.coords)
            ],
            "edges": {str(k): [list(e) for e in v] for k, v in sorted(self.edges.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _periodic_shifts(box) -> np.ndarray:
    vecs = [v for v in box if v is not None]
    if not vecs:
        return None
    vecs = np.array(vecs)
    combos = np.array(list(itertools.product((-1, 0, 1), repeat=len(vecs))), dtype=float)
    return combos @ vecs


def _min_image(d: np.ndarray, box) -> np.ndarray:
    shifts = _periodic_shifts(box)
    if shifts is None:
        return d
    cands = d[None, :] + shifts
    return cands[np.argmin(np.einsum("ij,ij->i", cands, cands))]


def _distance_matrix(coords: np.ndarray, box) -> np.ndarray:
    n = len(coords)
    if n == 0:
        return np.zeros((0, 0))
    diff = coords[None, :, :] - coords[:, None, :]
    shifts = _periodic_shifts(box)
    if shifts is None:
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    best = None
    for s in shifts:
        d = diff + s
        d2 = np.einsum("ijk,ijk->ij", d, d)
        best = d2 if best is None else np.minimum(best, d2)
    return np.sqrt(best)


def _shell_edges(dist: np.ndarray, neighbor_order: int) -> dict:
    n = dist.shape[0]
    edges = {k: [] for k in range(1, neighbor_order + 1)}
    if n < 2 or neighbor_order < 1:
        return edges
    iu, ju = np.triu_indices(n, k=1)
    d = dist[iu, ju]
    shells = []
    for v in np.sort(np.unique(d)):
        if shells and abs(v - shells[-1]) <= SHELL_RTOL * max(abs(v), 1e-300):
            continue
        shells.append(v)
        if len(shells) == neighbor_order:
            break
    for order, r in enumerate(shells, start=1):
        hit = np.abs(d - r) <= SHELL_RTOL * r
        edges[order] = [(int(a), int(b)) for a, b in zip(iu[hit], ju[hit])]
    return edges


def build_lattice(
    kind: str,
    size,
    pbc=False,
    lattice_constant: float = 1.0,
    neighbor_order: int = 1,
) -> Lattice:
    """Build a standard lattice.

    ``size`` gives the number of unit cells per dimension; ``pbc`` is a bool or
    a per-dimension sequence. Periodic dimensions need at least 3 cells.
    """
    if kind not in _GEOMETRY:
        raise ValueError(f"unknown lattice kind {kind!r}; expected one of {sorted(_GEOMETRY)}")
    vectors, basis = _GEOMETRY[kind]
    dim = vectors.shape[0]
    size = tuple(int(s) for s in np.atleast_1d(size))
    if len(size) != dim:
        raise ValueError(f"{kind} lattice needs {dim} size entries, got {len(size)}")
    if any(s < 1 for s in size):
        raise ValueError("size entries must be >= 1")
    if lattice_constant <= 0:
        raise ValueError("lattice_constant must be positive")
    pbc = tuple(bool(p) for p in (pbc if np.ndim(pbc) else [pbc] * dim))
    if len(pbc) != dim:
        raise ValueError("pbc must have one entry per dimension")
    for s, p in zip(size, pbc):
        if p and s < 3:
            raise ValueError("periodic dimensions need extent >= 3 (duplicate edges otherwise)")

    a = float(lattice_constant)
    ids, coords = [], []
    for cell in itertools.product(*(range(s) for s in size)):
        origin = np.asarray(cell, dtype=float) @ vectors
        for b, pos in enumerate(basis):
            ids.append(str((cell, b)))
            coords.append(a * (origin + pos))
    coords = np.array(coords).reshape(len(ids), dim)
    box = tuple(a * s * vectors[k] if p else None for k, (s, p) in enumerate(zip(size, pbc)))
    edges = _shell_edges(_distance_matrix(coords, box), neighbor_order)
    return Lattice(kind, tuple(ids), coords, edges, pbc, a, box, int(neighbor_order))


def custom_lattice(coords, ids=None, lattice_constant: float = 1.0, neighbor_order: int = 1) -> Lattice:
    """Open-boundary lattice from explicit coordinates."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(len(coords)))
    if len(set(ids)) != len(ids):
        raise ValueError("site identifiers must be unique")
    box = (None,) * coords.shape[1]
    edges = _shell_edges(_distance_matrix(coords, box), neighbor_order)
    return Lattice("custom", ids, coords, edges, (False,) * coords.shape[1], lattice_constant, box, neighbor_order)


def remove_sites(lat: Lattice, ids) -> Lattice:
    """Remove sites by identifier; neighbor shells are recomputed globally."""
    ids = list(ids)
    unknown = [i for i in ids if i not in lat.ids]
    if unknown:
        raise KeyError(f"unknown site identifiers: {unknown}")
    drop = set(ids)
    keep = [k for k, sid in enumerate(lat.ids) if sid not in drop]
    coords = lat.coords[keep]
    edges = _shell_edges(_distance_matrix(coords, lat.box), lat.neighbor_order)
    return replace(lat, kind="custom", ids=tuple(lat.ids[k] for k in keep), coords=coords, edges=edges)


def pair_distances(lat: Lattice) -> np.ndarray:
    """Symmetric matrix of site distances (minimum image under pbc)."""
    if lat.num_sites < 2:
        raise ValueError("need at least two sites")
    return _distance_matrix(lat.coords, lat.box)
