"""Tensor networks, greedy path search with memory-capped slicing, sliced execution.

A network is a list of dense tensors whose axes carry string labels. A label
attached to two axes is summed; a label attached once is open. A contraction
tree is an SSA path: leaf ids are ``0..T-1`` and pair ``k`` creates id ``T+k``.
Flops count complex multiply-adds, one per element of the label union of a
pairwise contraction.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, gate_matrix
from .hamiltonian import PAULI_MATRICES, PauliSum
from .numerics import as_stream

PATH_FORMAT_VERSION = 1


@dataclass
class TensorNetwork:
    tensors: list  # ndarrays
    labels: list  # tuple of str per tensor, one per axis
    open: tuple = ()

    def __post_init__(self):
        self.tensors = [np.asarray(t, dtype=complex) for t in self.tensors]
        self.labels = [tuple(ls) for ls in self.labels]
        self.open = tuple(self.open)
        if len(self.tensors) != len(self.labels):
            raise ValueError("one label tuple per tensor")
        self.sizes: dict[str, int] = {}
        count: dict[str, int] = {}
        for t, ls in zip(self.tensors, self.labels):
            if t.ndim != len(ls):
                raise ValueError(f"tensor of rank {t.ndim} given {len(ls)} labels")
            if len(set(ls)) != len(ls):
                raise ValueError(f"repeated label on one tensor: {ls}")
            for lab, dim in zip(ls, t.shape):
                if self.sizes.setdefault(lab, dim) != dim:
                    raise ValueError(f"label {lab!r} has inconsistent sizes")
                count[lab] = count.get(lab, 0) + 1
        for lab, c in count.items():
            if c > 2:
                raise ValueError(f"label {lab!r} attached {c} times; hyper-edges unsupported")
        dangling = sorted(lab for lab, c in count.items() if c == 1)
        if not self.open:
            self.open = tuple(dangling)
        elif sorted(self.open) != dangling:
            raise ValueError("open labels must be exactly the singly attached labels")

    def signature(self) -> str:
        body = json.dumps([[list(ls), list(t.shape)] for ls, t in zip(self.labels, self.tensors)]
                          + [list(self.open)])
        return hashlib.sha256(body.encode()).hexdigest()

    def contract_dense(self) -> np.ndarray:
        """Reference contraction through ``np.einsum`` (small networks only)."""
        letters = {lab: i for i, lab in enumerate(sorted(self.sizes))}
        args = []
        for t, ls in zip(self.tensors, self.labels):
            args += [t, [letters[lab] for lab in ls]]
        args.append([letters[lab] for lab in self.open])
        # numpy's default greedy memory limit (largest input) degrades to one giant loop
        path, _ = np.einsum_path(*args, optimize=("greedy", 2**28))
        return np.einsum(*args, optimize=path)


# -- network builders -------------------------------------------------------


def _circuit_layer(c: Circuit, prefix: str, conj: bool):
    tensors, labels = [], []
    cur = {}
    for q in range(c.n):
        cur[q] = f"{prefix}{q}_0"
        tensors.append(np.array([1, 0], dtype=complex))
        labels.append((cur[q],))
    step = {q: 0 for q in range(c.n)}
    for g in c.ops:
        m = gate_matrix(g, 2)
        k = len(g.wires)
        t = m.reshape((2,) * (2 * k))
        if conj:
            t = t.conj()
        new = []
        for w in g.wires:
            step[w] += 1
            new.append(f"{prefix}{w}_{step[w]}")
        tensors.append(t)
        labels.append(tuple(new) + tuple(cur[w] for w in g.wires))
        for w, lab in zip(g.wires, new):
            cur[w] = lab
    return tensors, labels, cur


def capture_expectation_network(c: Circuit, obs) -> TensorNetwork:
    """Closed network for ``<psi|P|psi>`` with ``P`` a single Pauli word.

    ``obs`` is a code list or a one-term PauliSum (its weight is folded in).
    """
    if c.d != 2:
        raise ValueError("tensor-network capture needs qubits")
    if c.initial_state is not None:
        raise ValueError("capture assumes the all-zero initial state")
    weight = 1.0
    if isinstance(obs, PauliSum):
        if len(obs.terms) != 1:
            raise ValueError("capture takes a single Pauli term")
        weight, codes = obs.terms[0]
    else:
        codes = obs
    codes = tuple(int(x) for x in codes)
    if len(codes) != c.n:
        raise ValueError("observable length differs from circuit width")
    kt, kl, kcur = _circuit_layer(c, "k", conj=False)
    bt, bl, bcur = _circuit_layer(c, "b", conj=True)
    tensors, labels = kt + bt, kl + bl
    for q in range(c.n):
        p = PAULI_MATRICES[codes[q]].astype(complex)
        if q == 0:
            p = p * weight
        tensors.append(p)
        labels.append((bcur[q], kcur[q]))
    return TensorNetwork(tensors, labels, ())


def capture_amplitude_network(c: Circuit, bitstring) -> TensorNetwork:
    """Closed network for ``<bitstring|psi>``."""
    if c.d != 2 or c.initial_state is not None:
        raise ValueError("amplitude capture needs a qubit circuit from |0...0>")
    bits = [int(b) for b in bitstring]
    if len(bits) != c.n:
        raise ValueError("bitstring length differs from circuit width")
    tensors, labels, cur = _circuit_layer(c, "k", conj=False)
    for q, b in enumerate(bits):
        tensors.append(np.eye(2, dtype=complex)[b])
        labels.append((cur[q],))
    return TensorNetwork(tensors, labels, ())


def random_network(num_tensors: int, rng=None, edge_prob: float = 0.3,
                   dims=(2, 3), max_rank: int = 5, num_open: int = 0) -> TensorNetwork:
    """Connected random network of unit-norm Gaussian tensors, so values stay O(1)."""
    gen = as_stream(rng).gen
    adj: list[list[str]] = [[] for _ in range(num_tensors)]
    sizes = {}
    e = 0

    def link(a, b):
        nonlocal e
        lab = f"e{e}"
        e += 1
        sizes[lab] = int(gen.choice(dims))
        adj[a].append(lab)
        adj[b].append(lab)

    for k in range(1, num_tensors):  # spanning tree keeps the graph connected
        link(k, int(gen.integers(0, k)))
    for a in range(num_tensors):
        for b in range(a + 1, num_tensors):
            if len(adj[a]) < max_rank and len(adj[b]) < max_rank and gen.random() < edge_prob:
                link(a, b)
    opens = []
    for k in range(num_open):
        lab = f"o{k}"
        sizes[lab] = int(gen.choice(dims))
        adj[int(gen.integers(0, num_tensors))].append(lab)
        opens.append(lab)
    tensors = []
    for ls in adj:
        shape = [sizes[lab] for lab in ls]
        t = gen.normal(size=shape) + 1j * gen.normal(size=shape)
        tensors.append(t / np.linalg.norm(t))
    return TensorNetwork(tensors, adj, tuple(opens))


# -- contraction trees -------------------------------------------------------


@dataclass
class ContractionTree:
    num_leaves: int
    path: list  # [(a, b)] SSA ids
    sliced: tuple = ()
    signature: str = ""
    costs: dict = field(default_factory=dict)
    node_costs: list = field(default_factory=list)  # [{"flops", "size"}] per pair

    @property
    def num_slices(self) -> int:
        return int(self.costs.get("num_slices", 1))

    def to_dict(self) -> dict:
        return {"version": PATH_FORMAT_VERSION, "signature": self.signature,
                "leaves": self.num_leaves, "tree": [list(p) for p in self.path],
                "sliced_labels": list(self.sliced), "costs": self.costs,
                "node_costs": self.node_costs}

    @classmethod
    def from_dict(cls, d: dict) -> "ContractionTree":
        if d.get("version") != PATH_FORMAT_VERSION:
            raise ValueError(f"unsupported path file version {d.get('version')}")
        return cls(int(d["leaves"]), [tuple(p) for p in d["tree"]], tuple(d["sliced_labels"]),
                   d["signature"], dict(d["costs"]), list(d.get("node_costs", [])))

    def __eq__(self, other):
        return isinstance(other, ContractionTree) and self.to_dict() == other.to_dict()


def _merge_labels(la: tuple, lb: tuple) -> tuple:
    shared = set(la) & set(lb)
    return tuple(x for x in la if x not in shared) + tuple(x for x in lb if x not in shared)


def _prod(labels, sizes) -> int:
    return math.prod(sizes[x] for x in labels)


def _greedy_path(labels: list, sizes: dict, gen, temperature: float) -> list:
    """Greedy pairwise merges scored by output size minus input sizes, plus Gumbel noise."""
    cur = {i: ls for i, ls in enumerate(labels)}
    owners: dict[str, list[int]] = {}
    for i, ls in cur.items():
        for x in ls:
            owners.setdefault(x, []).append(i)
    nxt = len(labels)
    heap = []

    def score(a, b):
        la, lb = cur[a], cur[b]
        cost = _prod(_merge_labels(la, lb), sizes) - _prod(la, sizes) - _prod(lb, sizes)
        s = math.copysign(math.log1p(abs(cost)), cost)
        if temperature > 0:
            s -= temperature * gen.gumbel()
        return s

    def push(a, b):
        a, b = min(a, b), max(a, b)
        heapq.heappush(heap, (score(a, b), a, b))

    seen = set()
    for x in sorted(owners):
        o = owners[x]
        if len(o) == 2 and tuple(o) not in seen:
            seen.add(tuple(o))
            push(*o)
    path = []
    while heap:
        _, a, b = heapq.heappop(heap)
        if a not in cur or b not in cur:
            continue
        la, lb = cur.pop(a), cur.pop(b)
        new = _merge_labels(la, lb)
        k = nxt
        nxt += 1
        cur[k] = new
        path.append((a, b))
        neighbors = set()
        for x in new:
            o = owners[x]
            o[:] = [k if i in (a, b) else i for i in o]
            neighbors.update(i for i in o if i != k)
        for nb in sorted(neighbors):
            push(k, nb)
    # disconnected leftovers: outer products, smallest first
    while len(cur) > 1:
        a, b = sorted(cur, key=lambda i: (_prod(cur[i], sizes), i))[:2]
        new = _merge_labels(cur.pop(a), cur.pop(b))
        cur[nxt] = new
        path.append((min(a, b), max(a, b)))
        nxt += 1
    return path


def _path_costs(labels: list, sizes: dict, path: list, sliced=()) -> tuple[dict, list]:
    sz = dict(sizes)
    for x in sliced:
        sz[x] = 1
    cur = list(labels)
    flops = write = largest = 0
    nodes = []
    for a, b in path:
        la, lb = cur[a], cur[b]
        new = _merge_labels(la, lb)
        f = _prod(set(la) | set(lb), sz)
        s = _prod(new, sz)
        cur.append(new)
        flops += f
        write += s
        largest = max(largest, s)
        nodes.append({"flops": f, "size": s, "labels": list(new)})
    nslice = _prod(sliced, sizes)
    return ({"flops": flops * nslice, "flops_per_slice": flops, "write": write * nslice,
             "largest_intermediate": largest, "num_slices": nslice}, nodes)


def _slice_until(labels, sizes, path, target_size: int) -> tuple:
    sliced: list[str] = []
    while True:
        _, nodes = _path_costs(labels, sizes, path, sliced)
        big = [n for n in nodes if n["size"] > target_size]
        if not big:
            return tuple(sliced)
        freq: dict[str, int] = {}
        for n in big:
            for x in n["labels"]:
                if x not in sliced and sizes[x] > 1:
                    freq[x] = freq.get(x, 0) + 1
        if not freq:
            raise ValueError("cannot meet target_size by slicing")
        best = min(freq, key=lambda x: (-freq[x], -sizes[x], x))
        sliced.append(best)


def find_path(net: TensorNetwork, target_size: int | None = None, max_repeats: int = 8,
              seed: int = 0, temperature: float = 0.5) -> ContractionTree:
    """Greedy search with noisy restarts, then frequency-driven slicing.

    Trial 0 is the noiseless greedy; the tree with the fewest total flops after
    slicing wins, ties going to the earliest trial.
    """
    if target_size is not None:
        biggest = max(t.size for t in net.tensors)
        if target_size < biggest:
            raise ValueError(f"target_size {target_size} below largest input tensor {biggest}")
    if len(net.tensors) == 1:
        costs, _ = _path_costs(net.labels, net.sizes, [])
        return ContractionTree(1, [], (), net.signature(), costs, [])
    gen = np.random.default_rng(seed)
    best = None
    for r in range(max(1, max_repeats)):
        path = _greedy_path(net.labels, net.sizes, gen, 0.0 if r == 0 else temperature)
        sliced = () if target_size is None else _slice_until(net.labels, net.sizes, path, target_size)
        costs, nodes = _path_costs(net.labels, net.sizes, path, sliced)
        key = (costs["flops"], costs["largest_intermediate"])
        if best is None or key < best[0]:
            best = (key, path, sliced, costs, nodes)
    _, path, sliced, costs, nodes = best
    for n in nodes:
        n.pop("labels")
    return ContractionTree(len(net.tensors), path, tuple(sorted(sliced)), net.signature(),
                           costs, nodes)


# -- execution ---------------------------------------------------------------


@dataclass
class ContractionStats:
    """Instrumentation filled in by ``contract``."""
    max_intermediate: int = 0
    slices_executed: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, size: int):
        with self._lock:
            self.max_intermediate = max(self.max_intermediate, size)


def _contract_pair(ta, la, tb, lb):
    shared = [x for x in la if x in lb]
    ia = [la.index(x) for x in shared]
    ib = [lb.index(x) for x in shared]
    return np.tensordot(ta, tb, axes=(ia, ib)), _merge_labels(la, lb)


def _run_slice(net, tree, assignment, stats):
    tensors, labels = [], []
    for t, ls in zip(net.tensors, net.labels):
        idx = tuple(assignment.get(x, slice(None)) for x in ls)
        tensors.append(t[idx])
        labels.append(tuple(x for x in ls if x not in assignment))
    for a, b in tree.path:
        t, ls = _contract_pair(tensors[a], labels[a], tensors[b], labels[b])
        if stats is not None:
            stats.record(t.size)
        tensors.append(t)
        labels.append(ls)
        tensors[a] = tensors[b] = None
    out_labels = [x for x in net.open if x not in assignment]
    return np.transpose(tensors[-1], [labels[-1].index(x) for x in out_labels])


def contract(net: TensorNetwork, tree: ContractionTree, workers: int = 1,
             stats: ContractionStats | None = None) -> np.ndarray:
    """Sum over sliced-label assignments in ascending order; 0-d array if closed."""
    if tree.signature and tree.signature != net.signature():
        raise ValueError("contraction tree does not match this network (signature differs)")
    T = len(net.tensors)
    used = sorted(itertools.chain.from_iterable(tree.path))
    if tree.num_leaves != T or used != list(range(T + len(tree.path) - 1)) or len(tree.path) != T - 1:
        raise ValueError("contraction tree is inconsistent with the network")
    sliced = list(tree.sliced)
    for x in sliced:
        if x not in net.sizes:
            raise ValueError(f"sliced label {x!r} not in network")
    ranges = [range(net.sizes[x]) for x in sliced]
    assignments = [dict(zip(sliced, vals)) for vals in itertools.product(*ranges)]
    out = np.zeros([net.sizes[x] for x in net.open], dtype=complex)

    def job(asg):
        return _run_slice(net, tree, asg, stats)

    def accumulate(asg, piece):
        idx = tuple(asg.get(x, slice(None)) for x in net.open)
        out[idx] += piece

    if workers > 1 and len(assignments) > 1:
        with ThreadPoolExecutor(workers) as ex:
            for asg, piece in zip(assignments, ex.map(job, assignments)):
                accumulate(asg, piece)
    else:
        for asg in assignments:
            accumulate(asg, job(asg))
    if stats is not None:
        stats.slices_executed += len(assignments)
    return out


def save_path(tree: ContractionTree, file) -> None:
    with open(file, "w") as fh:
        json.dump(tree.to_dict(), fh, indent=1)


def load_path(file, net: TensorNetwork | None = None) -> ContractionTree:
    with open(file) as fh:
        tree = ContractionTree.from_dict(json.load(fh))
    if net is not None and tree.signature != net.signature():
        raise ValueError("path file was built for a different network topology")
    return tree
