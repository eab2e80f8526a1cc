"""Weighted digraphs, two-layer networks and the M-connectivity test.

Edge ``(i, j, w)`` stores ``W[i, j] = w``: node ``j`` is a neighbour of
node ``i`` and can infect it.  Connectivity logic only looks at the
support pattern; weights are carried for the spectral and dynamical code.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InputValidationError

Partition = tuple[tuple[int, ...], ...]
Links = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class WeightedDigraph:
    """Directed graph on nodes ``0..n-1`` with strictly positive weights."""

    n: int
    edges: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise InputValidationError(f"node count must be a non-negative integer, got {self.n!r}")
        cleaned = []
        seen = set()
        for k, edge in enumerate(self.edges):
            try:
                i, j, w = edge
            except (TypeError, ValueError):
                raise InputValidationError(f"edge #{k} is not a (source, target, weight) triple: {edge!r}")
            if int(i) != i or int(j) != j:
                raise InputValidationError(f"edge #{k} has non-integer endpoints: {edge!r}")
            i, j, w = int(i), int(j), float(w)
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InputValidationError(f"edge #{k} ({i}, {j}) has an endpoint outside [0, {self.n})")
            if i == j:
                raise InputValidationError(f"edge #{k} is a self-loop on node {i}")
            if not np.isfinite(w) or w <= 0:
                raise InputValidationError(f"edge #{k} ({i}, {j}) has non-positive weight {w}")
            if (i, j) in seen:
                raise InputValidationError(f"edge #{k} ({i}, {j}) is duplicated")
            seen.add((i, j))
            cleaned.append((i, j, w))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(sorted(cleaned)))

    @classmethod
    def from_matrix(cls, W) -> "WeightedDigraph":
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise InputValidationError(f"adjacency matrix must be square, got shape {W.shape}")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise InputValidationError("adjacency matrix must be finite and nonnegative")
        if np.any(np.diag(W) != 0):
            raise InputValidationError("adjacency matrix must have a zero diagonal")
        rows, cols = np.nonzero(W)
        return cls(W.shape[0], tuple((int(i), int(j), float(W[i, j])) for i, j in zip(rows, cols)))

    @cached_property
    def matrix(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            W[i, j] = w
        W.setflags(write=False)
        return W

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-compressed ``(indptr, indices, weights)``; edges are already row-sorted."""
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        for i, _, _ in self.edges:
            indptr[i + 1] += 1
        np.cumsum(indptr, out=indptr)
        indices = np.array([j for _, j, _ in self.edges], dtype=np.int64)
        weights = np.array([w for _, _, w in self.edges], dtype=float)
        return indptr, indices, weights

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j, _ in self.edges:
            out[i].append(j)
        return tuple(tuple(s) for s in out)

    @cached_property
    def support(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i, j, _ in self.edges)

    def scaled(self, factor: float) -> "WeightedDigraph":
        if factor <= 0:
            raise InputValidationError(f"scale factor must be positive, got {factor}")
        return WeightedDigraph(self.n, tuple((i, j, w * factor) for i, j, w in self.edges))

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.matrix, self.matrix.T))

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class MultilayerNetwork:
    """Two contact layers on a shared node set: susceptible (S) and alert (A)."""

    layer_s: WeightedDigraph
    layer_a: WeightedDigraph

    def __post_init__(self):
        if self.layer_s.n != self.layer_a.n:
            raise InputValidationError(
                f"layer node counts differ: S has {self.layer_s.n}, A has {self.layer_a.n}"
            )

    @property
    def n(self) -> int:
        return self.layer_s.n

    @property
    def W_S(self) -> np.ndarray:
        return self.layer_s.matrix

    @property
    def W_A(self) -> np.ndarray:
        return self.layer_a.matrix

    @classmethod
    def from_matrices(cls, W_S, W_A) -> "MultilayerNetwork":
        return cls(WeightedDigraph.from_matrix(W_S), WeightedDigraph.from_matrix(W_A))

    def intersection_graph(self) -> WeightedDigraph:
        common = self.layer_s.support & self.layer_a.support
        return WeightedDigraph(self.n, tuple((i, j, 1.0) for i, j in common))


@dataclass(frozen=True)
class AggregationTrace:
    """Partitions ``P_0..P_k`` and hyperlink sets ``L_1..L_k`` of the aggregation.

    ``partitions[k]`` is ``P_k`` and ``links[k - 1]`` is ``L_k``.  Blocks are
    sorted tuples and are labelled by their smallest node in ``links``.
    """

    partitions: tuple[Partition, ...]
    links: tuple[Links, ...]
    converged: bool
    m_connected: bool

    @property
    def k_star(self) -> int | None:
        return len(self.links) if self.m_connected else None

    @property
    def final_partition(self) -> Partition:
        return self.partitions[-1]

    def to_json(self) -> list[dict]:
        out = []
        for k, part in enumerate(self.partitions):
            entry = {"k": k, "partition": [list(b) for b in part]}
            if k >= 1:
                entry["links"] = [list(l) for l in self.links[k - 1]]
            out.append(entry)
        return out


def _tarjan(n: int, successors: Sequence[Iterable[int]]) -> list[list[int]]:
    """Iterative Tarjan; components come out sinks first (reverse topological)."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    succ = [list(s) for s in successors]
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, pos = work[-1]
            if pos < len(succ[v]):
                work[-1] = (v, pos + 1)
                w = succ[v][pos]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def strongly_connected_components(g: WeightedDigraph) -> list[list[int]]:
    """SCCs of ``g`` as sorted node lists, in reverse topological order of the
    condensation (a block never has an edge into a block listed after it)."""
    return _tarjan(g.n, g.successors)


def is_strongly_connected(g: WeightedDigraph) -> bool:
    return g.n >= 1 and len(strongly_connected_components(g)) == 1


def matrix_is_irreducible(W) -> bool:
    W = np.asarray(W)
    n = W.shape[0]
    if n == 0:
        return False
    succ = [np.flatnonzero(W[i]).tolist() for i in range(n)]
    return len(_tarjan(n, succ)) == 1


def normalize_partition(blocks: Iterable[Iterable[int]], n: int) -> Partition:
    """Sort a partition canonically and check it covers ``0..n-1`` exactly once."""
    norm = []
    seen: set[int] = set()
    for block in blocks:
        b = tuple(sorted(int(x) for x in block))
        if not b:
            raise InputValidationError("partition contains an empty block")
        for x in b:
            if not 0 <= x < n:
                raise InputValidationError(f"partition mentions node {x} outside [0, {n})")
            if x in seen:
                raise InputValidationError(f"node {x} appears in more than one block")
            seen.add(x)
        norm.append(b)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise InputValidationError(f"partition does not cover nodes {missing}")
    return tuple(sorted(norm))


def singletons(n: int) -> Partition:
    return tuple((i,) for i in range(n))


def hyperlinks(net: MultilayerNetwork, partition: Partition) -> Links:
    """Links ``(I, J)`` such that one node of ``I`` reaches ``J`` in both layers.

    The two edges may land on different nodes of ``J``.  Links are reported
    as ``(min(I), min(J))`` and self-links are dropped.
    """
    label = [0] * net.n
    for block in partition:
        for x in block:
            label[x] = block[0]
    s_succ, a_succ = net.layer_s.successors, net.layer_a.successors
    links = set()
    for i in range(net.n):
        via_s = {label[j] for j in s_succ[i]}
        if not via_s:
            continue
        via_a = {label[j] for j in a_succ[i]}
        for target in via_s & via_a:
            if target != label[i]:
                links.add((label[i], target))
    return tuple(sorted(links))


def _condense(partition: Partition, links: Links) -> tuple[Partition, list[list[int]]]:
    """SCCs of the hypergraph, both as merged node blocks and as block indices."""
    pos = {block[0]: k for k, block in enumerate(partition)}
    succ: list[list[int]] = [[] for _ in partition]
    for a, b in links:
        succ[pos[a]].append(pos[b])
    comps = _tarjan(len(partition), succ)
    merged = tuple(sorted(tuple(sorted(x for k in comp for x in partition[k])) for comp in comps))
    return merged, comps


def aggregate_step(net: MultilayerNetwork, partition, links=()) -> tuple[Partition, Links]:
    """Build ``G^k`` from ``G^{k-1} = (partition, links)``.

    The new partition merges each strongly connected component of the
    previous hypergraph into one block; the new links are recomputed from
    the layers on that partition.
    """
    part = normalize_partition(partition, net.n)
    labels = {b[0] for b in part}
    checked = []
    for link in links:
        a, b = (int(x) for x in link)
        if a not in labels or b not in labels:
            raise InputValidationError(f"link {link!r} does not join two block labels of the partition")
        checked.append((a, b))
    next_part, _ = _condense(part, tuple(checked))
    return next_part, hyperlinks(net, next_part)


def is_m_connected(net: MultilayerNetwork) -> tuple[bool, AggregationTrace]:
    """Run the aggregation until a strongly connected hypergraph or a fixed point.

    ``P_1`` always equals ``P_0`` (``G^0`` has no links), so the fixed-point
    test only applies from ``k = 2`` on.
    """
    if net.n < 1:
        raise InputValidationError("network must have at least one node")
    partitions: list[Partition] = [singletons(net.n)]
    all_links: list[Links] = []
    part, links = partitions[0], ()
    while True:
        part, links = aggregate_step(net, part, links)
        partitions.append(part)
        all_links.append(links)
        _, comps = _condense(part, links)
        if len(comps) == 1:
            trace = AggregationTrace(tuple(partitions), tuple(all_links), True, True)
            return True, trace
        if len(partitions) >= 3 and part == partitions[-2]:
            trace = AggregationTrace(tuple(partitions), tuple(all_links), True, False)
            return False, trace
