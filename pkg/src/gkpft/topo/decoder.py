"""Minimum-weight perfect matching with per-qubit analog weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .lattice import RhgLattice

P_FLOOR = 1e-12


def qubit_weights(flip_prob: np.ndarray) -> np.ndarray:
    """w = ln((1-p)/p) with p clipped into [P_FLOOR, 1/2]."""
    p = np.clip(np.asarray(flip_prob, dtype=float), P_FLOOR, 0.5)
    return np.log1p(-p) - np.log(p)


@dataclass
class MatchingGraph:
    defects: np.ndarray
    pair_weights: np.ndarray
    predecessors: np.ndarray = field(repr=False)


def _site_graph(lattice: RhgLattice, weights: np.ndarray) -> sparse.csr_matrix:
    e = lattice.endpoints
    n = lattice.n_checks
    # tiny offset keeps zero-weight edges (p = 1/2) from vanishing in the sparse graph
    w = np.maximum(weights, 0.0) + 1e-300
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return sparse.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n))


def matching_graph(lattice: RhgLattice, syndrome: np.ndarray, weights: np.ndarray) -> MatchingGraph:
    defects = np.flatnonzero(syndrome)
    if len(defects) == 0:
        return MatchingGraph(defects, np.zeros((0, 0)), np.zeros((0, lattice.n_checks), dtype=np.int64))
    g = _site_graph(lattice, weights)
    dist, pred = dijkstra(g, directed=False, indices=defects, return_predecessors=True)
    return MatchingGraph(defects, dist[:, defects], pred)


def _edge_index(lattice: RhgLattice, weights: np.ndarray) -> dict:
    """Lightest qubit joining each unordered pair of checks."""
    best: dict = {}
    for q, (a, b) in enumerate(lattice.endpoints):
        key = (min(a, b), max(a, b))
        if key not in best or weights[q] < weights[best[key]]:
            best[key] = q
    return best


def _path_qubits(pred_row: np.ndarray, src: int, dst: int, index: dict) -> list[int]:
    out = []
    cur = dst
    while cur != src:
        prev = pred_row[cur]
        if prev < 0:
            raise RuntimeError("defects are disconnected")
        out.append(index[(min(prev, cur), max(prev, cur))])
        cur = prev
    return out


def min_weight_pairs(pair_weights: np.ndarray) -> list[tuple[int, int]]:
    """Exact minimum-weight perfect matching on a complete graph (blossom)."""
    n = len(pair_weights)
    if n % 2:
        raise ValueError("odd number of defects")
    if n == 0:
        return []
    g = nx.Graph()
    big = float(pair_weights.max()) + 1.0
    for i in range(n):
        for j in range(i + 1, n):
            g.add_edge(i, j, weight=big - pair_weights[i, j])
    m = nx.max_weight_matching(g, maxcardinality=True)
    return sorted((min(a, b), max(a, b)) for a, b in m)


def brute_force_pairs(pair_weights: np.ndarray) -> tuple[float, list[tuple[int, int]]]:
    """Exhaustive search over all pairings; only for small defect sets."""
    n = len(pair_weights)
    if n % 2:
        raise ValueError("odd number of defects")

    def rec(rest):
        if not rest:
            return 0.0, []
        a = rest[0]
        best = (np.inf, [])
        for k in range(1, len(rest)):
            b = rest[k]
            w, pairs = rec(rest[1:k] + rest[k + 1:])
            w += pair_weights[a, b]
            if w < best[0]:
                best = (w, [(a, b)] + pairs)
        return best

    return rec(tuple(range(n)))


def pairing_weight(pair_weights: np.ndarray, pairs) -> float:
    return float(sum(pair_weights[a, b] for a, b in pairs))


class Decoder:
    """MWPM decoder bound to a lattice.

    ``backend="pymatching"`` uses the sparse blossom implementation from
    PyMatching; ``backend="exact"`` runs Dijkstra plus an exact blossom on
    the complete defect graph.
    """

    def __init__(self, lattice: RhgLattice, backend: str = "pymatching"):
        if backend not in ("pymatching", "exact"):
            raise ValueError(f"unknown backend {backend!r}")
        self.lattice = lattice
        self.backend = backend

    def decode(self, syndrome: np.ndarray, flip_prob: np.ndarray) -> np.ndarray:
        syndrome = np.asarray(syndrome, dtype=np.uint8)
        if int(syndrome.sum()) % 2:
            raise ValueError("syndrome has an odd number of defects")
        if not syndrome.any():
            return np.zeros(self.lattice.n_qubits, dtype=np.uint8)
        w = qubit_weights(flip_prob)
        if self.backend == "pymatching":
            return self._decode_pymatching(syndrome, w)
        return self._decode_exact(syndrome, w)[0]

    def _decode_pymatching(self, syndrome, w):
        import pymatching

        m = pymatching.Matching(self.lattice.check_matrix, weights=w)
        return np.asarray(m.decode(syndrome), dtype=np.uint8)

    def _decode_exact(self, syndrome, w):
        mg = matching_graph(self.lattice, syndrome, w)
        pairs = min_weight_pairs(mg.pair_weights)
        index = _edge_index(self.lattice, w)
        corr = np.zeros(self.lattice.n_qubits, dtype=np.uint8)
        for a, b in pairs:
            for q in _path_qubits(mg.predecessors[a], mg.defects[a], mg.defects[b], index):
                corr[q] ^= 1
        return corr, mg, pairs


def decode_mwpm(lattice: RhgLattice, syndrome: np.ndarray, flip_prob: np.ndarray, backend: str = "pymatching"):
    return Decoder(lattice, backend).decode(syndrome, flip_prob)
