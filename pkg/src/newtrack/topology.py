"""Communication graphs, Metropolis mixing matrices, and spectral statistics.

Synthetic topologies (line, cycle, complete, random with a target edge
density) are built deterministically from a seed.  Mixing matrices follow
the Metropolis rule, which makes them symmetric, doubly stochastic, and
compatible with a connected graph: the eigenvalue 1 is simple and every
eigenvalue lies in (-1, 1].
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

# Eigenvalues of I - W below this threshold are treated as exact zeros.
ZERO_EIG_TOL = 1e-9


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph on nodes 0..n-1.

    Edges are canonical (i < j), sorted lexicographically, without
    duplicates or self-loops.  Connectivity is enforced at construction.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one node, got n={self.n}")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i}, {j}) is not canonical for n={self.n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if tuple(sorted(self.edges)) != self.edges:
            raise ValueError("edges must be sorted lexicographically")
        if not _connected(self.n, self.edges):
            raise ValueError("graph is not connected")

    @property
    def degrees(self) -> np.ndarray:
        """Node degrees as an integer vector of length n."""
        d = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix."""
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly stochastic weight matrix with its spectrum.

    `eigenvalues` are sorted ascending.  Construction checks symmetry,
    row sums, nonnegativity, and that 1 is a simple eigenvalue with all
    others strictly inside (-1, 1).
    """

    w: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        w = self.w
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("mixing matrix must be square")
        if not np.array_equal(w, w.T):
            raise ValueError("mixing matrix must be symmetric")
        if np.any(w < 0):
            raise ValueError("mixing matrix entries must be nonnegative")
        if np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("mixing matrix rows must sum to 1")
        lam = self.eigenvalues
        if lam[-1] > 1.0 + 1e-9 or lam[0] <= -1.0:
            raise ValueError("mixing eigenvalues must lie in (-1, 1]")
        if np.sum(lam > 1.0 - ZERO_EIG_TOL) != 1:
            raise ValueError("eigenvalue 1 of the mixing matrix must be simple")

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class SpectralStats:
    """Spectral summary of I - W used by step-size rules and certificates.

    `lambda_max` is the largest eigenvalue of I - W, `lambda_min_nz` the
    smallest eigenvalue above ZERO_EIG_TOL, and `root` the symmetric PSD
    square root of I - W (negative rounding noise clamped to zero).
    """

    lambda_max: float
    lambda_min_nz: float
    root: np.ndarray


def _connected(n: int, edges) -> bool:
    # Plain BFS over adjacency lists.
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    seen[0] = True
    queue = [0]
    while queue:
        v = queue.pop()
        for u in adj[v]:
            if not seen[u]:
                seen[u] = True
                queue.append(u)
    return all(seen)


def _random_spanning_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniformly random labeled tree on n nodes via a random Pruefer sequence."""
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=np.int64)
    for v in seq:
        degree[v] += 1
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, int(v)), max(leaf, int(v))))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, int(v))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((min(u, v), max(u, v)))
    return edges


def build_topology(kind: str, n: int, tau: float | None = None,
                   seed: int | None = None) -> Graph:
    """Build a named topology on n nodes.

    Parameters
    ----------
    kind : {"line", "cycle", "complete", "random"}
        Topology family.  "random" draws a uniformly random spanning tree
        and then adds distinct random non-tree edges until the edge count
        reaches round(tau * n(n-1)/2) (half up).
    n : int
        Number of nodes, n >= 1.
    tau : float, optional
        Edge density in (0, 1]; required for kind="random".
    seed : int, optional
        Seed for the random topology; required for kind="random".
        The same (kind, n, tau, seed) always yields the same edge set.
    """
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    if kind == "line":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        edges = [(i, i + 1) for i in range(n - 1)]
        if n >= 3:
            edges.append((0, n - 1))
    elif kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "random":
        if tau is None or not (0.0 < tau <= 1.0):
            raise ValueError("random topology needs tau in (0, 1]")
        if seed is None:
            raise ValueError("random topology needs a seed")
        max_edges = n * (n - 1) // 2
        target = int(math.floor(tau * max_edges + 0.5))
        if target < n - 1:
            raise ValueError(
                f"edge budget {target} cannot connect {n} nodes (need >= {n - 1})")
        target = min(target, max_edges)
        rng = np.random.default_rng(seed)
        tree = _random_spanning_tree(n, rng)
        chosen = set(tree)
        rest = [(i, j) for i in range(n) for j in range(i + 1, n)
                if (i, j) not in chosen]
        extra = target - len(tree)
        if extra > 0:
            picks = rng.choice(len(rest), size=extra, replace=False)
            chosen.update(rest[k] for k in picks)
        edges = sorted(chosen)
    else:
        raise ValueError(f"unknown topology kind {kind!r}")
    return Graph(n=n, edges=tuple(sorted(edges)))


def metropolis_weights(graph: Graph) -> MixingMatrix:
    """Metropolis mixing matrix: w_ij = 1 / (1 + max(d_i, d_j)) on edges.

    Diagonal entries absorb the remainder so each row sums to one exactly.
    """
    n = graph.n
    d = graph.degrees
    w = np.zeros((n, n))
    for i, j in graph.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(d[i], d[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    lam = np.linalg.eigvalsh(w)
    return MixingMatrix(w=w, eigenvalues=lam)


def laplacian(graph: Graph) -> np.ndarray:
    """Standard graph Laplacian: diag(degrees) minus adjacency."""
    return np.diag(graph.degrees.astype(float)) - graph.adjacency()


def spectral_stats(mix: MixingMatrix) -> SpectralStats:
    """Extreme eigenvalues and PSD square root of I - W.

    Raises ValueError when the zero eigenvalue of I - W is not simple
    (disconnected network) or when no nonzero eigenvalue exists (n = 1).
    """
    n = mix.n
    lam, vec = np.linalg.eigh(np.eye(n) - mix.w)
    n_zero = int(np.sum(lam < ZERO_EIG_TOL))
    if n_zero != 1:
        raise ValueError(
            f"zero eigenvalue of I - W has multiplicity {n_zero}; "
            "expected exactly one (connected network)")
    nonzero = lam[lam >= ZERO_EIG_TOL]
    if nonzero.size == 0:
        raise ValueError("I - W has no nonzero eigenvalue (need n >= 2)")
    # Eigenvalues below tolerance are exact zeros of I - W; zeroing them
    # keeps the consensus direction in the kernel of the root instead of
    # leaving an inverted sqrt(rounding noise) singular value ~1e-8.
    lam_root = np.where(lam < ZERO_EIG_TOL, 0.0, lam)
    root = (vec * np.sqrt(lam_root)) @ vec.T
    root = 0.5 * (root + root.T)
    return SpectralStats(lambda_max=float(lam[-1]),
                         lambda_min_nz=float(nonzero[0]),
                         root=root)


def topology_to_doc(graph: Graph, mix: MixingMatrix) -> dict:
    """JSON-serializable document pinning a topology and its weights."""
    return {
        "n": graph.n,
        "edges": [[int(i), int(j)] for i, j in graph.edges],
        "weights": [[float(x) for x in row] for row in mix.w],
    }


def topology_from_doc(doc: dict) -> tuple[Graph, MixingMatrix]:
    """Inverse of topology_to_doc; re-validates all invariants."""
    graph = Graph(n=int(doc["n"]),
                  edges=tuple(sorted((int(i), int(j)) for i, j in doc["edges"])))
    w = np.asarray(doc["weights"], dtype=float)
    if w.shape != (graph.n, graph.n):
        raise ValueError("weight matrix shape does not match n")
    lam = np.linalg.eigvalsh(w)
    return graph, MixingMatrix(w=w, eigenvalues=lam)
