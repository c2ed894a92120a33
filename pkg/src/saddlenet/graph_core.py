"""Weighted digraphs and the spectral quantities the flows depend on.

Graphs are immutable: every cached matrix is derived from the edge tuple
once, so spectral data can never go stale.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

ZERO_TOL = 1e-9


class GraphError(ValueError):
    """Base class for malformed graph input."""


class DuplicateEdge(GraphError):
    pass


class NonpositiveWeight(GraphError):
    pass


class IndexOutOfRange(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class EigenSolverFailure(RuntimeError):
    pass


Edge = tuple[int, int, float]


@dataclass(frozen=True)
class WeightedDigraph:
    """Directed graph on vertices ``0..n-1`` with positive edge weights.

    Use :func:`build_digraph` to construct; it validates the edge list.
    ``adjacency[i, j] > 0`` iff ``(i, j)`` is an edge.
    """

    n: int
    edges: tuple[Edge, ...]

    @cached_property
    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            A[i, j] = w
        A.setflags(write=False)
        return A

    @cached_property
    def out_degree(self) -> np.ndarray:
        D = np.diag(self.adjacency.sum(axis=1))
        D.setflags(write=False)
        return D

    @cached_property
    def laplacian(self) -> np.ndarray:
        # diagonal set explicitly so that L @ 1 is exactly zero in floating point
        L = -self.adjacency.copy()
        np.fill_diagonal(L, 0.0)
        L[np.diag_indices(self.n)] = -L.sum(axis=1)
        L.setflags(write=False)
        return L

    @property
    def is_undirected(self) -> bool:
        return bool(np.array_equal(self.adjacency, self.adjacency.T))

    def to_config(self) -> dict:
        return {"n": self.n, "edges": [[i, j, w] for i, j, w in self.edges]}


def build_digraph(
    n: int, edges: Iterable[Sequence[float]], undirected: bool = False
) -> WeightedDigraph:
    """Validate an edge list and build the graph.

    Parameters
    ----------
    n : int
        Vertex count.
    edges : iterable of (tail, head, weight)
        Zero-based indices. The weight may be omitted, defaulting to 1.
    undirected : bool
        Mirror every edge ``(i, j, w)`` as ``(j, i, w)``.
    """
    if n < 1:
        raise GraphError(f"vertex count must be >= 1, got {n}")
    parsed: list[Edge] = []
    for e in edges:
        if len(e) == 2:
            i, j, w = int(e[0]), int(e[1]), 1.0
        elif len(e) == 3:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
        else:
            raise GraphError(f"edge must be (tail, head[, weight]), got {e!r}")
        parsed.append((i, j, w))
        if undirected:
            parsed.append((j, i, w))

    seen: set[tuple[int, int]] = set()
    for i, j, w in parsed:
        if not (0 <= i < n and 0 <= j < n):
            raise IndexOutOfRange(f"edge ({i}, {j}) outside 0..{n - 1}")
        if i == j:
            raise SelfLoop(f"self-loop at vertex {i}")
        if not w > 0:
            raise NonpositiveWeight(f"edge ({i}, {j}) has weight {w}")
        if (i, j) in seen:
            raise DuplicateEdge(f"edge ({i}, {j}) given twice")
        seen.add((i, j))
    return WeightedDigraph(n=n, edges=tuple(parsed))


def graph_from_config(block: dict) -> WeightedDigraph:
    """Build from a ``{n, edges, undirected}`` config block."""
    try:
        n = int(block["n"])
        edges = block.get("edges", [])
    except (KeyError, TypeError) as exc:
        raise GraphError(f"graph block needs 'n' and 'edges': {block!r}") from exc
    return build_digraph(n, edges, undirected=bool(block.get("undirected", False)))


def is_weight_balanced(g: WeightedDigraph, tol: float = ZERO_TOL) -> bool:
    """In-degree equals out-degree at every vertex, i.e. ``1^T L = 0``."""
    return bool(np.max(np.abs(np.ones(g.n) @ g.laplacian)) <= tol)


def is_strongly_connected(g: WeightedDigraph) -> bool:
    if g.n == 1:
        return True
    ncomp, _ = connected_components(
        csr_matrix(g.adjacency), directed=True, connection="strong"
    )
    return ncomp == 1


def kron_lift(g: WeightedDigraph, d: int) -> np.ndarray:
    """``L kron I_d``: the Laplacian acting on stacks of d-dimensional blocks."""
    if d < 1:
        raise ValueError(f"block dimension must be >= 1, got {d}")
    return np.kron(g.laplacian, np.eye(d))


@dataclass(frozen=True)
class SpectralSummary:
    laplacian_eigenvalues: np.ndarray  # complex
    symmetric_eigenvalues: np.ndarray  # eig(L + L^T), ascending
    lambda_star: float  # smallest eigenvalue of L + L^T above tol (nan if none)

    tol: float = ZERO_TOL

    @property
    def zero_multiplicity(self) -> int:
        return int(np.sum(np.abs(self.symmetric_eigenvalues) <= self.tol))


def spectral_summary(g: WeightedDigraph, tol: float = ZERO_TOL) -> SpectralSummary:
    L = g.laplacian
    try:
        lam = np.linalg.eigvals(L)
        sym = np.linalg.eigvalsh(L + L.T)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverFailure(str(exc)) from exc
    sym = np.sort(sym)
    positive = sym[sym > tol]
    lam_star = float(positive[0]) if positive.size else float("nan")
    return SpectralSummary(lam, sym, lam_star, tol)


def lambda_star_min(g1: WeightedDigraph, g2: WeightedDigraph, tol: float = ZERO_TOL) -> float:
    """Smaller of the two spectral gaps ``Lambda_*(L + L^T)``."""
    return min(spectral_summary(g1, tol).lambda_star, spectral_summary(g2, tol).lambda_star)


def laplacian_stability_condition(g: WeightedDigraph, tol: float = ZERO_TOL) -> bool:
    """Check ``sqrt(3)|Im(lam)| <= Re(lam)`` for every nonzero Laplacian eigenvalue.

    This is necessary and sufficient for the zero-payoff saddle flow with
    ``alpha = 1`` to be stable on ``g``.
    """
    lam = spectral_summary(g, tol).laplacian_eigenvalues
    lam = lam[np.abs(lam) > tol]
    return bool(np.all(np.sqrt(3.0) * np.abs(lam.imag) <= lam.real + tol))


# ---------------------------------------------------------------------------
# common topologies


def directed_cycle(n: int, weight: float = 1.0) -> WeightedDigraph:
    return build_digraph(n, [(i, (i + 1) % n, weight) for i in range(n)])


def undirected_cycle(n: int, weight: float = 1.0) -> WeightedDigraph:
    if n == 2:
        return build_digraph(2, [(0, 1, weight)], undirected=True)
    return build_digraph(n, [(i, (i + 1) % n, weight) for i in range(n)], undirected=True)


def undirected_path(n: int, weight: float = 1.0) -> WeightedDigraph:
    return build_digraph(n, [(i, i + 1, weight) for i in range(n - 1)], undirected=True)


def complete_graph(n: int, weight: float = 1.0) -> WeightedDigraph:
    return build_digraph(
        n, [(i, j, weight) for i in range(n) for j in range(i + 1, n)], undirected=True
    )


def random_connected_graph(
    n: int, rng: np.random.Generator, p: float = 0.4
) -> WeightedDigraph:
    """Random spanning tree plus Erdos-Renyi extras, unit weights, undirected."""
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                pairs.add((i, j))
    return build_digraph(n, sorted(pairs), undirected=True)


def random_weight_balanced_digraph(
    n: int, rng: np.random.Generator, extra_cycles: int = 1
) -> WeightedDigraph:
    """Strongly connected weight-balanced digraph built as a sum of directed cycles.

    A Hamiltonian cycle guarantees strong connectivity; each further random
    cycle adds equal in- and out-weight at its vertices, so balance holds.
    Parallel contributions on the same arc are merged into one weight.
    """
    W = np.zeros((n, n))
    ham = rng.permutation(n)
    for k in range(n):
        W[ham[k], ham[(k + 1) % n]] += 1.0
    for _ in range(extra_cycles):
        length = int(rng.integers(2, n + 1))
        cyc = rng.choice(n, size=length, replace=False)
        w = float(rng.integers(1, 3))
        for k in range(length):
            W[cyc[k], cyc[(k + 1) % length]] += w
    edges = [(i, j, W[i, j]) for i in range(n) for j in range(n) if W[i, j] > 0]
    return build_digraph(n, edges)
