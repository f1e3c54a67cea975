"""
Memory-efficient flow encoding.

Instead of one flow value per cross edge (O(ℓ²) per MRF edge) the solvers
keep, per directed edge (i, j), the exit-flows Σ_{ij:λ} = Σ_μ ψ_{ij:λμ}
(O(ℓ)), plus one source-flow per column. Column flows follow by a top-down
recursion, and a compatible cross flow for one edge is recovered on demand
by a small max-flow over that edge's 2(ℓ-1) nodes.
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import CorruptedStoreError, InvalidArgumentError
from ishikawa import Edge, IshikawaCapacities, sorted_adjacency

logger = logging.getLogger(__name__)

Matrix = List[List[int]]


class FlowStore:
    """
    Source-flows, exit-flows and the accumulated s-t flow.

    exit[(i, j)][λ-1] holds Σ_{ij:λ}; both orientations of every edge are
    present.
    """

    def __init__(self, num_vertices: int, num_labels: int, edges: Sequence[Edge]):
        self.num_vertices = num_vertices
        self.num_labels = num_labels
        self.edges: Tuple[Edge, ...] = tuple(edges)
        self.source_flow: List[int] = [0] * num_vertices
        self.exit: Dict[Edge, List[int]] = {}
        for i, j in self.edges:
            self.exit[(i, j)] = [0] * (num_labels - 1)
            self.exit[(j, i)] = [0] * (num_labels - 1)
        self.neighbours = sorted_adjacency(num_vertices, self.edges)
        self.total_flow = 0

    def value_count(self) -> int:
        """Stored integers: source-flows, exit-flows, total"""
        return self.num_vertices + 2 * (self.num_labels - 1) * len(self.edges) + 1

    def copy(self) -> "FlowStore":
        clone = FlowStore.__new__(FlowStore)
        clone.num_vertices = self.num_vertices
        clone.num_labels = self.num_labels
        clone.edges = self.edges
        clone.source_flow = list(self.source_flow)
        clone.exit = {key: list(values) for key, values in self.exit.items()}
        clone.neighbours = self.neighbours
        clone.total_flow = self.total_flow
        return clone


@dataclass
class FlowDelta:
    """Net cross flow ψ_{ij:λμ} of one edge, indexed [λ-1][μ-1]; ψ_ji is −ψ_ijᵀ"""
    i: int
    j: int
    psi: np.ndarray

    def reverse(self) -> np.ndarray:
        return -self.psi.T


@dataclass
class EdgeReconstruction:
    """Residual cross capacities of one edge after reconstruction"""
    phi_ij: np.ndarray
    phi_ji: np.ndarray
    flow: FlowDelta
    used_fallback: bool
    transient_values: int


def record_cross_flow(store: FlowStore, i: int, j: int, lam: int, mu: int, alpha: int):
    """Account α units pushed along e_{ij:λμ}: Σ_{ij:λ} += α, Σ_{ji:μ} −= α"""
    if not (1 <= lam < store.num_labels and 1 <= mu < store.num_labels):
        raise InvalidArgumentError(f"levels ({lam},{mu}) outside 1..{store.num_labels - 1}")
    forward = store.exit.get((i, j))
    if forward is None:
        raise InvalidArgumentError(f"({i},{j}) is not an edge")
    forward[lam - 1] += alpha
    store.exit[(j, i)][mu - 1] -= alpha


def column_flows(store: FlowStore, i: int) -> List[int]:
    """
    Flow on each downward edge of column i, ψ_{i:λ} for λ = 0..ℓ-1.

    ψ_{i:ℓ-1} is the source-flow; ψ_{i:λ-1} = ψ_{i:λ} − Σ_j Σ_{ij:λ}.
    """
    ell = store.num_labels
    flows = [0] * ell
    flows[ell - 1] = store.source_flow[i]
    outgoing = [store.exit[(i, j)] for j in store.neighbours[i]]
    for lam in range(ell - 1, 0, -1):
        flows[lam - 1] = flows[lam] - sum(sigma[lam - 1] for sigma in outgoing)
    return flows


def _bfs_augment(capacity: Matrix, source: int, sink: int) -> int:
    """Edmonds-Karp on a small dense residual matrix; returns pushed flow"""
    size = len(capacity)
    pushed = 0
    while True:
        parent = [-1] * size
        parent[source] = source
        queue = deque([source])
        while queue and parent[sink] < 0:
            u = queue.popleft()
            row = capacity[u]
            for v in range(size):
                if parent[v] < 0 and row[v] > 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] < 0:
            return pushed
        alpha = None
        v = sink
        while v != source:
            u = parent[v]
            alpha = capacity[u][v] if alpha is None else min(alpha, capacity[u][v])
            v = u
        v = sink
        while v != source:
            u = parent[v]
            capacity[u][v] -= alpha
            capacity[v][u] += alpha
            v = u
        pushed += alpha


def reconstruct_pair(
    phi0_ij: Matrix,
    phi0_ji: Matrix,
    sigma_ij: Sequence[int],
    sigma_ji: Sequence[int],
    pin_ij: Optional[Sequence[int]] = None,
    pin_ji: Optional[Sequence[int]] = None,
    greedy: bool = True
) -> Tuple[Matrix, Matrix, Matrix, bool]:
    """
    List-based core of reconstruct_edge.

    pin_ij[λ-1] = p forces φ'_{ij:λμ} = 0 for every μ < p (p = ℓ forces the
    whole row); pin_ji likewise for the reverse orientation.

    Returns:
        (φ'_ij, φ'_ji, ψ'_ij, used_fallback)
    """
    n = len(sigma_ij)
    net = [[0] * n for _ in range(n)]
    pinned = pin_ij is not None or pin_ji is not None
    # without pins every row is the same read-only all-False row
    fixed = [[False] * n for _ in range(n)] if pinned else [[False] * n] * n
    supply_i = list(sigma_ij)
    supply_j = list(sigma_ji)

    if sum(supply_i) + sum(supply_j) != 0:
        raise CorruptedStoreError(
            f"exit-flows do not balance: supply {sum(supply_i)} vs {-sum(supply_j)}")

    if pin_ij is not None:
        for l in range(n):
            for m in range(min(n, pin_ij[l] - 1)):
                net[l][m] = phi0_ij[l][m]
                fixed[l][m] = True
    if pin_ji is not None:
        for m in range(n):
            for l in range(min(n, pin_ji[m] - 1)):
                value = -phi0_ji[m][l]
                if fixed[l][m] and net[l][m] != value:
                    raise CorruptedStoreError(
                        f"pins disagree on cross edge ({l + 1},{m + 1})")
                net[l][m] = value
                fixed[l][m] = True
    if pinned:
        for l in range(n):
            for m in range(n):
                if fixed[l][m] and net[l][m]:
                    supply_i[l] -= net[l][m]
                    supply_j[m] += net[l][m]

    if greedy:
        # supplies at column i toward demands at column j, highest levels first
        for l in range(n - 1, -1, -1):
            if supply_i[l] <= 0:
                continue
            for m in range(n - 1, -1, -1):
                if supply_j[m] >= 0 or fixed[l][m]:
                    continue
                room = phi0_ij[l][m] - net[l][m]
                if room <= 0:
                    continue
                amount = min(supply_i[l], -supply_j[m], room)
                net[l][m] += amount
                supply_i[l] -= amount
                supply_j[m] += amount
                if supply_i[l] == 0:
                    break
        for m in range(n - 1, -1, -1):
            if supply_j[m] <= 0:
                continue
            for l in range(n - 1, -1, -1):
                if supply_i[l] >= 0 or fixed[l][m]:
                    continue
                room = phi0_ji[m][l] + net[l][m]
                if room <= 0:
                    continue
                amount = min(supply_j[m], -supply_i[l], room)
                net[l][m] -= amount
                supply_j[m] -= amount
                supply_i[l] += amount
                if supply_j[m] == 0:
                    break

    used_fallback = any(s > 0 for s in supply_i) or any(s > 0 for s in supply_j)
    if used_fallback:
        # nodes: 0 source, 1 terminal, 2+l for U_{i:l+1}, 2+n+m for U_{j:m+1}
        size = 2 * n + 2
        capacity = [[0] * size for _ in range(size)]
        for l in range(n):
            if supply_i[l] > 0:
                capacity[0][2 + l] = supply_i[l]
            elif supply_i[l] < 0:
                capacity[2 + l][1] = -supply_i[l]
        for m in range(n):
            if supply_j[m] > 0:
                capacity[0][2 + n + m] = supply_j[m]
            elif supply_j[m] < 0:
                capacity[2 + n + m][1] = -supply_j[m]
        for l in range(n):
            for m in range(n):
                if fixed[l][m]:
                    continue
                capacity[2 + l][2 + n + m] = phi0_ij[l][m] - net[l][m]
                capacity[2 + n + m][2 + l] = phi0_ji[m][l] + net[l][m]
        required = sum(capacity[0])
        pushed = _bfs_augment(capacity, 0, 1)
        if pushed != required:
            raise CorruptedStoreError(
                f"reconstruction saturates only {pushed} of {required} supply")
        for l in range(n):
            for m in range(n):
                if not fixed[l][m]:
                    net[l][m] = phi0_ij[l][m] - capacity[2 + l][2 + n + m]
        logger.debug("reconstruction needed the augmenting-path fallback (%d units)", required)

    phi_ij = [list(row) for row in phi0_ij]
    phi_ji = [list(row) for row in phi0_ji]
    for l, row in enumerate(net):
        if any(row):
            for m, value in enumerate(row):
                if value:
                    phi_ij[l][m] -= value
                    phi_ji[m][l] += value
    return phi_ij, phi_ji, net, used_fallback


def reconstruct_edge(
    phi0_ij: np.ndarray,
    phi0_ji: np.ndarray,
    sigma_ij: Sequence[int],
    sigma_ji: Sequence[int],
    i: int = 0,
    j: int = 1,
    pin_ij: Optional[Sequence[int]] = None,
    pin_ji: Optional[Sequence[int]] = None,
    greedy: bool = True
) -> EdgeReconstruction:
    """
    Recover residual cross capacities of one edge from its exit-flows.

    Positive exit-flows are supplies, negative ones demands; arcs
    U_{i:λ}→U_{j:μ} carry φ⁰_{ij:λμ} and U_{j:μ}→U_{i:λ} carry φ⁰_{ji:μλ}.
    A greedy pass pairs supplies (descending level) with demands
    (descending level) over direct arcs; leftover supply is routed by BFS
    augmenting paths. The result is φ' = φ⁰ − ψ' with the reverse orientation
    gaining ψ'.

    Args:
        phi0_ij: Initial capacities φ⁰_{ij}, (ℓ-1)×(ℓ-1), indexed [λ-1, μ-1]
        phi0_ji: Initial capacities φ⁰_{ji}, indexed [μ-1, λ-1]
        sigma_ij: Σ_{ij:λ} for λ = 1..ℓ-1
        sigma_ji: Σ_{ji:μ} for μ = 1..ℓ-1
        i, j: Endpoint labels for the returned FlowDelta
        pin_ij, pin_ji: Optional per-level lowest levels allowed to keep
            positive residual (see reconstruct_pair)
        greedy: Run the greedy pass before the augmenting-path fallback

    Raises:
        CorruptedStoreError: the supply cannot be fully routed
    """
    a = np.asarray(phi0_ij, dtype=np.int64)
    b = np.asarray(phi0_ji, dtype=np.int64)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n, n) or len(sigma_ij) != n or len(sigma_ji) != n:
        raise InvalidArgumentError("capacity and exit-flow dimensions disagree")
    phi_ij, phi_ji, net, used_fallback = reconstruct_pair(
        a.tolist(), b.tolist(), list(sigma_ij), list(sigma_ji), pin_ij, pin_ji, greedy)
    transient = 3 * n * n + ((2 * n + 2) ** 2 if used_fallback else 0)
    return EdgeReconstruction(
        phi_ij=np.array(phi_ij, dtype=np.int64).reshape(n, n),
        phi_ji=np.array(phi_ji, dtype=np.int64).reshape(n, n),
        flow=FlowDelta(i, j, np.array(net, dtype=np.int64).reshape(n, n)),
        used_fallback=used_fallback,
        transient_values=transient,
    )


def full_residual_from_store(phi0: IshikawaCapacities, store: FlowStore) -> IshikawaCapacities:
    """
    Explicit residual graph for the flow encoded in store.

    Columns come from column_flows, cross capacities from one
    reconstruct_edge per edge.

    Raises:
        CorruptedStoreError: a column residual would be negative or an edge
            cannot be reconstructed
    """
    ell = phi0.num_labels
    column = phi0.column.astype(np.int64).copy()
    for i in range(phi0.num_vertices):
        column[i] -= np.asarray(column_flows(store, i), dtype=np.int64)
        if column[i].min() < 0:
            raise CorruptedStoreError(f"column {i} residual is negative: {column[i].tolist()}")
    cross = {}
    for i, j in phi0.edges:
        rebuilt = reconstruct_edge(phi0.cross_caps(i, j), phi0.cross_caps(j, i),
                                   store.exit[(i, j)], store.exit[(j, i)], i, j)
        cross[(i, j)] = rebuilt.phi_ij
        cross[(j, i)] = rebuilt.phi_ji
    return IshikawaCapacities(phi0.num_vertices, ell, phi0.edges, column, phi0.constant, cross=cross)
