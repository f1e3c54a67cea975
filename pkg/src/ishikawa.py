"""
Ishikawa graph parameterization and the full-graph reference solver.

Node U_{i:λ} (λ = 1..ℓ-1) sits in column i; U_{i:ℓ} is the source (node 0)
and U_{i:0} the terminal (node 1). The downward edge e_{i:λ} runs from
U_{i:λ+1} to U_{i:λ} with capacity φ_{i:λ}; upward edges are implicit and
infinite. Cross edge e_{ij:λμ} runs from U_{i:λ} to U_{j:μ}.

A labeling x cuts column i at e_{i:x_i}: U_{i:λ} is on the source side
iff λ > x_i.
"""
import logging
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from energy import EnergyModel, first_violation, second_differences
from errors import InternalInvariantError, InvalidArgumentError, SubmodularityError
from repar import MultiLabelParams
from solve_report import SolveReport, StorageMeter

try:
    import networkx as nx
    HAS_NETWORKX = True
except ImportError:
    HAS_NETWORKX = False

logger = logging.getLogger(__name__)

SOURCE = 0
SINK = 1

# arc kinds
TOP, DOWN, UP, CROSS = 0, 1, 2, 3

Edge = Tuple[int, int]


def node_id(i: int, lam: int, num_labels: int) -> int:
    """Dense index of U_{i:λ}, λ in 1..ℓ-1"""
    return 2 + i * (num_labels - 1) + lam - 1


def node_of(u: int, num_labels: int) -> Tuple[int, int]:
    k = u - 2
    return k // (num_labels - 1), k % (num_labels - 1) + 1


def sorted_adjacency(num_vertices: int, edges: Sequence[Edge]) -> List[List[int]]:
    """Neighbours of every vertex in ascending order"""
    adjacency: List[List[int]] = [[] for _ in range(num_vertices)]
    for i, j in edges:
        adjacency[i].append(j)
        adjacency[j].append(i)
    for neighbours in adjacency:
        neighbours.sort()
    return adjacency


def visit_order(adjacency: List[List[int]]) -> List[List[int]]:
    """Per vertex: its neighbours and itself, ascending (search tie-break order)"""
    return [sorted(neighbours + [i]) for i, neighbours in enumerate(adjacency)]


def graph_size(num_vertices: int, num_edges: int, num_labels: int) -> Tuple[int, int]:
    """(|𝒱̂|, |ℰ̂|) of the full Ishikawa graph, counting both cross orientations"""
    nodes = num_vertices * (num_labels - 1) + 2
    vertical = num_vertices * num_labels + num_vertices * (num_labels - 1)
    cross = 2 * (num_labels - 1) ** 2 * num_edges
    return nodes, vertical + cross


def full_graph_values(num_vertices: int, num_edges: int, num_labels: int) -> int:
    """Integers needed to hold every finite residual capacity explicitly"""
    return num_vertices * num_labels + 2 * (num_labels - 1) ** 2 * num_edges


class _SymbolicCross:
    """
    Cross capacities computed from the model on request.

    Regularizer specs share one array per (weight, kind, delta); explicit
    tables are expanded per call.
    """

    def __init__(self, model: EnergyModel):
        self._model = model
        self._cache: Dict[Tuple[int, str, int], np.ndarray] = {}
        self._rows: Dict[Tuple[int, str, int], List[List[int]]] = {}

    def __call__(self, edge_index: int) -> np.ndarray:
        spec = self._model.pairwise[edge_index]
        key = spec.symbolic_key
        if key is not None and key in self._cache:
            return self._cache[key]
        caps = second_differences(spec.table_for(self._model.num_labels))
        caps.setflags(write=False)
        if key is not None:
            self._cache[key] = caps
        return caps

    def rows(self, edge_index: int) -> List[List[int]]:
        """Same capacities as nested lists; shared per regularizer, never to be mutated"""
        key = self._model.pairwise[edge_index].symbolic_key
        if key is None:
            return self(edge_index).tolist()
        rows = self._rows.get(key)
        if rows is None:
            rows = self._rows[key] = self(edge_index).tolist()
        return rows


class IshikawaCapacities:
    """
    Column and cross capacities of an Ishikawa graph plus an energy offset.

    Cross capacities are either materialized (a dict holding both
    orientations of every edge) or produced on demand by a provider for the
    stored orientation, with the reverse orientation all zero.
    """

    def __init__(
        self,
        num_vertices: int,
        num_labels: int,
        edges: Sequence[Edge],
        column: np.ndarray,
        constant: int = 0,
        cross: Optional[Dict[Edge, np.ndarray]] = None,
        cross_provider: Optional[Callable[[int], np.ndarray]] = None
    ):
        if num_labels < 2:
            raise InvalidArgumentError(f"need at least 2 labels, got {num_labels}")
        self.num_vertices = num_vertices
        self.num_labels = num_labels
        self.edges: Tuple[Edge, ...] = tuple((int(i), int(j)) for i, j in edges)
        self.column = np.asarray(column, dtype=np.int64).reshape(num_vertices, num_labels)
        self.constant = int(constant)
        self._edge_index = {edge: e for e, edge in enumerate(self.edges)}
        self._zero = np.zeros((num_labels - 1, num_labels - 1), dtype=np.int64)
        self._zero.setflags(write=False)
        self._zero_rows = self._zero.tolist()
        if cross is None and cross_provider is None:
            cross = {}
        self.cross = cross
        self._provider = cross_provider

    @property
    def is_materialized(self) -> bool:
        return self.cross is not None

    def edge_index(self, i: int, j: int) -> Optional[int]:
        e = self._edge_index.get((i, j))
        if e is None:
            e = self._edge_index.get((j, i))
        return e

    def cross_caps(self, i: int, j: int) -> np.ndarray:
        """φ_{ij:λμ} as an (ℓ-1)×(ℓ-1) array indexed [λ-1, μ-1]"""
        if self.cross is not None:
            caps = self.cross.get((i, j))
            if caps is None:
                if self.edge_index(i, j) is None:
                    raise InvalidArgumentError(f"({i},{j}) is not an edge")
                return self._zero
            return caps
        e = self._edge_index.get((i, j))
        if e is not None:
            return self._provider(e)
        if (j, i) in self._edge_index:
            return self._zero
        raise InvalidArgumentError(f"({i},{j}) is not an edge")

    def cross_rows(self, i: int, j: int) -> List[List[int]]:
        """
        cross_caps(i, j) as nested lists, indexed [λ-1][μ-1].

        Rows of symbolic regularizers and of the zero orientation are shared
        between calls; callers copy before writing.
        """
        if self.cross is None:
            e = self._edge_index.get((i, j))
            if e is not None and hasattr(self._provider, "rows"):
                return self._provider.rows(e)
            if e is None and (j, i) in self._edge_index:
                return self._zero_rows
        caps = self.cross_caps(i, j)
        if caps is self._zero:
            return self._zero_rows
        return np.asarray(caps).tolist()

    def materialize(self) -> "IshikawaCapacities":
        """Copy with every cross orientation held explicitly"""
        cross = {}
        for i, j in self.edges:
            cross[(i, j)] = np.array(self.cross_caps(i, j), dtype=np.int64)
            cross[(j, i)] = np.array(self.cross_caps(j, i), dtype=np.int64)
        return IshikawaCapacities(self.num_vertices, self.num_labels, self.edges,
                                  self.column.copy(), self.constant, cross=cross)

    def value_count(self) -> int:
        return full_graph_values(self.num_vertices, len(self.edges), self.num_labels)

    def neighbours(self) -> List[List[int]]:
        return sorted_adjacency(self.num_vertices, self.edges)

    def to_networkx(self):
        """
        Export the graph as a networkx DiGraph.

        Finite edges carry a 'capacity' attribute; upward edges carry none,
        which networkx treats as infinite. Nodes are 's', 't' and (i, λ).

        Raises:
            ImportError: networkx is not installed
        """
        if not HAS_NETWORKX:
            raise ImportError("networkx is required for graph export")
        ell = self.num_labels

        def name(i: int, lam: int):
            if lam == ell:
                return "s"
            if lam == 0:
                return "t"
            return (i, lam)

        graph = nx.DiGraph()
        graph.add_node("s")
        graph.add_node("t")
        for i in range(self.num_vertices):
            for lam in range(ell):
                graph.add_edge(name(i, lam + 1), name(i, lam), capacity=int(self.column[i, lam]))
            for lam in range(1, ell - 1):
                graph.add_edge((i, lam), (i, lam + 1))
        for i, j in self.edges:
            for a, b in ((i, j), (j, i)):
                caps = self.cross_caps(a, b)
                for lam, mu in zip(*np.nonzero(caps)):
                    graph.add_edge((a, int(lam) + 1), (b, int(mu) + 1), capacity=int(caps[lam, mu]))
        return graph


@dataclass
class ResidualState:
    """Residual capacities after a max-flow run"""
    caps: IshikawaCapacities
    augmentations: int = 0
    total_flow: int = 0


def phi_from_theta(model: EnergyModel, materialize: bool = True) -> IshikawaCapacities:
    """
    Build Ishikawa capacities for a submodular energy.

    Cross capacities go in the stored orientation only:
    φ_{ij:λμ} = θ(λ-1,μ) + θ(λ,μ-1) − θ(λ,μ) − θ(λ-1,μ-1). The remainder of
    θ_ij is θ(λ,0) + θ(ℓ-1,μ) − θ(ℓ-1,0), which moves into the unaries and the
    constant. Each column is then shifted to minimum 0.

    Args:
        model: The energy
        materialize: Hold cross capacities explicitly; otherwise they are
            recomputed from the model when asked for

    Raises:
        SubmodularityError: some φ_{ij:λμ} would be negative
    """
    ell = model.num_labels
    unary = model.unary.astype(np.int64).copy()
    constant = 0
    for e, (i, j) in enumerate(model.edges):
        spec = model.pairwise[e]
        violation = first_violation(spec, ell)
        if violation is not None:
            lam, mu, value = violation
            raise SubmodularityError(i, j, lam + 1, mu + 1, value)
        table = spec.table_for(ell)
        unary[i] += table[:, 0]
        unary[j] += table[ell - 1, :]
        constant -= int(table[ell - 1, 0])

    if model.num_vertices:
        shifts = unary.min(axis=1)
        column = unary - shifts[:, None]
        constant += int(shifts.sum())
    else:
        column = unary

    provider = _SymbolicCross(model)
    caps = IshikawaCapacities(model.num_vertices, ell, model.edges, column, constant,
                              cross_provider=provider)
    return caps.materialize() if materialize else caps


def _strict_lower_left(caps: np.ndarray, num_labels: int) -> np.ndarray:
    """T[λ, μ] = Σ_{λ'>λ, μ'≤μ} caps[λ'-1, μ'-1] over λ, μ in 0..ℓ-1"""
    padded = np.zeros((num_labels, num_labels), dtype=np.int64)
    padded[1:, 1:] = caps
    rows = np.cumsum(padded, axis=1)
    suffix = np.cumsum(rows[::-1], axis=0)[::-1]
    result = np.zeros_like(padded)
    result[:-1] = suffix[1:]
    return result


def theta_from_phi(caps: IshikawaCapacities) -> MultiLabelParams:
    """
    Recover θ from capacities.

    θ_i(λ) = φ_{i:λ};
    θ_ij(λ,μ) = Σ_{λ'>λ,μ'≤μ} φ_{ij:λ'μ'} + Σ_{λ'≤λ,μ'>μ} φ_{ji:μ'λ'}.
    """
    ell = caps.num_labels
    pairwise = []
    for i, j in caps.edges:
        forward = _strict_lower_left(caps.cross_caps(i, j), ell)
        backward = _strict_lower_left(caps.cross_caps(j, i), ell)
        pairwise.append(forward + backward.T)
    return MultiLabelParams(ell, caps.edges, caps.column.copy(), tuple(pairwise))


def cut_cost(caps: IshikawaCapacities, x: Sequence[int]) -> int:
    """Capacity of the cut induced by labeling x (never includes an upward edge)"""
    labels = np.asarray(x, dtype=np.int64)
    if labels.shape != (caps.num_vertices,):
        raise InvalidArgumentError(
            f"labeling has shape {labels.shape}, expected ({caps.num_vertices},)")
    if labels.size and (labels.min() < 0 or labels.max() >= caps.num_labels):
        raise InvalidArgumentError(f"labels must lie in 0..{caps.num_labels - 1}")
    total = int(caps.column[np.arange(caps.num_vertices), labels].sum()) if caps.num_vertices else 0
    for i, j in caps.edges:
        xi, xj = int(labels[i]), int(labels[j])
        total += int(caps.cross_caps(i, j)[xi:, :xj].sum())
        total += int(caps.cross_caps(j, i)[xj:, :xi].sum())
    return total


class _WorkingResidual:
    """
    List-based residual graph used by the reference solver.

    out[i] holds (id of U_{n:1}, rows of φ_{in}) for every neighbour n of
    column i, ascending.
    """

    def __init__(self, caps: IshikawaCapacities):
        self.num_vertices = caps.num_vertices
        self.num_labels = caps.num_labels
        self.edges = caps.edges
        self.constant = caps.constant
        self.column: List[List[int]] = caps.column.tolist()
        self.cross: Dict[Edge, List[List[int]]] = {}
        for i, j in caps.edges:
            self.cross[(i, j)] = np.asarray(caps.cross_caps(i, j)).tolist()
            self.cross[(j, i)] = np.asarray(caps.cross_caps(j, i)).tolist()
        n = caps.num_labels - 1
        self.out: List[List[Tuple[int, List[List[int]]]]] = [
            [(2 + k * n, self.cross[(i, k)]) for k in neighbours]
            for i, neighbours in enumerate(sorted_adjacency(caps.num_vertices, caps.edges))
        ]
        self.num_nodes = 2 + caps.num_vertices * n

    def levels(self, stop_at_sink: bool = True) -> List[int]:
        """BFS depth of every node from node 0 over positive residual edges, -1 if unreached"""
        n = self.num_labels - 1
        column = self.column
        level = [-1] * self.num_nodes
        level[SOURCE] = 0
        queue = deque()
        for i in range(self.num_vertices):
            if column[i][n] > 0:
                top = 2 + i * n + n - 1
                level[top] = 1
                queue.append(top)
        while queue:
            u = queue.popleft()
            depth = level[u] + 1
            if stop_at_sink and 0 <= level[SINK] < depth:
                break
            i, k = divmod(u - 2, n)
            if column[i][k] > 0:
                v = SINK if k == 0 else u - 1
                if level[v] < 0:
                    level[v] = depth
                    if v != SINK:
                        queue.append(v)
            if k < n - 1 and level[u + 1] < 0:
                level[u + 1] = depth
                queue.append(u + 1)
            for base, rows in self.out[i]:
                for m, c in enumerate(rows[k]):
                    if c > 0 and level[base + m] < 0:
                        level[base + m] = depth
                        queue.append(base + m)
        return level

    def reachable(self) -> List[bool]:
        return [depth >= 0 for depth in self.levels(stop_at_sink=False)]

    def capacity(self, u: int, v: int) -> Optional[int]:
        """Residual of the edge u→v; None for an infinite upward edge"""
        n = self.num_labels - 1
        if u == SOURCE:
            return self.column[(v - 2) // n][n]
        i, k = divmod(u - 2, n)
        if v == SINK:
            return self.column[i][0]
        j, m = divmod(v - 2, n)
        if i != j:
            return self.cross[(i, j)][k][m]
        return self.column[i][k] if m < k else None

    def push(self, u: int, v: int, alpha: int):
        n = self.num_labels - 1
        if u == SOURCE:
            self.column[(v - 2) // n][n] -= alpha
            return
        i, k = divmod(u - 2, n)
        if v == SINK:
            self.column[i][0] -= alpha
            return
        j, m = divmod(v - 2, n)
        if i != j:
            self.cross[(i, j)][k][m] -= alpha
            self.cross[(j, i)][m][k] += alpha
        elif m < k:
            self.column[i][k] -= alpha
        else:
            self.column[i][m] += alpha

    def next_admissible(self, u: int, level: List[int], current: List[int]) -> int:
        """
        Head of the first admissible edge out of u from its current edge on, or -1.

        Edges out of U_{i:λ} are numbered 0 (downward), 1 (upward), then
        ℓ-1 cross edges per neighbour; current[u] keeps the position.
        """
        n = self.num_labels - 1
        slot = current[u]
        if u == SOURCE:
            column = self.column
            while slot < self.num_vertices and not (column[slot][n] > 0 and level[2 + slot * n + n - 1] == 1):
                slot += 1
            current[u] = slot
            return 2 + slot * n + n - 1 if slot < self.num_vertices else -1
        depth = level[u] + 1
        if depth > level[SINK]:
            return -1
        i, k = divmod(u - 2, n)
        if slot == 0:
            if self.column[i][k] > 0:
                v = SINK if k == 0 else u - 1
                if level[v] == depth:
                    return v
            slot = 1
        if slot == 1:
            if k < n - 1 and level[u + 1] == depth:
                current[u] = 1
                return u + 1
            slot = 2
        out = self.out[i]
        first, start = divmod(slot - 2, n)
        for index in range(first, len(out)):
            base, rows = out[index]
            row = rows[k]
            for m in range(start if index == first else 0, n):
                if row[m] > 0 and level[base + m] == depth:
                    current[u] = 2 + index * n + m
                    return base + m
        current[u] = 2 + len(out) * n
        return -1

    def to_capacities(self) -> IshikawaCapacities:
        cross = {key: np.array(rows, dtype=np.int64).reshape(self.num_labels - 1, self.num_labels - 1)
                 for key, rows in self.cross.items()}
        return IshikawaCapacities(self.num_vertices, self.num_labels, self.edges,
                                  np.array(self.column, dtype=np.int64), self.constant, cross=cross)


def labels_from_reachable(seen: Sequence[bool], num_vertices: int, num_labels: int) -> List[int]:
    """
    Read labels off a source-reachable node set.

    x_i is the λ with U_{i:λ+1} reachable and U_{i:λ} not.

    Raises:
        InternalInvariantError: the terminal is reachable or a column's
            reachable set is not upward-closed
    """
    if seen[SINK]:
        raise InternalInvariantError("terminal is reachable from the source; flow is not maximal")
    labels = []
    for i in range(num_vertices):
        lowest = num_labels
        for lam in range(num_labels - 1, 0, -1):
            if seen[node_id(i, lam, num_labels)]:
                lowest = lam
            else:
                break
        for lam in range(1, lowest):
            if seen[node_id(i, lam, num_labels)]:
                raise InternalInvariantError(
                    f"reachable set of column {i} is not upward-closed at level {lam}")
        labels.append(lowest - 1)
    return labels


def has_augmenting_path(caps: IshikawaCapacities) -> bool:
    """Whether the terminal is reachable over positive residual edges"""
    return _WorkingResidual(caps).reachable()[SINK]


def get_labelling_from_reachability(residual: ResidualState) -> List[int]:
    """Labeling from source reachability in a maximal residual graph"""
    work = _WorkingResidual(residual.caps)
    return labels_from_reachable(work.reachable(), work.num_vertices, work.num_labels)


def _blocking_flow(work: _WorkingResidual, level: List[int]) -> Tuple[int, int]:
    """Push shortest augmenting paths until the level graph is exhausted"""
    current = [0] * work.num_nodes
    pushed = 0
    paths = 0
    while True:
        stack = [SOURCE]
        while stack and stack[-1] != SINK:
            v = work.next_admissible(stack[-1], level, current)
            if v < 0:
                level[stack.pop()] = -1
            else:
                stack.append(v)
        if not stack:
            return pushed, paths
        steps = list(zip(stack, stack[1:]))
        alpha = min(c for c in (work.capacity(u, v) for u, v in steps) if c is not None)
        if alpha <= 0:
            raise InternalInvariantError("non-positive bottleneck on an admissible path")
        for u, v in steps:
            work.push(u, v, alpha)
        pushed += alpha
        paths += 1


def reference_maxflow(caps: IshikawaCapacities) -> Tuple[ResidualState, List[int], int, int]:
    """
    Max-flow on the full residual Ishikawa graph.

    Shortest augmenting paths found phase by phase (BFS level graph, then a
    blocking flow pushed one path at a time), so every augmenting path is a
    shortest one in the current residual. Each path counts as one
    augmentation.

    Returns:
        (residual state, labeling, flow total, augmentations)
    """
    work = _WorkingResidual(caps)
    total = 0
    augmentations = 0
    while True:
        level = work.levels()
        if level[SINK] < 0:
            break
        pushed, paths = _blocking_flow(work, level)
        total += pushed
        augmentations += paths
        logger.debug("reference phase: %d paths, %d flow", paths, pushed)
    labels = labels_from_reachable(work.reachable(), work.num_vertices, work.num_labels)
    state = ResidualState(work.to_capacities(), augmentations, total)
    return state, labels, total, augmentations


def solve_reference(model: EnergyModel) -> SolveReport:
    """Full-graph oracle wrapped as a SolveReport"""
    started = time.perf_counter()
    meter = StorageMeter()
    caps = phi_from_theta(model, materialize=True)
    meter.set_persistent("residual", caps.value_count())
    num_nodes = 2 + model.num_vertices * (model.num_labels - 1)
    meter.note_transient(2 * num_nodes)  # levels + current arcs
    state, labels, total, augmentations = reference_maxflow(caps)
    elapsed = (time.perf_counter() - started) * 1000.0
    logger.info("reference: energy %d after %d augmentations", total + caps.constant, augmentations)
    return SolveReport(
        solver="reference",
        energy=total + caps.constant,
        flow_total=total,
        constant=caps.constant,
        labeling=labels,
        augmentations=augmentations,
        stored_values_peak=meter.persistent_peak,
        transient_values_peak=meter.transient_peak,
        wall_time_ms=elapsed,
    )
