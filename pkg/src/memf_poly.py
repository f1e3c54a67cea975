"""
Polynomial-time memory-efficient max-flow.

The search runs on the lower-graph: columns plus, for every node and
neighbouring column, only the lowest positive cross edge. Any higher target
in that column is reachable for free through the infinite upward edges, so
the lower-graph has an augmenting path exactly when the residual graph has
one, with the same 0/1 distances.

Cross residuals are never stored. When a recorded lowest edge saturates the
edge's residual is reconstructed from the exit-flows and both orientations'
records are rebuilt.

Outside diagnostics the search is phased: one 0-1 BFS labels the nodes and
every path of admissible arcs under those labels is pushed before the next
BFS.
"""
import logging
import time
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from energy import EnergyModel
from errors import InternalInvariantError
from flowcodec import FlowStore, column_flows, full_residual_from_store, reconstruct_pair, record_cross_flow
from ishikawa import (CROSS, DOWN, SINK, SOURCE, TOP, UP, Edge, IshikawaCapacities, graph_size,
                      has_augmenting_path, labels_from_reachable, node_of, phi_from_theta,
                      sorted_adjacency, visit_order)
from solve_report import SolveReport, SolverDiagnostics, StorageMeter

logger = logging.getLogger(__name__)

UNREACHED = 1 << 62

KIND_NAMES = {TOP: "column-down", DOWN: "column-down", UP: "infinite-up", CROSS: "cross"}


class LowerGraph:
    """
    Column residuals and lowest-cross-edge records.

    record_level[(i, j)][λ-1] is the target level μ of the lowest positive
    cross edge from U_{i:λ} into column j (0 when there is none) and
    record_cap[(i, j)][λ-1] its residual capacity.
    """

    def __init__(self, num_vertices: int, num_labels: int, edges):
        self.num_vertices = num_vertices
        self.num_labels = num_labels
        self.edges: Tuple[Edge, ...] = tuple(edges)
        self.column: List[List[int]] = [[0] * num_labels for _ in range(num_vertices)]
        self.record_level: Dict[Edge, List[int]] = {}
        self.record_cap: Dict[Edge, List[int]] = {}
        self.adjacency = sorted_adjacency(num_vertices, self.edges)
        self.order = visit_order(self.adjacency)
        self.num_nodes = 2 + num_vertices * (num_labels - 1)

    def value_count(self) -> int:
        return self.num_vertices * self.num_labels + 2 * sum(len(r) for r in self.record_level.values())

    def set_records(self, i: int, j: int, residual: List[List[int]]):
        """Rebuild the records of orientation (i, j) from a full residual row set"""
        levels = self.record_level[(i, j)]
        caps = self.record_cap[(i, j)]
        for l, row in enumerate(residual):
            levels[l] = 0
            caps[l] = 0
            for m, value in enumerate(row):
                if value > 0:
                    levels[l] = m + 1
                    caps[l] = value
                    break

    def pins(self, i: int, j: int) -> List[int]:
        """Per level, the lowest target level the current residual may keep positive"""
        ell = self.num_labels
        result = []
        for level, cap in zip(self.record_level[(i, j)], self.record_cap[(i, j)]):
            if level == 0:
                result.append(ell)
            elif cap == 0:
                result.append(level + 1)
            else:
                result.append(level)
        return result


@dataclass
class AugPath:
    """Nodes from node 0 to node 1 and the kind of each arc between them"""
    nodes: List[int]
    kinds: List[int]

    @property
    def length(self) -> int:
        """Number of finite edges"""
        return sum(1 for kind in self.kinds if kind != UP)

    def kind_names(self) -> List[str]:
        return [KIND_NAMES[kind] for kind in self.kinds]


def build_lower_graph(caps: IshikawaCapacities) -> LowerGraph:
    """Copy the columns and keep the lowest positive cross edge per node and neighbour"""
    lg = LowerGraph(caps.num_vertices, caps.num_labels, caps.edges)
    lg.column = caps.column.astype(np.int64).tolist()
    for i, j in caps.edges:
        for a, b in ((i, j), (j, i)):
            arr = np.asarray(caps.cross_caps(a, b))
            positive = arr > 0
            has_edge = positive.any(axis=1)
            first = np.argmax(positive, axis=1)
            rows = np.arange(arr.shape[0])
            lg.record_level[(a, b)] = np.where(has_edge, first + 1, 0).astype(int).tolist()
            lg.record_cap[(a, b)] = np.where(has_edge, arr[rows, first], 0).astype(int).tolist()
    return lg


def zero_one_distances(lg: LowerGraph, stop_at_sink: bool = True) -> Tuple[List[int], List[int], List[int]]:
    """
    0-1 BFS from node 0: infinite upward edges cost 0, every other positive edge 1.

    Neighbours are relaxed in ascending (vertex, label) order.

    Returns:
        (distance, parent, arc kind into the node); UNREACHED marks unreachable nodes
    """
    n = lg.num_labels - 1
    column, order = lg.column, lg.order
    record_level, record_cap = lg.record_level, lg.record_cap
    size = lg.num_nodes
    dist = [UNREACHED] * size
    parent = [-1] * size
    via = [-1] * size
    done = [False] * size
    dist[SOURCE] = 0
    queue = deque([SOURCE])
    while queue:
        u = queue.popleft()
        if done[u]:
            continue
        done[u] = True
        if u == SINK:
            if stop_at_sink:
                break
            continue
        step = dist[u] + 1
        if u == SOURCE:
            for i in range(lg.num_vertices):
                v = 2 + i * n + n - 1
                if column[i][n] > 0 and step < dist[v]:
                    dist[v], parent[v], via[v] = step, u, TOP
                    queue.append(v)
            continue
        i, k = divmod(u - 2, n)
        col = column[i]
        if k == 0 and col[0] > 0 and step < dist[SINK]:
            dist[SINK], parent[SINK], via[SINK] = step, u, DOWN
            queue.append(SINK)
        for other in order[i]:
            if other == i:
                if k > 0 and col[k] > 0 and step < dist[u - 1]:
                    dist[u - 1], parent[u - 1], via[u - 1] = step, u, DOWN
                    queue.append(u - 1)
                if k < n - 1 and step - 1 < dist[u + 1]:
                    dist[u + 1], parent[u + 1], via[u + 1] = step - 1, u, UP
                    queue.appendleft(u + 1)
                continue
            mu = record_level[(i, other)][k]
            if mu and record_cap[(i, other)][k] > 0:
                v = 1 + other * n + mu
                if step < dist[v]:
                    dist[v], parent[v], via[v] = step, u, CROSS
                    queue.append(v)
    return dist, parent, via


def _next_admissible(lg: LowerGraph, u: int, dist: List[int], current: List[int]) -> Tuple[int, int]:
    """
    First admissible arc out of u at or after its current slot.

    An arc is admissible when it is positive and its head's label is the
    tail's plus the arc's cost. Slots of node 0 are the vertices; slots of
    U_{i:λ} are 0 for the DOWN arc, 1 for the UP arc, then one per neighbour
    in ascending order.

    Returns:
        (head, kind), head -1 when no slot is left
    """
    n = lg.num_labels - 1
    column = lg.column
    target = dist[SINK]
    slot = current[u]
    if u == SOURCE:
        for i in range(slot, lg.num_vertices):
            v = 2 + i * n + n - 1
            if column[i][n] > 0 and dist[v] == 1:
                current[u] = i
                return v, TOP
        current[u] = lg.num_vertices
        return -1, TOP

    du = dist[u]
    if du + 1 > target:
        return -1, DOWN
    i, k = divmod(u - 2, n)
    col = column[i]
    neighbours = lg.adjacency[i]
    while slot < 2 + len(neighbours):
        if slot == 0:
            if col[k] > 0:
                v = SINK if k == 0 else u - 1
                if dist[v] == du + 1:
                    current[u] = slot
                    return v, DOWN
        elif slot == 1:
            if k < n - 1 and dist[u + 1] == du:
                current[u] = slot
                return u + 1, UP
        else:
            other = neighbours[slot - 2]
            mu = lg.record_level[(i, other)][k]
            if mu and lg.record_cap[(i, other)][k] > 0:
                v = 1 + other * n + mu
                if dist[v] == du + 1:
                    current[u] = slot
                    return v, CROSS
        slot += 1
    current[u] = slot
    return -1, DOWN


def _path_from(parent: List[int], via: List[int]) -> AugPath:
    nodes = [SINK]
    kinds = []
    v = SINK
    while v != SOURCE:
        kinds.append(via[v])
        v = parent[v]
        nodes.append(v)
    nodes.reverse()
    kinds.reverse()
    return AugPath(nodes, kinds)


def shortest_augmenting_path(lg: LowerGraph) -> Optional[AugPath]:
    """Minimum-distance 0→1 path of the lower-graph, or None"""
    dist, parent, via = zero_one_distances(lg)
    if dist[SINK] == UNREACHED:
        return None
    return _path_from(parent, via)


class _PolyCounters:
    def __init__(self):
        self.reconstructions = 0
        self.fallbacks = 0


def _reconstruct_pair_records(lg: LowerGraph, store: FlowStore, phi0: IshikawaCapacities,
                              i: int, j: int, meter: StorageMeter, counters: _PolyCounters):
    e = phi0.edge_index(i, j)
    a, b = phi0.edges[e]
    phi_ab, phi_ba, _, used_fallback = reconstruct_pair(
        phi0.cross_rows(a, b), phi0.cross_rows(b, a),
        store.exit[(a, b)], store.exit[(b, a)],
        lg.pins(a, b), lg.pins(b, a))
    n = lg.num_labels - 1
    meter.note_transient(3 * n * n + ((2 * n + 2) ** 2 if used_fallback else 0))
    lg.set_records(a, b, phi_ab)
    lg.set_records(b, a, phi_ba)
    counters.reconstructions += 1
    counters.fallbacks += int(used_fallback)
    if used_fallback:
        logger.debug("edge (%d,%d) reconstruction used the fallback", a, b)


def augment(lg: LowerGraph, path: AugPath, store: FlowStore, phi0: IshikawaCapacities,
            meter: Optional[StorageMeter] = None, counters: Optional[_PolyCounters] = None) -> int:
    """
    Push the bottleneck of path and keep the lower-graph exact.

    A pushed cross edge creates (or grows) the reverse edge; if it is lower
    than the reverse record it becomes the record directly. A saturated
    record triggers reconstruction of its edge.

    Returns:
        The pushed amount α >= 1
    """
    meter = meter or StorageMeter()
    counters = counters or _PolyCounters()
    ell = lg.num_labels
    arcs = list(zip(path.nodes[:-1], path.nodes[1:], path.kinds))

    alpha = None
    for u, v, kind in arcs:
        if kind == UP:
            continue
        if kind == TOP:
            i, _ = node_of(v, ell)
            cap = lg.column[i][ell - 1]
        elif kind == DOWN:
            i, lam = node_of(u, ell)
            cap = lg.column[i][lam - 1]
        else:
            i, lam = node_of(u, ell)
            j, _ = node_of(v, ell)
            cap = lg.record_cap[(i, j)][lam - 1]
        alpha = cap if alpha is None else min(alpha, cap)
    if alpha is None or alpha <= 0:
        raise InternalInvariantError(f"non-positive bottleneck {alpha} on augmenting path")

    saturated: Set[Edge] = set()
    reverse: List[Tuple[int, int, int, int]] = []
    for u, v, kind in arcs:
        if kind == TOP:
            i, _ = node_of(v, ell)
            lg.column[i][ell - 1] -= alpha
            store.source_flow[i] += alpha
        elif kind == DOWN:
            i, lam = node_of(u, ell)
            lg.column[i][lam - 1] -= alpha
        elif kind == UP:
            i, lam = node_of(u, ell)
            lg.column[i][lam] += alpha
        else:
            i, lam = node_of(u, ell)
            j, mu = node_of(v, ell)
            lg.record_cap[(i, j)][lam - 1] -= alpha
            record_cross_flow(store, i, j, lam, mu, alpha)
            reverse.append((i, lam, j, mu))
            if lg.record_cap[(i, j)][lam - 1] == 0:
                saturated.add((min(i, j), max(i, j)))

    for i, lam, j, mu in reverse:
        levels = lg.record_level[(j, i)]
        caps = lg.record_cap[(j, i)]
        current = levels[mu - 1]
        if current == 0 or current > lam:
            levels[mu - 1] = lam
            caps[mu - 1] = alpha
        elif current == lam:
            caps[mu - 1] += alpha

    store.total_flow += alpha
    for i, j in sorted(saturated):
        _reconstruct_pair_records(lg, store, phi0, i, j, meter, counters)
    return alpha


def _augment_phase(lg: LowerGraph, dist: List[int], store: FlowStore, phi0: IshikawaCapacities,
                   meter: StorageMeter, counters: _PolyCounters) -> int:
    """
    Push every admissible path under one set of distance labels.

    A path made of admissible arcs has cost dist[1], which no path can beat
    while distances only grow, so each one is a shortest augmenting path.
    Nodes without an admissible way forward leave the phase. dist is
    consumed.

    Returns:
        The number of augmentations
    """
    current = [0] * lg.num_nodes
    nodes, kinds = [SOURCE], []
    pushed = 0
    while True:
        u = nodes[-1]
        if u == SINK:
            path = AugPath(nodes, kinds)
            alpha = augment(lg, path, store, phi0, meter, counters)
            pushed += 1
            logger.debug("poly augmentation: %d units over %d finite edges", alpha, path.length)
            nodes, kinds = [SOURCE], []
            continue
        v, kind = _next_admissible(lg, u, dist, current)
        if v >= 0:
            nodes.append(v)
            kinds.append(kind)
            continue
        if u == SOURCE:
            return pushed
        dist[u] = UNREACHED
        nodes.pop()
        kinds.pop()


def _columns_match(lg: LowerGraph, store: FlowStore, phi0: IshikawaCapacities) -> bool:
    for i in range(lg.num_vertices):
        flows = column_flows(store, i)
        expected = [int(c) - f for c, f in zip(phi0.column[i], flows)]
        if expected != lg.column[i]:
            return False
    return True


def solve_poly(model: EnergyModel, diagnostics: bool = False, sample_every: int = 1) -> SolveReport:
    """
    Shortest augmenting paths on the lower-graph until none remains.

    Args:
        model: A submodular energy
        diagnostics: Record the distance trace, check distance monotonicity
            and compare path existence with the fully reconstructed residual
        sample_every: Existence-check interval in iterations (diagnostics only)
    """
    started = time.perf_counter()
    meter = StorageMeter()
    counters = _PolyCounters()
    phi0 = phi_from_theta(model, materialize=False)
    lg = build_lower_graph(phi0)
    store = FlowStore(model.num_vertices, model.num_labels, model.edges)
    meter.set_persistent("lower_graph", lg.value_count())
    meter.set_persistent("flow_store", store.value_count())
    meter.note_transient(4 * lg.num_nodes)
    diag = SolverDiagnostics() if diagnostics else None

    augmentations = 0
    phases = 0
    previous: Optional[List[int]] = None
    while diag is not None:
        dist, parent, via = zero_one_distances(lg, stop_at_sink=False)
        found = dist[SINK] != UNREACHED
        if previous is not None:
            diag.distance_checks += 1
            diag.distance_violations += sum(1 for old, new in zip(previous, dist) if new < old)
        diag.distance_trace.append(list(dist))
        previous = dist
        if not found or augmentations % sample_every == 0:
            full = full_residual_from_store(phi0, store)
            diag.existence_checks += 1
            diag.existence_mismatches += int(has_augmenting_path(full) != found)
            diag.column_mismatches += int(not _columns_match(lg, store, phi0))
        if not found:
            break
        path = _path_from(parent, via)
        diag.path_lengths.append(path.length)
        alpha = augment(lg, path, store, phi0, meter, counters)
        augmentations += 1
        logger.debug("poly augmentation %d: %d units over %d finite edges", augmentations, alpha, path.length)

    while diag is None:
        dist, _, _ = zero_one_distances(lg)
        if dist[SINK] == UNREACHED:
            break
        pushed = _augment_phase(lg, dist, store, phi0, meter, counters)
        if pushed == 0:
            raise InternalInvariantError("distance phase found no admissible path")
        augmentations += pushed
        phases += 1

    reach_dist, _, _ = zero_one_distances(lg, stop_at_sink=False)
    seen = [d != UNREACHED for d in reach_dist]
    labels = labels_from_reachable(seen, model.num_vertices, model.num_labels)

    nodes, edges = graph_size(model.num_vertices, model.num_edges, model.num_labels)
    if augmentations > nodes * edges:
        raise InternalInvariantError(f"{augmentations} augmentations exceed the bound {nodes * edges}")
    elapsed = (time.perf_counter() - started) * 1000.0
    energy = store.total_flow + phi0.constant
    logger.info("poly: energy %d after %d augmentations in %d phases, %d reconstructions",
                energy, augmentations, phases, counters.reconstructions)
    return SolveReport(
        solver="poly",
        energy=energy,
        flow_total=store.total_flow,
        constant=phi0.constant,
        labeling=labels,
        augmentations=augmentations,
        reconstructions=counters.reconstructions,
        reconstruction_fallbacks=counters.fallbacks,
        stored_values_peak=meter.persistent_peak,
        transient_values_peak=meter.transient_peak,
        wall_time_ms=elapsed,
        counters={"phases": phases} if diag is None else {},
        diagnostics=diag,
    )
