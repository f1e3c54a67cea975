"""
Block-graph memory-efficient max-flow.

Each column's internal nodes are grouped into blocks: maximal runs joined
by positive downward capacities. Inside a block every node reaches every
other (downward edges are positive, upward ones infinite), so the search
runs over blocks instead of nodes. For a block and a neighbouring column
only the lowest reachable target block is used.

A block path is pushed as a sequence of flow-loops (null flows that move
capacity from one column to the next) followed by a trivial flush of the
last column. The source tree found by the search is kept between
augmentations and repaired around the columns that changed.
"""
import logging
import time
from bisect import bisect_right
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Deque, Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from energy import EnergyModel
from errors import ContractError, InternalInvariantError
from flowcodec import FlowStore, column_flows, full_residual_from_store, reconstruct_pair, record_cross_flow
from ishikawa import Edge, IshikawaCapacities, has_augmenting_path, phi_from_theta, sorted_adjacency
from solve_report import SolveReport, SolverDiagnostics, StorageMeter

logger = logging.getLogger(__name__)

NO_ARC = -1

# tree keys are (column, lowest level of the block)
BlockKey = Tuple[int, int]
BLOCK_SOURCE: BlockKey = (-1, -1)
BLOCK_SINK: BlockKey = (-2, -2)

Matrix = List[List[int]]


@dataclass(frozen=True)
class Block:
    """Levels lo..hi of column i, γ = index counted from the bottom"""
    column: int
    index: int
    lo: int
    hi: int

    @property
    def levels(self) -> range:
        return range(self.lo, self.hi + 1)

    @property
    def key(self) -> BlockKey:
        return self.column, self.lo


@dataclass(frozen=True)
class FlowLoop:
    """m(λ, μ, α) on the directed pair (i, j)"""
    i: int
    j: int
    lam: int
    mu: int
    alpha: int

    def headroom(self, column_i: Sequence[int], phi_ij: Matrix) -> int:
        """Largest permissible α for this (λ, μ)"""
        return min(min(column_i[self.lam:]), phi_ij[self.lam - 1][self.mu - 1])

    def is_permissible(self, column_i: Sequence[int], phi_ij: Matrix) -> bool:
        return 1 <= self.alpha <= self.headroom(column_i, phi_ij)


def block_starts(column: Sequence[int]) -> List[int]:
    """Lowest level of every block, ascending"""
    starts = [1]
    for lam in range(2, len(column)):
        if column[lam - 1] == 0:
            starts.append(lam)
    return starts


def build_blocks(column: Sequence[int], i: int = 0) -> List[Block]:
    """
    Split a column into blocks, bottom-up.

    Raises:
        ContractError: the column still holds a trivial augmenting path
    """
    if len(column) and min(column) > 0:
        raise ContractError(f"column {i} has minimum {min(column)} > 0; flush trivial paths first")
    ell = len(column)
    starts = block_starts(column)
    ends = [s - 1 for s in starts[1:]] + [ell - 1]
    return [Block(i, g, lo, hi) for g, (lo, hi) in enumerate(zip(starts, ends))]


def reach_levels(rows: Matrix) -> List[int]:
    """
    Per level λ, the lowest target μ of a positive cross edge leaving any
    level λ' >= λ, or NO_ARC.

    Nondecreasing in λ wherever defined.
    """
    n = len(rows)
    reach = [NO_ARC] * n
    running = NO_ARC
    for l in range(n - 1, -1, -1):
        row = rows[l]
        for m in range(n if running == NO_ARC else running - 1):
            if row[m] > 0:
                running = m + 1
                break
        reach[l] = running
    return reach


def _block_of(starts: Sequence[int], level: int) -> int:
    return bisect_right(starts, level) - 1


def build_block_edges(phi_ij, blocks_i: Sequence[Block], blocks_j: Sequence[Block]) -> List[int]:
    """
    Lowest reachable block of column j for every block of column i.

    δ(γ) is the smallest block index holding a target μ of some positive
    e_{ij:λμ} with λ >= lo(B_{i:γ}); NO_ARC when there is none. δ is
    nondecreasing in γ.
    """
    rows = np.asarray(phi_ij).tolist() if isinstance(phi_ij, np.ndarray) else phi_ij
    reach = reach_levels(rows)
    starts_j = [b.lo for b in blocks_j]
    return [NO_ARC if reach[b.lo - 1] == NO_ARC else _block_of(starts_j, reach[b.lo - 1]) for b in blocks_i]


def flush_trivial(column: List[List[int]], store: FlowStore, vertices: Optional[Sequence[int]] = None) -> int:
    """
    Push every trivial augmenting path 0 → column i → 1.

    Returns:
        Total flow added
    """
    total = 0
    for i in (range(len(column)) if vertices is None else vertices):
        m = min(column[i])
        if m > 0:
            column[i] = [c - m for c in column[i]]
            store.source_flow[i] += m
            store.total_flow += m
            total += m
    return total


def apply_flow_loop(column_i: List[int], column_j: List[int], phi_ij: Matrix, phi_ji: Matrix,
                    loop: FlowLoop, store: Optional[FlowStore] = None):
    """
    Apply m(λ, μ, α) in place.

    Down column i to λ, across e_{ij:λμ}, back up column j from μ.

    Raises:
        ContractError: α is not permissible
    """
    if not loop.is_permissible(column_i, phi_ij):
        raise ContractError(
            f"loop m({loop.lam},{loop.mu},{loop.alpha}) on ({loop.i},{loop.j}) is not permissible")
    alpha = loop.alpha
    for lam in range(loop.lam, len(column_i)):
        column_i[lam] -= alpha
    phi_ij[loop.lam - 1][loop.mu - 1] -= alpha
    phi_ji[loop.mu - 1][loop.lam - 1] += alpha
    for mu in range(loop.mu, len(column_j)):
        column_j[mu] += alpha
    if store is not None:
        record_cross_flow(store, loop.i, loop.j, loop.lam, loop.mu, alpha)
        store.source_flow[loop.i] += alpha
        store.source_flow[loop.j] -= alpha


class BlockCounters:
    def __init__(self):
        self.reconstructions = 0
        self.reconstruction_fallbacks = 0
        self.flow_loops = 0
        self.path_fallbacks = 0
        self.orphans = 0
        self.blocks_freed = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "flow_loops": self.flow_loops,
            "path_fallbacks": self.path_fallbacks,
            "tree_orphans": self.orphans,
            "tree_blocks_freed": self.blocks_freed,
        }


class BlockGraph:
    """
    Columns in memory, block boundaries, and reach levels per directed edge.

    reach[(i, j)] is reach_levels of the reconstructed φ_ij. The target of
    block γ of column i in column j is the block of j holding
    reach[(i, j)][lo(γ) - 1], so block arcs follow the current starts
    without another reconstruction.
    """

    def __init__(self, phi0: IshikawaCapacities, store: FlowStore, counters: Optional[BlockCounters] = None):
        self.phi0 = phi0
        self.store = store
        self.num_vertices = phi0.num_vertices
        self.num_labels = phi0.num_labels
        self.column: List[List[int]] = phi0.column.astype(np.int64).tolist()
        self.starts: List[List[int]] = [[1] for _ in range(self.num_vertices)]
        self.reach: Dict[Edge, List[int]] = {}
        self.adjacency = sorted_adjacency(self.num_vertices, phi0.edges)
        self.counters = counters or BlockCounters()

    def build(self):
        for i in range(self.num_vertices):
            self.rebuild_column(i)
        for i, j in self.phi0.edges:
            self.rebuild_edge(i, j)

    def value_count(self) -> int:
        return (self.num_vertices * self.num_labels
                + sum(len(s) for s in self.starts)
                + sum(len(r) for r in self.reach.values()))

    def blocks(self, i: int) -> List[Block]:
        starts = self.starts[i]
        ends = [s - 1 for s in starts[1:]] + [self.num_labels - 1]
        return [Block(i, g, lo, hi) for g, (lo, hi) in enumerate(zip(starts, ends))]

    def block_index(self, i: int, lam: int) -> int:
        return _block_of(self.starts[i], lam)

    def block_hi(self, i: int, lo: int) -> int:
        starts = self.starts[i]
        following = bisect_right(starts, lo)
        return starts[following] - 1 if following < len(starts) else self.num_labels - 1

    def key_of(self, i: int, index: int) -> BlockKey:
        return i, self.starts[i][index]

    def is_top(self, key: BlockKey) -> bool:
        return key[1] == self.starts[key[0]][-1]

    def edge_of(self, i: int, j: int) -> Edge:
        """Model orientation of the edge between columns i and j"""
        return self.phi0.edges[self.phi0.edge_index(i, j)]

    def rebuild_column(self, i: int):
        if min(self.column[i]) > 0:
            raise ContractError(f"column {i} has a trivial augmenting path")
        self.starts[i] = block_starts(self.column[i])

    def reconstruct(self, i: int, j: int) -> Tuple[Matrix, Matrix]:
        """Residual cross capacities (φ_ij, φ_ji) of one edge from the store"""
        phi_ij, phi_ji, _, used_fallback = reconstruct_pair(
            self.phi0.cross_rows(i, j), self.phi0.cross_rows(j, i),
            self.store.exit[(i, j)], self.store.exit[(j, i)])
        self.counters.reconstructions += 1
        self.counters.reconstruction_fallbacks += int(used_fallback)
        return phi_ij, phi_ji

    def rebuild_edge(self, i: int, j: int):
        phi_ij, phi_ji = self.reconstruct(i, j)
        self.reach[(i, j)] = reach_levels(phi_ij)
        self.reach[(j, i)] = reach_levels(phi_ji)

    def target(self, i: int, lo: int, j: int) -> int:
        """Block index in column j reached from the block of column i starting at lo, or NO_ARC"""
        mu = self.reach[(i, j)][lo - 1]
        return NO_ARC if mu == NO_ARC else _block_of(self.starts[j], mu)

    def targets(self, i: int, j: int) -> List[int]:
        """δ(γ) for every block γ of column i"""
        return [self.target(i, lo, j) for lo in self.starts[i]]

    def out_arcs(self, key: BlockKey) -> Iterator[BlockKey]:
        """Terminal first, then target blocks by ascending column"""
        ell = self.num_labels
        if key == BLOCK_SOURCE:
            for i in range(self.num_vertices):
                if self.column[i][ell - 1] > 0:
                    yield i, self.starts[i][-1]
            return
        i, lo = key
        if lo == 1 and self.column[i][0] > 0:
            yield BLOCK_SINK
        for n in self.adjacency[i]:
            mu = self.reach[(i, n)][lo - 1]
            if mu != NO_ARC:
                starts = self.starts[n]
                yield n, starts[_block_of(starts, mu)]

    def in_arcs(self, key: BlockKey) -> Iterator[BlockKey]:
        i, lo = key
        index = self.block_index(i, lo)
        if self.is_top(key) and self.column[i][self.num_labels - 1] > 0:
            yield BLOCK_SOURCE
        for n in self.adjacency[i]:
            for start in self.starts[n]:
                if self.target(n, start, i) == index:
                    yield n, start

    def has_arc(self, tail: BlockKey, head: BlockKey) -> bool:
        i, lo = head
        if tail == BLOCK_SOURCE:
            return self.is_top(head) and self.column[i][self.num_labels - 1] > 0
        if (tail[0], i) not in self.reach:
            return False
        delta = self.target(tail[0], tail[1], i)
        return delta != NO_ARC and self.starts[i][delta] == lo


class SourceTree:
    """
    Search tree over blocks rooted at node 0.

    Orphans have parent None while repair is under way; active blocks
    still have out-arcs to examine.
    """

    def __init__(self):
        self.parent: Dict[BlockKey, Optional[BlockKey]] = {}
        self.children: Dict[BlockKey, Set[BlockKey]] = defaultdict(set)
        self.members: Dict[int, Set[int]] = defaultdict(set)
        self.active: Deque[BlockKey] = deque([BLOCK_SOURCE])
        self._queued: Set[BlockKey] = {BLOCK_SOURCE}

    def __contains__(self, key: BlockKey) -> bool:
        return key == BLOCK_SOURCE or key in self.parent

    def __len__(self) -> int:
        return len(self.parent)

    def value_count(self) -> int:
        return len(self.parent)

    def activate(self, key: BlockKey):
        if key not in self._queued:
            self._queued.add(key)
            self.active.append(key)

    def attach(self, child: BlockKey, parent: BlockKey):
        self.parent[child] = parent
        self.children[parent].add(child)
        self.members[child[0]].add(child[1])

    def detach(self, child: BlockKey):
        """Cut the link to the parent; the node stays as an orphan"""
        parent = self.parent.get(child)
        if parent is not None:
            self.children[parent].discard(child)
        self.parent[child] = None

    def remove(self, key: BlockKey) -> Set[BlockKey]:
        """Drop a node; its children become orphans and are returned"""
        self.detach(key)
        del self.parent[key]
        self.members[key[0]].discard(key[1])
        orphans = self.children.pop(key, set())
        for child in orphans:
            self.parent[child] = None
        return orphans

    def rename(self, old: BlockKey, new: BlockKey):
        parent = self.parent.pop(old)
        if parent is not None:
            self.children[parent].discard(old)
            self.children[parent].add(new)
        self.parent[new] = parent
        kids = self.children.pop(old, set())
        if kids:
            self.children[new] = kids
            for child in kids:
                self.parent[child] = new
        self.members[old[0]].discard(old[1])
        self.members[new[0]].add(new[1])
        if old in self._queued:
            self._queued.discard(old)
            self.activate(new)

    def is_rooted(self, key: BlockKey) -> bool:
        while key != BLOCK_SOURCE:
            key = self.parent.get(key)
            if key is None:
                return False
        return True

    def path_to(self, key: BlockKey) -> List[BlockKey]:
        path = [key]
        while key != BLOCK_SOURCE:
            key = self.parent[key]
            path.append(key)
        path.reverse()
        return path

    def lowest_level(self, i: int) -> Optional[int]:
        levels = self.members.get(i)
        return min(levels) if levels else None


def find_augmenting_path(bg: BlockGraph, tree: SourceTree) -> Optional[List[BlockKey]]:
    """
    Grow the source tree breadth-first until it touches node 1.

    The block that touches node 1 stays at the head of the frontier so the
    next search resumes from it.

    Returns:
        [node 0, blocks..., node 1] or None when the frontier empties
    """
    while tree.active:
        u = tree.active[0]
        if u not in tree or (u != BLOCK_SOURCE and tree.parent[u] is None):
            tree.active.popleft()
            tree._queued.discard(u)
            continue
        for v in bg.out_arcs(u):
            if v == BLOCK_SINK:
                return tree.path_to(u) + [BLOCK_SINK]
            if v not in tree:
                tree.attach(v, u)
                tree.activate(v)
        tree.active.popleft()
        tree._queued.discard(u)
    return None


@dataclass
class BlockAugmentation:
    pushed: int
    dirty: Set[int]
    edges: Set[Edge]
    loops: int = 0
    used_path_fallback: bool = False
    path_length: int = 0


def _push_loops(bg: BlockGraph, tail: BlockKey, head: BlockKey, meter: StorageMeter) -> int:
    """
    Maximal permissible loops across one block arc.

    λ runs upward from the tail block's lowest level, μ over the head
    block's levels only, so every unit enters the head block.

    Returns:
        The number of loops applied
    """
    i, lo_i = tail
    j, lo_j = head
    hi_j = bg.block_hi(j, lo_j)
    ell = bg.num_labels
    n = ell - 1
    column_i, column_j = bg.column[i], bg.column[j]
    loops = 0
    with meter.transient(3 * n * n):
        phi_ij, phi_ji = bg.reconstruct(i, j)
        # room[λ] = min(column_i[λ:]) before any loop of this arc
        room = list(column_i)
        for lam in range(ell - 2, -1, -1):
            room[lam] = min(room[lam], room[lam + 1])
        spent = 0
        for lam in range(lo_i, ell):
            free = room[lam] - spent
            if free <= 0:
                continue
            row = phi_ij[lam - 1]
            for mu in range(lo_j, hi_j + 1):
                if row[mu - 1] <= 0:
                    continue
                alpha = min(free, row[mu - 1])
                apply_flow_loop(column_i, column_j, phi_ij, phi_ji,
                                FlowLoop(i, j, lam, mu, alpha), bg.store)
                loops += 1
                free -= alpha
                spent += alpha
                if free == 0:
                    break
    return loops


def _push_path_subgraph(bg: BlockGraph, columns: Sequence[int], pairs: Sequence[Edge],
                        meter: StorageMeter) -> int:
    """
    One shortest augmenting path restricted to the path's columns and edges.

    Returns:
        The pushed amount, 0 when the subgraph holds no augmenting path
    """
    ell = bg.num_labels
    n = ell - 1
    cross: Dict[Edge, Matrix] = {}
    neighbours: Dict[int, List[int]] = defaultdict(list)
    for i, j in pairs:
        if (i, j) in cross or (j, i) in cross:
            continue
        cross[(i, j)], cross[(j, i)] = bg.reconstruct(i, j)
        neighbours[i].append(j)
        neighbours[j].append(i)
    source, sink = (-1, 0), (-2, 0)

    with meter.transient(2 * n * n * len(cross) // 2 + 2 * n * len(columns)):
        parent: Dict[Tuple[int, int], Tuple[int, int]] = {source: source}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            if u == source:
                heads = [(i, ell - 1) for i in sorted(columns) if bg.column[i][ell - 1] > 0]
            else:
                i, lam = u
                column = bg.column[i]
                heads = []
                if lam == 1 and column[0] > 0:
                    heads.append(sink)
                if lam > 1 and column[lam - 1] > 0:
                    heads.append((i, lam - 1))
                if lam < ell - 1:
                    heads.append((i, lam + 1))
                for k in sorted(neighbours[i]):
                    row = cross[(i, k)][lam - 1]
                    heads.extend((k, mu) for mu in range(1, ell) if row[mu - 1] > 0)
            for v in heads:
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            return 0

        steps = []
        v = sink
        while v != source:
            steps.append((parent[v], v))
            v = parent[v]
        steps.reverse()

        def capacity(u, v) -> Optional[int]:
            if u == source:
                return bg.column[v[0]][ell - 1]
            if v == sink:
                return bg.column[u[0]][0]
            if u[0] == v[0]:
                return bg.column[u[0]][u[1] - 1] if v[1] < u[1] else None
            return cross[(u[0], v[0])][u[1] - 1][v[1] - 1]

        alpha = min(c for c in (capacity(u, v) for u, v in steps) if c is not None)
        for u, v in steps:
            if u == source:
                bg.column[v[0]][ell - 1] -= alpha
                bg.store.source_flow[v[0]] += alpha
            elif v == sink:
                bg.column[u[0]][0] -= alpha
            elif u[0] == v[0]:
                if v[1] < u[1]:
                    bg.column[u[0]][u[1] - 1] -= alpha
                else:
                    bg.column[u[0]][u[1]] += alpha
            else:
                cross[(u[0], v[0])][u[1] - 1][v[1] - 1] -= alpha
                cross[(v[0], u[0])][v[1] - 1][u[1] - 1] += alpha
                record_cross_flow(bg.store, u[0], v[0], u[1], v[1], alpha)
        bg.store.total_flow += alpha
    return alpha


def augment_block_path(bg: BlockGraph, path: Sequence[BlockKey], meter: Optional[StorageMeter] = None) -> BlockAugmentation:
    """
    Push flow along a block path.

    Arcs are handled in path order: the edge's residual is reconstructed and
    maximal permissible loops m(λ, μ, α) with λ >= lo of the tail block and
    μ inside the head block are applied in ascending (λ, μ) order. The last
    column is then fully positive and its minimum is flushed.

    An arc can come up empty only when an earlier arc of the same path
    already changed its edge or its tail column. Loops stop there, and one
    augmenting path is pushed through the subgraph spanned by the path's
    columns and edges instead.

    Raises:
        InternalInvariantError: neither route moves any flow
    """
    meter = meter or StorageMeter()
    blocks = [key for key in path if key not in (BLOCK_SOURCE, BLOCK_SINK)]
    if not blocks:
        raise InternalInvariantError("empty block path")
    before = bg.store.total_flow
    pairs = [(tail[0], head[0]) for tail, head in zip(blocks, blocks[1:])]
    loops = 0
    stalled = False
    for tail, head in zip(blocks, blocks[1:]):
        pushed = _push_loops(bg, tail, head, meter)
        if pushed == 0:
            stalled = True
            break
        loops += pushed
    bg.counters.flow_loops += loops

    last = blocks[-1][0]
    dirty = {key[0] for key in blocks}
    used_fallback = False
    if stalled or min(bg.column[last]) <= 0:
        if _push_path_subgraph(bg, sorted(dirty), pairs, meter) == 0:
            raise InternalInvariantError(f"block path {blocks} carries no flow")
        used_fallback = True
        bg.counters.path_fallbacks += 1
        logger.debug("block path of %d arcs needed the subgraph fallback", len(blocks) + 1)
    flush_trivial(bg.column, bg.store, sorted(dirty))

    pushed = bg.store.total_flow - before
    if pushed <= 0:
        raise InternalInvariantError(f"block path {blocks} carries no flow")
    edges = {bg.edge_of(i, j) for i, j in pairs}
    return BlockAugmentation(pushed, dirty, edges, loops, used_fallback, len(blocks) + 1)


def repair(bg: BlockGraph, tree: SourceTree, dirty: Set[int], edges: Set[Edge]):
    """
    Rebuild the block-graph around dirty columns and mend the source tree.

    Blocks of dirty columns are rebuilt and the reach levels of every edge
    whose exit-flows changed are recomputed; arcs of the other edges incident
    to a dirty column follow from the new blocks. Tree blocks are matched to
    the new block containing their lowest level; a block whose parent arc
    vanished is an orphan and looks for another rooted in-neighbour, failing
    which it is freed and its children orphaned. Every tree block whose
    out-arcs may have changed is put back on the frontier, and a dirty
    column whose top block newly holds a source arc joins the tree directly.
    """
    if not dirty:
        return
    for i in sorted(dirty):
        bg.rebuild_column(i)
    for i, j in sorted(edges):
        bg.rebuild_edge(i, j)
    touched = set(dirty)
    for i in dirty:
        touched.update(bg.adjacency[i])

    orphans: Deque[BlockKey] = deque()
    for i in sorted(dirty):
        for lo in sorted(tree.members.get(i, ())):
            key = (i, lo)
            new = bg.key_of(i, bg.block_index(i, lo))
            if new == key:
                continue
            if new in tree:
                orphans.extend(tree.remove(key))
                bg.counters.blocks_freed += 1
            else:
                tree.rename(key, new)

    for i in sorted(touched):
        for lo in sorted(tree.members.get(i, ())):
            key = (i, lo)
            parent = tree.parent[key]
            if parent is None:
                orphans.append(key)
                continue
            if (i in dirty or parent == BLOCK_SOURCE or parent[0] in dirty) and not bg.has_arc(parent, key):
                tree.detach(key)
                orphans.append(key)

    while orphans:
        orphan = orphans.popleft()
        if orphan not in tree.parent or tree.parent[orphan] is not None:
            continue
        bg.counters.orphans += 1
        adopted = False
        for candidate in bg.in_arcs(orphan):
            if candidate == BLOCK_SOURCE or (candidate in tree.parent and tree.is_rooted(candidate)):
                tree.attach(orphan, candidate)
                adopted = True
                break
        if adopted:
            continue
        orphans.extend(tree.remove(orphan))
        bg.counters.blocks_freed += 1
        for candidate in bg.in_arcs(orphan):
            if candidate in tree:
                tree.activate(candidate)

    top = bg.num_labels - 1
    for i in sorted(dirty):
        key = (i, bg.starts[i][-1])
        if bg.column[i][top] > 0 and key not in tree:
            tree.attach(key, BLOCK_SOURCE)
    for i in sorted(touched):
        for lo in sorted(tree.members.get(i, ())):
            tree.activate((i, lo))


def labels_from_tree(bg: BlockGraph, tree: SourceTree) -> List[int]:
    """x_i = (lowest level of a tree block in column i) − 1, or ℓ−1 without one"""
    labels = []
    for i in range(bg.num_vertices):
        lowest = tree.lowest_level(i)
        labels.append(bg.num_labels - 1 if lowest is None else lowest - 1)
    return labels


def _columns_match(bg: BlockGraph) -> bool:
    for i in range(bg.num_vertices):
        flows = column_flows(bg.store, i)
        expected = [int(c) - f for c, f in zip(bg.phi0.column[i], flows)]
        if expected != bg.column[i]:
            return False
    return True


def solve_block(model: EnergyModel, diagnostics: bool = False, sample_every: int = 1) -> SolveReport:
    """
    Block-graph max-flow with a recycled source tree.

    Args:
        model: A submodular energy
        diagnostics: Compare path existence with the fully reconstructed
            residual, check column consistency and record block path lengths
        sample_every: Existence-check interval in iterations (diagnostics only)
    """
    started = time.perf_counter()
    meter = StorageMeter()
    counters = BlockCounters()
    phi0 = phi_from_theta(model, materialize=False)
    store = FlowStore(model.num_vertices, model.num_labels, model.edges)
    bg = BlockGraph(phi0, store, counters)
    flushed = flush_trivial(bg.column, store)
    bg.build()
    tree = SourceTree()
    meter.set_persistent("flow_store", store.value_count())
    meter.set_persistent("block_graph", bg.value_count())
    diag = SolverDiagnostics() if diagnostics else None

    augmentations = 0
    while True:
        path = find_augmenting_path(bg, tree)
        meter.set_persistent("search_tree", tree.value_count())
        if diag is not None and (path is None or augmentations % sample_every == 0):
            full = full_residual_from_store(phi0, store)
            diag.existence_checks += 1
            diag.existence_mismatches += int(has_augmenting_path(full) != (path is not None))
            diag.column_mismatches += int(not _columns_match(bg))
        if path is None:
            break
        result = augment_block_path(bg, path, meter)
        augmentations += 1
        if diag is not None:
            diag.path_lengths.append(result.path_length)
        repair(bg, tree, result.dirty, result.edges)
        meter.set_persistent("block_graph", bg.value_count())
        meter.set_persistent("search_tree", tree.value_count())
        logger.debug("block augmentation %d: %d units over %d block arcs",
                     augmentations, result.pushed, result.path_length)

    labels = labels_from_tree(bg, tree)
    elapsed = (time.perf_counter() - started) * 1000.0
    energy = store.total_flow + phi0.constant
    report_counters = counters.as_dict()
    report_counters["initial_flush"] = flushed
    logger.info("block: energy %d after %d augmentations, %d reconstructions, %d path fallbacks",
                energy, augmentations, counters.reconstructions, counters.path_fallbacks)
    return SolveReport(
        solver="block",
        energy=energy,
        flow_total=store.total_flow,
        constant=phi0.constant,
        labeling=labels,
        augmentations=augmentations,
        reconstructions=counters.reconstructions,
        reconstruction_fallbacks=counters.reconstruction_fallbacks,
        stored_values_peak=meter.persistent_peak,
        transient_values_peak=meter.transient_peak,
        wall_time_ms=elapsed,
        counters=report_counters,
        diagnostics=diag,
    )
