"""
Multi-label pairwise MRF energies.

E(x) = Σ_i θ_i(x_i) + Σ_(i,j) θ_ij(x_i, x_j) over labels {0..ℓ-1}, with
integer potentials throughout. Pairwise terms are either explicit ℓ×ℓ tables
or a weight times a regularizer of the label difference; the latter are kept
symbolic and only expanded on demand.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import CapacityError, InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_BRUTE_FORCE_CAP = 10_000_000
_ENUMERATION_CHUNK = 1 << 16


class Regularizer(Enum):
    """Convex functions of |λ−μ| usable as symbolic pairwise terms"""
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    HUBER = "huber"  # doubled Huber: d² for d ≤ δ, else 2δd − δ²


def regularizer_values(kind: Regularizer, num_labels: int, delta: int = 1) -> np.ndarray:
    """θ(d) for d = 0..ℓ-1"""
    d = np.arange(num_labels, dtype=np.int64)
    if kind is Regularizer.LINEAR:
        return d
    if kind is Regularizer.QUADRATIC:
        return d * d
    if delta < 1:
        raise InvalidArgumentError(f"huber delta must be >= 1, got {delta}")
    return np.where(d <= delta, d * d, 2 * delta * d - delta * delta)


@dataclass(frozen=True, eq=False)
class PairwiseSpec:
    """
    One pairwise term: an explicit table or w·θ(|λ−μ|).

    Use PairwiseSpec.from_table or PairwiseSpec.regularized rather than the
    constructor directly.
    """
    table: Optional[np.ndarray] = None
    weight: int = 0
    kind: Optional[Regularizer] = None
    delta: int = 1

    @classmethod
    def from_table(cls, table: Union[np.ndarray, Sequence[Sequence[int]]]) -> "PairwiseSpec":
        arr = np.array(table, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidArgumentError(f"pairwise table must be square, got shape {arr.shape}")
        arr.setflags(write=False)
        return cls(table=arr)

    @classmethod
    def regularized(cls, weight: int, kind: Union[Regularizer, str], delta: int = 1) -> "PairwiseSpec":
        kind = Regularizer(kind)
        if weight < 0:
            raise InvalidArgumentError(f"regularizer weight must be nonnegative, got {weight}")
        if kind is Regularizer.HUBER and delta < 1:
            raise InvalidArgumentError(f"huber delta must be >= 1, got {delta}")
        return cls(weight=int(weight), kind=kind, delta=int(delta) if kind is Regularizer.HUBER else 1)

    @property
    def is_symbolic(self) -> bool:
        return self.table is None

    @property
    def symbolic_key(self) -> Optional[Tuple[int, str, int]]:
        """Hashable identity of a symbolic spec; None for explicit tables"""
        if self.table is not None:
            return None
        return (self.weight, self.kind.value, self.delta)

    def table_for(self, num_labels: int) -> np.ndarray:
        """The ℓ×ℓ table θ_ij(λ, μ)"""
        if self.table is not None:
            if self.table.shape != (num_labels, num_labels):
                raise InvalidArgumentError(
                    f"pairwise table is {self.table.shape}, expected {(num_labels, num_labels)}")
            return self.table
        values = regularizer_values(self.kind, num_labels, self.delta)
        labels = np.arange(num_labels)
        return self.weight * values[np.abs(np.subtract.outer(labels, labels))]

    def value(self, lam: int, mu: int, num_labels: int) -> int:
        if self.table is not None:
            return int(self.table[lam, mu])
        return self.weight * int(regularizer_values(self.kind, num_labels, self.delta)[abs(lam - mu)])


@dataclass(frozen=True, eq=False)
class EnergyModel:
    """
    An immutable multi-label pairwise energy.

    Attributes:
        num_vertices: Number of variables
        num_labels: Label count ℓ >= 2
        edges: Unordered vertex pairs (i, j) in their stored orientation
        unary: Integer array of shape (num_vertices, num_labels)
        pairwise: One PairwiseSpec per edge, aligned with edges
        grid_shape: (width, height) for generated grids, None otherwise
    """
    num_vertices: int
    num_labels: int
    edges: Tuple[Tuple[int, int], ...]
    unary: np.ndarray
    pairwise: Tuple[PairwiseSpec, ...]
    grid_shape: Optional[Tuple[int, int]] = field(default=None)

    def __post_init__(self):
        if self.num_labels < 2:
            raise InvalidArgumentError(f"need at least 2 labels, got {self.num_labels}")
        if self.num_vertices < 0:
            raise InvalidArgumentError("num_vertices must be nonnegative")
        unary = np.array(self.unary, dtype=np.int64)
        if unary.size == 0:
            unary = unary.reshape(0, self.num_labels)
        if unary.shape != (self.num_vertices, self.num_labels):
            raise InvalidArgumentError(
                f"unary shape {unary.shape} does not match {(self.num_vertices, self.num_labels)}")
        unary.setflags(write=False)
        object.__setattr__(self, "unary", unary)

        edges = tuple((int(i), int(j)) for i, j in self.edges)
        seen = set()
        for i, j in edges:
            if i == j:
                raise InvalidArgumentError(f"self-loop edge ({i},{j})")
            if not (0 <= i < self.num_vertices and 0 <= j < self.num_vertices):
                raise InvalidArgumentError(f"edge ({i},{j}) has an endpoint outside 0..{self.num_vertices - 1}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidArgumentError(f"duplicate edge ({i},{j})")
            seen.add(key)
        object.__setattr__(self, "edges", edges)

        pairwise = tuple(self.pairwise)
        if len(pairwise) != len(edges):
            raise InvalidArgumentError(f"{len(pairwise)} pairwise specs for {len(edges)} edges")
        for spec in pairwise:
            if spec.table is not None and spec.table.shape != (self.num_labels, self.num_labels):
                raise InvalidArgumentError(
                    f"pairwise table is {spec.table.shape}, expected {(self.num_labels, self.num_labels)}")
        object.__setattr__(self, "pairwise", pairwise)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def pairwise_table(self, edge_index: int) -> np.ndarray:
        return self.pairwise[edge_index].table_for(self.num_labels)


def _as_labeling(model: EnergyModel, x: Sequence[int]) -> np.ndarray:
    labels = np.asarray(x, dtype=np.int64)
    if labels.shape != (model.num_vertices,):
        raise InvalidArgumentError(
            f"labeling has shape {labels.shape}, expected ({model.num_vertices},)")
    if labels.size and (labels.min() < 0 or labels.max() >= model.num_labels):
        raise InvalidArgumentError(f"labels must lie in 0..{model.num_labels - 1}")
    return labels


def evaluate_energy(model: EnergyModel, x: Sequence[int]) -> int:
    """Σ_i θ_i(x_i) + Σ_(i,j) θ_ij(x_i, x_j)"""
    labels = _as_labeling(model, x)
    total = int(model.unary[np.arange(model.num_vertices), labels].sum()) if model.num_vertices else 0
    for (i, j), spec in zip(model.edges, model.pairwise):
        total += spec.value(int(labels[i]), int(labels[j]), model.num_labels)
    return total


def second_differences(table: np.ndarray) -> np.ndarray:
    """θ(λ+1,μ) + θ(λ,μ+1) − θ(λ,μ) − θ(λ+1,μ+1), shape (ℓ-1, ℓ-1)"""
    return table[1:, :-1] + table[:-1, 1:] - table[:-1, :-1] - table[1:, 1:]


def first_violation(spec: PairwiseSpec, num_labels: int) -> Optional[Tuple[int, int, int]]:
    """(λ, μ, value) of the first negative consecutive second difference, or None"""
    diffs = second_differences(spec.table_for(num_labels))
    negative = np.argwhere(diffs < 0)
    if negative.size == 0:
        return None
    lam, mu = (int(v) for v in negative[0])
    return lam, mu, int(diffs[lam, mu])


def check_submodular(spec: PairwiseSpec, num_labels: int) -> bool:
    """
    Multi-label submodularity of one pairwise term.

    Only consecutive pairs (λ' = λ+1, μ' = μ+1) are checked: the second
    difference over any λ < λ', μ < μ' is the sum of the consecutive ones
    inside that rectangle, so nonnegative consecutive differences imply the
    general condition.
    """
    return first_violation(spec, num_labels) is None


def brute_force_minimize(model: EnergyModel, cap: int = DEFAULT_BRUTE_FORCE_CAP) -> Tuple[List[int], int]:
    """
    Exact minimum by enumerating every labeling.

    Labelings are visited in lexicographic order (vertex 0 most significant)
    and only a strictly smaller energy replaces the incumbent, so ties go to
    the lexicographically smallest labeling.

    Raises:
        CapacityError: ℓ^V exceeds cap
    """
    n, num_labels = model.num_vertices, model.num_labels
    total = num_labels ** n
    if total > cap:
        raise CapacityError(f"{num_labels}^{n} labelings exceed the brute-force cap {cap}")
    if n == 0:
        return [], 0

    tables = [model.pairwise_table(e) for e in range(model.num_edges)]
    powers = num_labels ** np.arange(n - 1, -1, -1, dtype=np.int64)
    best_energy: Optional[int] = None
    best_index = 0
    for start in range(0, total, _ENUMERATION_CHUNK):
        index = np.arange(start, min(total, start + _ENUMERATION_CHUNK), dtype=np.int64)
        labels = (index[:, None] // powers[None, :]) % num_labels
        energies = model.unary[np.arange(n)[None, :], labels].sum(axis=1)
        for (i, j), table in zip(model.edges, tables):
            energies = energies + table[labels[:, i], labels[:, j]]
        k = int(np.argmin(energies))
        if best_energy is None or int(energies[k]) < best_energy:
            best_energy = int(energies[k])
            best_index = int(index[k])

    labeling = [int(v) for v in (best_index // powers) % num_labels]
    logger.debug("brute force over %d labelings: energy %d", total, best_energy)
    return labeling, best_energy


def grid_edges(width: int, height: int) -> List[Tuple[int, int]]:
    """4-connected edges, row-major: right neighbour then lower neighbour"""
    edges = []
    for y in range(height):
        for x in range(width):
            v = y * width + x
            if x + 1 < width:
                edges.append((v, v + 1))
            if y + 1 < height:
                edges.append((v, v + width))
    return edges


def generate_grid_instance(
    width: int,
    height: int,
    num_labels: int,
    regularizer: Union[Regularizer, str] = Regularizer.QUADRATIC,
    weight: int = 1,
    unary_max: int = 20,
    seed: int = 0,
    huber_delta: int = 1
) -> EnergyModel:
    """
    Random 4-connected grid with uniform unaries in {0..unary_max-1}.

    The same arguments always give the same model (numpy's PCG64 stream).
    """
    if width < 1 or height < 1:
        raise InvalidArgumentError(f"grid must be at least 1x1, got {width}x{height}")
    if unary_max < 1:
        raise InvalidArgumentError("unary_max must be >= 1")
    rng = np.random.default_rng(seed)
    n = width * height
    unary = rng.integers(0, unary_max, size=(n, num_labels), dtype=np.int64)
    edges = grid_edges(width, height)
    spec = PairwiseSpec.regularized(weight, regularizer, huber_delta)
    return EnergyModel(n, num_labels, tuple(edges), unary, tuple(spec for _ in edges),
                       grid_shape=(width, height))


def generate_inpainting_instance(
    width: int,
    height: int,
    num_labels: int,
    regularizer: Union[Regularizer, str] = Regularizer.QUADRATIC,
    weight: int = 1,
    unary_max: int = 20,
    seed: int = 0,
    huber_delta: int = 1,
    mask_fraction: float = 0.25
) -> EnergyModel:
    """
    Inpainting-style grid: a noisy label image with a rectangular hole.

    Known pixels pay min((λ − v_i)², unary_max − 1) for deviating from their
    observed value v_i; pixels inside the hole have all-zero unaries and are
    filled in by the regularizer alone.
    """
    if width < 1 or height < 1:
        raise InvalidArgumentError(f"grid must be at least 1x1, got {width}x{height}")
    if not 0.0 <= mask_fraction <= 1.0:
        raise InvalidArgumentError("mask_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    # smooth horizontal ramp plus noise keeps the optimum non-trivial
    ramp = np.linspace(0, num_labels - 1, width)
    observed = np.clip(np.rint(ramp[None, :] + rng.normal(0.0, 1.0, size=(height, width))),
                       0, num_labels - 1).astype(np.int64)

    side = np.sqrt(mask_fraction)
    mask_w, mask_h = int(round(width * side)), int(round(height * side))
    known = np.ones((height, width), dtype=bool)
    if mask_w > 0 and mask_h > 0:
        x0 = int(rng.integers(0, width - mask_w + 1))
        y0 = int(rng.integers(0, height - mask_h + 1))
        known[y0:y0 + mask_h, x0:x0 + mask_w] = False

    labels = np.arange(num_labels, dtype=np.int64)
    cost = np.minimum((labels[None, :] - observed.reshape(-1, 1)) ** 2, unary_max - 1)
    unary = np.where(known.reshape(-1, 1), cost, 0)

    edges = grid_edges(width, height)
    spec = PairwiseSpec.regularized(weight, regularizer, huber_delta)
    return EnergyModel(width * height, num_labels, tuple(edges), unary, tuple(spec for _ in edges),
                       grid_shape=(width, height))
