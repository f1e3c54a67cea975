"""
Multi-label graph view of the energy and its message-passing dictionary.

A flow-loop in the Ishikawa graph is a reparametrization of the multi-label
parameters, and exit-flows are differences of messages. Everything here is
pure and used to verify the solvers, not to solve.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from errors import CapacityError, InvalidArgumentError

Edge = Tuple[int, int]

_ENUMERATION_CHUNK = 1 << 15


@dataclass(frozen=True, eq=False)
class MultiLabelParams:
    """
    θ_{i:λ} and θ_{ij:λμ} on indicator variables x_{i:λ}.

    pairwise[e] is the ℓ×ℓ table of edges[e], indexed [λ of i, μ of j].
    """
    num_labels: int
    edges: Tuple[Edge, ...]
    unary: np.ndarray
    pairwise: Tuple[np.ndarray, ...]

    @property
    def num_vertices(self) -> int:
        return int(self.unary.shape[0])

    def energy(self, x: Sequence[int]) -> int:
        labels = np.asarray(x, dtype=np.int64)
        if labels.shape != (self.num_vertices,):
            raise InvalidArgumentError(
                f"labeling has shape {labels.shape}, expected ({self.num_vertices},)")
        total = int(self.unary[np.arange(self.num_vertices), labels].sum()) if self.num_vertices else 0
        for (i, j), table in zip(self.edges, self.pairwise):
            total += int(table[labels[i], labels[j]])
        return total


@dataclass
class MessageField:
    """m_{ij:λ} per directed edge; missing entries are zero"""
    num_labels: int
    messages: Dict[Edge, np.ndarray] = field(default_factory=dict)

    def get(self, i: int, j: int) -> np.ndarray:
        m = self.messages.get((i, j))
        if m is None:
            return np.zeros(self.num_labels, dtype=np.int64)
        return m

    def set(self, i: int, j: int, values: Sequence[int]):
        arr = np.asarray(values, dtype=np.int64)
        if arr.shape != (self.num_labels,):
            raise InvalidArgumentError(f"message must have {self.num_labels} entries")
        self.messages[(i, j)] = arr

    def add(self, other: "MessageField") -> "MessageField":
        combined = MessageField(self.num_labels, dict(self.messages))
        for key, values in other.messages.items():
            combined.messages[key] = combined.get(*key) + values
        return combined


def constant_term(theta: MultiLabelParams) -> int:
    """θ_c = Σ_i min_λ θ_{i:λ}"""
    if theta.num_vertices == 0:
        return 0
    return int(theta.unary.min(axis=1).sum())


def reparametrize(theta: MultiLabelParams, messages: MessageField) -> MultiLabelParams:
    """
    Apply messages without changing any labeling's energy.

    θ'_{ij:λμ} = θ_{ij:λμ} − m_{ij:λ} − m_{ji:μ}, and every vertex takes back
    the messages it sent along its edges: θ'_{i:λ} = θ_{i:λ} + Σ_j m_{ij:λ}.
    """
    unary = theta.unary.astype(np.int64).copy()
    pairwise = []
    for (i, j), table in zip(theta.edges, theta.pairwise):
        m_ij = messages.get(i, j)
        m_ji = messages.get(j, i)
        pairwise.append(table - m_ij[:, None] - m_ji[None, :])
        unary[i] += m_ij
        unary[j] += m_ji
    return MultiLabelParams(theta.num_labels, theta.edges, unary, tuple(pairwise))


def flow_loop_messages(lam: int, mu: int, alpha: int, num_labels: int) -> Tuple[np.ndarray, np.ndarray]:
    """Messages equivalent to the flow-loop m(λ, μ, α): (m_ij, m_ji)"""
    if not (1 <= lam < num_labels and 1 <= mu < num_labels):
        raise InvalidArgumentError(f"loop levels must lie in 1..{num_labels - 1}")
    levels = np.arange(num_labels)
    m_ij = np.where(levels >= lam, -alpha, 0).astype(np.int64)
    m_ji = np.where(levels >= mu, alpha, 0).astype(np.int64)
    return m_ij, m_ji


def loop_message_field(i: int, j: int, lam: int, mu: int, alpha: int, num_labels: int) -> MessageField:
    m_ij, m_ji = flow_loop_messages(lam, mu, alpha, num_labels)
    field_ = MessageField(num_labels)
    field_.set(i, j, m_ij)
    field_.set(j, i, m_ji)
    return field_


def sigma_from_messages(m_ij: Sequence[int]) -> np.ndarray:
    """Σ_{ij:λ} = m_{ij:λ-1} − m_{ij:λ} for λ = 1..ℓ-1"""
    m = np.asarray(m_ij, dtype=np.int64)
    return m[:-1] - m[1:]


def messages_from_sigma(sigma_ij: Sequence[int]) -> np.ndarray:
    """Inverse of sigma_from_messages in the gauge m_{ij:0} = 0"""
    sigma = np.asarray(sigma_ij, dtype=np.int64)
    return np.concatenate(([0], -np.cumsum(sigma))).astype(np.int64)


def trivial_path_vertices(theta: MultiLabelParams) -> List[int]:
    """Vertices whose unary is positive for every label"""
    return [int(i) for i in np.nonzero((theta.unary > 0).all(axis=1))[0]]


def _energy_chunks(theta: MultiLabelParams, cap: int) -> Iterator[np.ndarray]:
    n, ell = theta.num_vertices, theta.num_labels
    total = ell ** n
    if total > cap:
        raise CapacityError(f"{ell}^{n} labelings exceed the enumeration cap {cap}")
    powers = ell ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, _ENUMERATION_CHUNK):
        index = np.arange(start, min(total, start + _ENUMERATION_CHUNK), dtype=np.int64)
        labels = (index[:, None] // powers[None, :]) % ell
        energies = theta.unary[np.arange(n)[None, :], labels].sum(axis=1) if n \
            else np.zeros(len(index), dtype=np.int64)
        for (i, j), table in zip(theta.edges, theta.pairwise):
            energies = energies + table[labels[:, i], labels[:, j]]
        yield energies


def check_equivalence(theta: MultiLabelParams, other: MultiLabelParams, cap: int = 10_000_000) -> bool:
    """Exhaustively compare E_θ and E_θ' on every labeling"""
    if theta.num_vertices != other.num_vertices or theta.num_labels != other.num_labels:
        return False
    for left, right in zip(_energy_chunks(theta, cap), _energy_chunks(other, cap)):
        if not np.array_equal(left, right):
            return False
    return True
