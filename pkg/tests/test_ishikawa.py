#!/usr/bin/env python3
"""
Ishikawa graph tests: θ↔φ conversion, cut semantics and the reference solver.
"""
import itertools
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project paths
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(project_root / "src"))

from energy import EnergyModel, PairwiseSpec, brute_force_minimize, evaluate_energy, generate_grid_instance, second_differences
from errors import InternalInvariantError, SubmodularityError
from ishikawa import (SINK, SOURCE, IshikawaCapacities, ResidualState, cut_cost, full_graph_values,
                      get_labelling_from_reachability, graph_size, has_augmenting_path, labels_from_reachable,
                      node_id, node_of, phi_from_theta, reference_maxflow, solve_reference, theta_from_phi)


def random_submodular_model(rng: np.random.Generator, num_vertices: int, num_labels: int,
                            edge_rate: float = 0.8) -> EnergyModel:
    """Random tables built as row term + column term + nonnegative cross mass"""
    edges = [(i, j) for i, j in itertools.combinations(range(num_vertices), 2) if rng.random() < edge_rate]
    specs = []
    for _ in edges:
        cross = rng.integers(0, 4, size=(num_labels - 1, num_labels - 1))
        caps = IshikawaCapacities(2, num_labels, [(0, 1)], np.zeros((2, num_labels)),
                                  cross={(0, 1): cross, (1, 0): np.zeros_like(cross)})
        table = theta_from_phi(caps).pairwise[0]
        table = table + rng.integers(-3, 4, size=num_labels)[:, None] + rng.integers(-3, 4, size=num_labels)[None, :]
        specs.append(PairwiseSpec.from_table(table))
    unary = rng.integers(0, 10, size=(num_vertices, num_labels))
    return EnergyModel(num_vertices, num_labels, tuple(edges), unary, tuple(specs))


def single_column(values) -> IshikawaCapacities:
    return IshikawaCapacities(1, len(values), [], np.array([values]))


def potts_pair(unary) -> EnergyModel:
    return EnergyModel(2, 2, ((0, 1),), unary, (PairwiseSpec.from_table([[0, 2], [2, 0]]),))


def test_node_numbering():
    assert node_id(0, 1, 4) == 2
    assert node_id(1, 3, 4) == 7
    for u in range(2, 2 + 3 * 4):
        i, lam = node_of(u, 5)
        assert node_id(i, lam, 5) == u


def test_graph_size_counts():
    nodes, edges = graph_size(4, 4, 3)
    assert nodes == 4 * 2 + 2
    assert edges == 4 * 3 + 4 * 2 + 2 * 4 * 4
    assert full_graph_values(4, 4, 3) == 4 * 3 + 2 * 4 * 4


def test_zero_model_gives_zero_capacities():
    model = EnergyModel(3, 3, ((0, 1), (1, 2)), np.zeros((3, 3)),
                        (PairwiseSpec.regularized(0, "linear"),) * 2)
    caps = phi_from_theta(model)
    assert caps.constant == 0
    assert not caps.column.any()
    for i, j in caps.edges:
        assert not caps.cross_caps(i, j).any()
        assert not caps.cross_caps(j, i).any()


def test_potts_cross_capacity():
    model = EnergyModel(2, 2, ((0, 1),), np.zeros((2, 2)), (PairwiseSpec.from_table([[0, 1], [1, 0]]),))
    caps = phi_from_theta(model)
    assert caps.cross_caps(0, 1).tolist() == [[2]]
    assert caps.cross_caps(1, 0).tolist() == [[0]]


def test_single_vertex_normalization():
    caps = phi_from_theta(EnergyModel(1, 3, (), [[5, 2, 7]], ()))
    assert caps.column.tolist() == [[3, 0, 5]]
    assert caps.constant == 2


def test_non_submodular_names_the_edge():
    labels = np.arange(3)
    potts = PairwiseSpec.from_table((labels[:, None] != labels[None, :]).astype(int))
    model = EnergyModel(3, 3, ((0, 1), (1, 2)), np.zeros((3, 3)),
                        (PairwiseSpec.regularized(1, "linear"), potts))
    with pytest.raises(SubmodularityError) as excinfo:
        phi_from_theta(model)
    assert (excinfo.value.i, excinfo.value.j) == (1, 2)
    assert (excinfo.value.lam, excinfo.value.mu) == (1, 2)


def test_lazy_and_materialized_capacities_agree():
    model = generate_grid_instance(3, 2, 4, "huber", 2, seed=5, huber_delta=2)
    lazy = phi_from_theta(model, materialize=False)
    full = phi_from_theta(model)
    assert not lazy.is_materialized
    for i, j in model.edges:
        assert np.array_equal(lazy.cross_caps(i, j), full.cross_caps(i, j))
        assert np.array_equal(lazy.cross_caps(j, i), full.cross_caps(j, i))


def test_theta_from_zero_phi():
    caps = IshikawaCapacities(2, 3, [(0, 1)], np.zeros((2, 3)))
    theta = theta_from_phi(caps)
    assert not theta.unary.any()
    assert not theta.pairwise[0].any()


def test_theta_from_forward_cross():
    cross = np.zeros((2, 2), dtype=np.int64)
    cross[1, 0] = 4  # φ_{ij:2,1}
    caps = IshikawaCapacities(2, 3, [(0, 1)], np.zeros((2, 3)), cross={(0, 1): cross})
    table = theta_from_phi(caps).pairwise[0]
    for lam, mu in itertools.product(range(3), repeat=2):
        assert table[lam, mu] == (4 if lam < 2 and mu >= 1 else 0)


def test_theta_from_reverse_cross():
    cross = np.zeros((2, 2), dtype=np.int64)
    cross[1, 0] = 4  # φ_{ji:2,1}
    caps = IshikawaCapacities(2, 3, [(0, 1)], np.zeros((2, 3)), cross={(1, 0): cross})
    table = theta_from_phi(caps).pairwise[0]
    for lam, mu in itertools.product(range(3), repeat=2):
        assert table[lam, mu] == (4 if mu < 2 and lam >= 1 else 0)


def test_cut_cost_single_column():
    caps = single_column([3, 0, 5])
    assert [cut_cost(caps, [x]) for x in range(3)] == [3, 0, 5]
    assert cut_cost(IshikawaCapacities(1, 3, [], np.zeros((1, 3))), [1]) == 0


def test_cut_cost_cross_membership():
    cross = np.zeros((2, 2), dtype=np.int64)
    cross[1, 0] = 4
    caps = IshikawaCapacities(2, 3, [(0, 1)], np.zeros((2, 3)), cross={(0, 1): cross})
    assert cut_cost(caps, [1, 1]) == 4
    assert cut_cost(caps, [2, 1]) == 0
    assert cut_cost(caps, [1, 0]) == 0


def test_roundtrip_energy_equals_cut_plus_constant():
    rng = np.random.default_rng(2024)
    models = [random_submodular_model(rng, 2, int(rng.integers(2, 6)), edge_rate=1.0) for _ in range(100)]
    models += [random_submodular_model(rng, int(rng.integers(1, 4)), int(rng.integers(2, 6))) for _ in range(40)]
    assert all(m.num_edges == 1 for m in models[:100])
    for model in models:
        num_labels, num_vertices = model.num_labels, model.num_vertices
        caps = phi_from_theta(model)
        assert caps.column.min() >= 0
        for x in itertools.product(range(num_labels), repeat=num_vertices):
            assert evaluate_energy(model, x) == cut_cost(caps, x) + caps.constant


def test_roundtrip_preserves_second_differences():
    rng = np.random.default_rng(77)
    for _ in range(40):
        num_labels = int(rng.integers(2, 6))
        model = random_submodular_model(rng, 3, num_labels)
        theta = theta_from_phi(phi_from_theta(model))
        for e in range(model.num_edges):
            assert np.array_equal(second_differences(theta.pairwise[e]),
                                  second_differences(model.pairwise_table(e)))


def test_reference_single_columns():
    state, labels, flow, _ = reference_maxflow(single_column([3, 0, 5]))
    assert (flow, labels) == (0, [1])
    state, labels, flow, augmentations = reference_maxflow(single_column([3, 1, 5]))
    assert (flow, labels, augmentations) == (1, [1], 1)
    assert state.caps.column.tolist() == [[2, 0, 4]]


def test_reference_potts_pair():
    model = potts_pair([[0, 3], [3, 0]])
    report = solve_reference(model)
    assert report.energy == 2
    assert report.energy == report.flow_total + report.constant
    assert report.labeling == [0, 1]


def test_reference_matches_brute_force():
    rng = np.random.default_rng(5)
    for seed in range(25):
        num_labels = int(rng.integers(2, 5))
        model = generate_grid_instance(3, 2, num_labels, ["linear", "quadratic", "huber"][seed % 3],
                                       weight=int(rng.integers(1, 4)), seed=seed)
        report = solve_reference(model)
        _, best = brute_force_minimize(model)
        assert report.energy == best
        assert evaluate_energy(model, report.labeling) == best


def test_reference_matches_networkx_min_cut():
    nx = pytest.importorskip("networkx")
    rng = np.random.default_rng(31)
    for _ in range(10):
        model = random_submodular_model(rng, 4, int(rng.integers(2, 5)))
        caps = phi_from_theta(model)
        _, _, flow, _ = reference_maxflow(caps)
        assert nx.maximum_flow_value(caps.to_networkx(), "s", "t") == flow


def test_reference_leaves_no_augmenting_path():
    model = generate_grid_instance(3, 3, 4, seed=8)
    state, labels, flow, _ = reference_maxflow(phi_from_theta(model))
    assert not has_augmenting_path(state.caps)
    assert get_labelling_from_reachability(state) == labels
    assert cut_cost(state.caps, labels) == 0
    assert state.caps.column.min() >= 0


def test_labels_from_reachability_cases():
    zero = IshikawaCapacities(2, 4, [], np.zeros((2, 4)))
    assert get_labelling_from_reachability(ResidualState(zero)) == [3, 3]
    independent = IshikawaCapacities(2, 3, [], np.array([[3, 0, 5], [0, 4, 4]]))
    assert get_labelling_from_reachability(ResidualState(independent)) == [1, 0]


def test_labels_from_reachable_rejects_bad_sets():
    num_labels = 4
    seen = [False] * (2 + num_labels - 1)
    seen[SOURCE] = True
    seen[node_id(0, 1, num_labels)] = True  # level 1 without levels 2, 3
    with pytest.raises(InternalInvariantError):
        labels_from_reachable(seen, 1, num_labels)
    seen = [True] * (2 + num_labels - 1)
    seen[SINK] = True
    with pytest.raises(InternalInvariantError):
        labels_from_reachable(seen, 1, num_labels)


def test_each_augmentation_adds_flow():
    model = generate_grid_instance(4, 3, 5, seed=21)
    caps = phi_from_theta(model)
    _, _, flow, augmentations = reference_maxflow(caps)
    assert flow >= augmentations >= 0
    report = solve_reference(model)
    assert report.flow_total == flow
    assert report.stored_values_peak >= 2 * (5 - 1) ** 2 * model.num_edges
