#!/usr/bin/env python3
"""
Lower-graph solver tests: records, 0-1 distances, augmentation and full solves.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project paths
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(project_root / "src"))

from energy import EnergyModel, PairwiseSpec, brute_force_minimize, evaluate_energy, generate_grid_instance
from flowcodec import FlowStore, column_flows
from ishikawa import CROSS, DOWN, SINK, SOURCE, TOP, UP, IshikawaCapacities, node_id, solve_reference
from memf_poly import (UNREACHED, AugPath, build_lower_graph, augment, shortest_augmenting_path, solve_poly,
                       zero_one_distances)


def two_columns(column, phi_01, phi_10=None) -> IshikawaCapacities:
    phi_01 = np.array(phi_01)
    cross = {(0, 1): phi_01, (1, 0): np.zeros_like(phi_01) if phi_10 is None else np.array(phi_10)}
    return IshikawaCapacities(2, len(column[0]), [(0, 1)], np.array(column), cross=cross)


def test_lower_graph_keeps_lowest_positive_edge():
    caps = two_columns([[0, 0, 0, 0], [0, 0, 0, 0]], [[0, 5, 3], [0, 0, 0], [2, 0, 1]])
    lg = build_lower_graph(caps)
    assert lg.record_level[(0, 1)] == [2, 0, 1]
    assert lg.record_cap[(0, 1)] == [5, 0, 2]
    assert lg.record_level[(1, 0)] == [0, 0, 0]
    assert lg.record_cap[(1, 0)] == [0, 0, 0]
    assert lg.value_count() == 2 * 4 + 2 * 6


def test_pins_follow_records():
    caps = two_columns([[0, 0, 0], [0, 0, 0]], [[0, 4], [0, 0]])
    lg = build_lower_graph(caps)
    assert lg.pins(0, 1) == [2, 3]
    lg.record_cap[(0, 1)][0] = 0
    assert lg.pins(0, 1) == [3, 3]


def test_single_column_path():
    caps = IshikawaCapacities(1, 3, [], np.array([[3, 1, 5]]))
    lg = build_lower_graph(caps)
    path = shortest_augmenting_path(lg)
    assert path.nodes == [SOURCE, node_id(0, 2, 3), node_id(0, 1, 3), SINK]
    assert path.kinds == [TOP, DOWN, DOWN]
    assert path.length == 3

    store = FlowStore(1, 3, [])
    assert augment(lg, path, store, caps) == 1
    assert lg.column == [[2, 0, 4]]
    assert store.source_flow == [1]
    assert store.total_flow == 1
    assert shortest_augmenting_path(lg) is None


def test_single_column_without_path():
    lg = build_lower_graph(IshikawaCapacities(1, 3, [], np.array([[3, 0, 5]])))
    assert shortest_augmenting_path(lg) is None
    dist, _, _ = zero_one_distances(lg, stop_at_sink=False)
    assert dist[SINK] == UNREACHED
    assert dist[node_id(0, 2, 3)] == 1
    assert dist[node_id(0, 1, 3)] == UNREACHED


def test_upward_edges_are_free():
    # the only route climbs column 1 between two cross edges
    caps = two_columns([[1, 0, 1], [0, 0, 0]], [[0, 0], [1, 0]], [[0, 0], [1, 0]])
    lg = build_lower_graph(caps)
    dist, _, _ = zero_one_distances(lg, stop_at_sink=False)
    assert dist[node_id(1, 1, 3)] == 2
    assert dist[node_id(1, 2, 3)] == 2
    path = shortest_augmenting_path(lg)
    assert path.kinds == [TOP, CROSS, UP, CROSS, DOWN]
    assert path.length == 4
    assert path.kind_names()[2] == "infinite-up"

    store = FlowStore(2, 3, [(0, 1)])
    assert augment(lg, path, store, caps) == 1
    assert lg.column == [[0, 0, 0], [0, 1, 0]]
    assert shortest_augmenting_path(lg) is None


def test_saturated_record_is_rebuilt():
    caps = two_columns([[0, 0, 2], [1, 0, 0]], [[0, 0], [1, 3]])
    lg = build_lower_graph(caps)
    store = FlowStore(2, 3, [(0, 1)])
    path = shortest_augmenting_path(lg)
    assert path.nodes == [SOURCE, node_id(0, 2, 3), node_id(1, 1, 3), SINK]
    assert augment(lg, path, store, caps) == 1
    # e_{01:2,1} is spent; the next lowest target is μ=2
    assert lg.record_level[(0, 1)] == [0, 2]
    assert lg.record_cap[(0, 1)] == [0, 3]
    # the pushed unit shows up as a reverse edge U_{1:1} → U_{0:2}
    assert lg.record_level[(1, 0)] == [2, 0]
    assert lg.record_cap[(1, 0)] == [1, 0]
    assert lg.column == [[0, 0, 1], [0, 0, 0]]
    for i in range(2):
        assert [int(c) - f for c, f in zip(caps.column[i], column_flows(store, i))] == lg.column[i]


def test_aug_path_length_skips_upward_edges():
    path = AugPath([SOURCE, 4, 5, SINK], [TOP, UP, DOWN])
    assert path.length == 2
    assert path.kind_names() == ["column-down", "infinite-up", "column-down"]


def test_solve_zero_model():
    model = EnergyModel(3, 3, ((0, 1), (1, 2)), np.zeros((3, 3)),
                        (PairwiseSpec.regularized(0, "linear"),) * 2)
    report = solve_poly(model)
    assert report.energy == 0
    assert report.augmentations == 0
    assert evaluate_energy(model, report.labeling) == 0


def test_solve_potts_pair():
    model = EnergyModel(2, 2, ((0, 1),), [[0, 3], [3, 0]], (PairwiseSpec.from_table([[0, 2], [2, 0]]),))
    report = solve_poly(model)
    assert report.energy == 2
    assert report.labeling == [0, 1]


def test_solve_matches_brute_force():
    for seed in range(15):
        model = generate_grid_instance(3, 2, 2 + seed % 3, ["linear", "quadratic", "huber"][seed % 3],
                                       weight=1 + seed % 4, seed=seed)
        report = solve_poly(model)
        _, best = brute_force_minimize(model)
        assert report.energy == best
        assert evaluate_energy(model, report.labeling) == best


@pytest.mark.parametrize("regularizer", ["linear", "quadratic", "huber"])
def test_solve_matches_reference(regularizer):
    model = generate_grid_instance(5, 4, 6, regularizer, weight=2, seed=17, huber_delta=2)
    reference = solve_reference(model)
    report = solve_poly(model)
    assert report.energy == reference.energy
    # the source side of a minimum cut reachable in the residual is unique
    assert report.labeling == reference.labeling
    assert report.stored_values_peak < reference.stored_values_peak


def test_phased_search_matches_single_paths():
    for seed in range(4):
        model = generate_grid_instance(6, 5, 5, ["quadratic", "huber"][seed % 2], weight=3, seed=seed)
        phased = solve_poly(model)
        single = solve_poly(model, diagnostics=True)
        assert phased.energy == single.energy
        assert phased.labeling == single.labeling
        assert phased.counters["phases"] <= phased.augmentations
        if phased.augmentations:
            assert phased.counters["phases"] >= 1
        assert single.counters == {}


def test_diagnostics_find_no_violations():
    model = generate_grid_instance(4, 4, 5, "huber", weight=3, seed=2, huber_delta=2)
    report = solve_poly(model, diagnostics=True)
    diag = report.diagnostics
    assert diag.distance_violations == 0
    assert diag.existence_mismatches == 0
    assert diag.column_mismatches == 0
    assert diag.existence_checks == report.augmentations + 1
    assert diag.distance_checks == report.augmentations
    assert len(diag.distance_trace) == report.augmentations + 1
    assert len(diag.path_lengths) == report.augmentations
    assert min(diag.path_lengths) >= 2


def test_sampled_existence_checks():
    model = generate_grid_instance(4, 3, 4, seed=6)
    report = solve_poly(model, diagnostics=True, sample_every=1000)
    # first iteration and the final one
    assert report.diagnostics.existence_checks == (1 if report.augmentations == 0 else 2)
    assert report.diagnostics.existence_mismatches == 0
