#!/usr/bin/env python3
"""
End-to-end properties of the three max-flow solvers.

The default run uses reduced instance counts and sizes; tests marked slow
run the full-size versions (pytest -m slow).
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

# Add project paths
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(project_root / "src"))

from energy import brute_force_minimize, generate_grid_instance
from ishikawa import graph_size, solve_reference
from memf_block import solve_block
from memf_poly import solve_poly
from repar import messages_from_sigma, sigma_from_messages

SOLVE = {"reference": solve_reference, "poly": solve_poly, "block": solve_block}
REGULARIZERS = [("linear", 1), ("quadratic", 1), ("huber", 1)]


def solve_all(model):
    return {name: solver(model) for name, solver in SOLVE.items()}


def check_flow_identity(model, reports):
    nodes, edges = graph_size(model.num_vertices, model.num_edges, model.num_labels)
    for report in reports.values():
        assert report.energy == report.flow_total + report.constant
    assert reports["poly"].augmentations <= nodes * edges


def exactness_against_brute_force(count: int):
    for seed in range(count):
        regularizer, delta = REGULARIZERS[seed % 3]
        model = generate_grid_instance(3, 3, 3, regularizer, weight=1 + seed % 5, unary_max=21,
                                       seed=seed, huber_delta=delta)
        _, best = brute_force_minimize(model)
        reports = solve_all(model)
        check_flow_identity(model, reports)
        for name, report in reports.items():
            assert report.energy == best, f"{name} on seed {seed}: {report.energy} != {best}"


def test_exactness_against_brute_force():
    exactness_against_brute_force(30)


@pytest.mark.slow
def test_exactness_against_brute_force_full():
    started = time.perf_counter()
    exactness_against_brute_force(200)
    assert time.perf_counter() - started < 30


def solver_agreement(size: int, labels, seeds: int, time_limit=None):
    for num_labels in labels:
        for seed in range(seeds):
            model = generate_grid_instance(size, size, num_labels, "quadratic", seed=seed)
            reports = solve_all(model)
            check_flow_identity(model, reports)
            assert len({r.energy for r in reports.values()}) == 1
            if time_limit is not None:
                assert max(r.wall_time_ms for r in reports.values()) < time_limit * 1000


def test_solver_agreement():
    solver_agreement(8, (4, 8), 3)


def test_solver_agreement_within_time_budget():
    solver_agreement(16, (4,), 2, time_limit=5)


@pytest.mark.slow
def test_solver_agreement_full():
    solver_agreement(16, (4, 8, 16), 20, time_limit=5)


def diagnostics_runs(size: int, seeds: int):
    poly_checks = block_checks = 0
    for seed in range(seeds):
        model = generate_grid_instance(size, size, 4, "quadratic", seed=seed)
        poly = solve_poly(model, diagnostics=True)
        block = solve_block(model, diagnostics=True)
        assert poly.diagnostics.distance_violations == 0
        assert poly.diagnostics.existence_mismatches == 0
        assert block.diagnostics.existence_mismatches == 0
        assert poly.diagnostics.column_mismatches == 0
        assert block.diagnostics.column_mismatches == 0
        assert poly.energy == block.energy
        poly_checks += poly.diagnostics.existence_checks
        block_checks += block.diagnostics.existence_checks
    return poly_checks, block_checks


def test_distances_and_path_existence():
    poly_checks, block_checks = diagnostics_runs(5, 3)
    assert poly_checks >= 3 and block_checks >= 3


@pytest.mark.slow
def test_distances_and_path_existence_full():
    poly_checks, block_checks = diagnostics_runs(8, 10)
    assert poly_checks >= 100
    assert block_checks >= 100


def test_sigma_message_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(200):
        sigma = rng.integers(-50, 51, size=int(rng.integers(1, 16)))
        assert np.array_equal(sigma_from_messages(messages_from_sigma(sigma)), sigma)


def storage_claim(size: int, num_labels: int):
    model = generate_grid_instance(size, size, num_labels, "quadratic", seed=0)
    block = solve_block(model)
    reference = solve_reference(model)
    assert block.energy == reference.energy
    num_edges, num_vertices = model.num_edges, model.num_vertices
    assert block.stored_values_peak <= 6 * num_labels * num_edges + 2 * num_labels * num_vertices
    assert reference.stored_values_peak >= 2 * (num_labels - 1) ** 2 * num_edges
    assert reference.stored_values_peak >= 4 * block.stored_values_peak
    return block


def test_storage_claim():
    storage_claim(8, 16)


@pytest.mark.slow
def test_storage_claim_full():
    started = time.perf_counter()
    storage_claim(64, 16)
    assert time.perf_counter() - started < 60


@pytest.mark.slow
def test_block_needs_fewer_augmentations():
    ratios = []
    for seed in range(20):
        model = generate_grid_instance(16, 16, 8, "quadratic", seed=seed)
        block = solve_block(model)
        reference = solve_reference(model)
        ratios.append(block.augmentations / max(reference.augmentations, 1))
    fewer = sum(1 for r in ratios if r < 1.0)
    print(f"median block/reference augmentation ratio: {np.median(ratios):.3f}")
    assert fewer >= 18


def test_block_paths_rarely_need_the_subgraph_fallback():
    for seed in range(3):
        model = generate_grid_instance(10, 10, 8, "quadratic", seed=seed)
        block = solve_block(model)
        assert block.augmentations > 0
        assert 10 * block.counters["path_fallbacks"] <= block.augmentations
