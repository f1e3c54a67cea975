"""
Solver comparison and stored-result analysis.

compare runs several solvers over seeded instances and prints one table row
per (instance, solver); main reports on results saved with --db.
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from energy import EnergyModel
from errors import MemflowError, SolverDisagreementError
from ishikawa import full_graph_values
from results_store import DEFAULT_DB_PATH, ResultsStore, load_reports
from run import add_instance_arguments, build_model, check_agreement, configure_logging, run_solver
from solve_report import SolveReport, summarize_path_lengths
from solver_config import SOLVER_NAMES, load_config

logger = logging.getLogger(__name__)

Instance = Tuple[int, Optional[int], EnergyModel]


def solve_instances(instances: Sequence[Instance], solvers: Sequence[str], diagnostics: bool = False,
                    sample_every: int = 1, cap: int = 10_000_000, workers: int = 1) -> List[List[SolveReport]]:
    """
    Run every solver on every instance.

    Each solve is single-threaded; with workers > 1 instances run
    concurrently. Results come back in instance order.
    """
    def solve_one(instance: Instance) -> List[SolveReport]:
        _, _, model = instance
        return [run_solver(name, model, diagnostics, sample_every, cap) for name in solvers]

    if workers <= 1:
        return [solve_one(instance) for instance in instances]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(solve_one, instances))


def comparison_table(instances: Sequence[Instance], results: Sequence[Sequence[SolveReport]],
                     include_time: bool = False) -> pd.DataFrame:
    """
    One row per (instance, solver).

    aug_ratio is augmentations over the reference solver's count on the same
    instance; storage_ratio is the full Ishikawa graph's value count over
    stored_values_peak.
    """
    rows = []
    for (index, seed, model), reports in zip(instances, results):
        reference = next((r for r in reports if r.solver == "reference"), None)
        full = full_graph_values(model.num_vertices, model.num_edges, model.num_labels)
        for report in reports:
            row = {
                "instance": index,
                "seed": seed,
                "solver": report.solver,
                "energy": report.energy,
                "augmentations": report.augmentations,
                "stored_values_peak": report.stored_values_peak,
                "full_graph_values": full,
                "storage_ratio": round(full / report.stored_values_peak, 3) if report.stored_values_peak else None,
                "aug_ratio": (round(report.augmentations / reference.augmentations, 3)
                              if reference is not None and reference.augmentations else None),
            }
            if include_time:
                row["time_ms"] = round(report.wall_time_ms, 1)
            rows.append(row)
    return pd.DataFrame(rows)


def disagreements(instances: Sequence[Instance], results: Sequence[Sequence[SolveReport]]) -> List[str]:
    """One line per instance whose solvers disagree"""
    lines = []
    for (index, seed, _), reports in zip(instances, results):
        try:
            check_agreement(reports, f"instance {index} (seed {seed})")
        except SolverDisagreementError as e:
            lines.append(str(e))
    return lines


def path_length_summary(results: Sequence[Sequence[SolveReport]]) -> Dict[str, Dict]:
    """Per solver: pooled path-length histogram and median (diagnostic runs)"""
    pooled: Dict[str, List[int]] = {}
    for reports in results:
        for report in reports:
            if report.diagnostics is not None and report.diagnostics.path_lengths:
                pooled.setdefault(report.solver, []).extend(report.diagnostics.path_lengths)
    return {solver: summarize_path_lengths(lengths) for solver, lengths in pooled.items()}


def print_comparison(table: pd.DataFrame):
    print("Solver Comparison\n" + "=" * 40)
    print(table.to_string(index=False))
    if "aug_ratio" in table and table["aug_ratio"].notna().any():
        ratios = table[(table["solver"] != "reference") & table["aug_ratio"].notna()]
        if not ratios.empty:
            print("\nMedian augmentation ratio vs reference")
            print("-" * 40)
            for solver, group in ratios.groupby("solver", sort=True):
                fewer = int((group["aug_ratio"] < 1.0).sum())
                print(f"{solver:<12} {group['aug_ratio'].median():.3f}  "
                      f"(fewer augmentations on {fewer}/{len(group)} instances)")


def compare(argv: Optional[Sequence[str]] = None) -> int:
    """The compare command; returns the process exit code"""
    parser = argparse.ArgumentParser(description='Compare solvers on seeded instances')
    add_instance_arguments(parser)
    parser.add_argument('--solvers', default='reference,poly,block',
                        help='Comma-separated solvers (at least two)')
    parser.add_argument('--instances', type=int, default=1, help='Number of seeded instances')
    parser.add_argument('--workers', type=int, default=1, help='Instances solved concurrently')
    parser.add_argument('--diagnostics', action='store_true', help='Runtime invariant checks')
    parser.add_argument('--time', action='store_true', help='Add a wall-time column')
    parser.add_argument('--csv', help='Write the table to a CSV file')
    parser.add_argument('--db', nargs='?', const=DEFAULT_DB_PATH, help='Store reports in a sqlite file')
    args = parser.parse_args(argv)

    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    if len(solvers) < 2:
        parser.error("compare needs at least two solvers")
    unknown = [s for s in solvers if s not in SOLVER_NAMES]
    if unknown:
        parser.error(f"unknown solver(s): {', '.join(unknown)}")
    if args.instances < 1:
        parser.error("--instances must be >= 1")

    try:
        config = load_config(args.config)
        configure_logging(args.log_level, config)
        first_seed = args.seed if args.seed is not None else config.grid.seed
        instances: List[Instance] = []
        for index in range(args.instances):
            seed = None if args.input else first_seed + index
            instances.append((index, seed, build_model(args, config, seed)))

        results = solve_instances(instances, solvers, args.diagnostics, config.solver.sample_every,
                                  config.solver.brute_force_cap, args.workers)
        table = comparison_table(instances, results, args.time)
        print_comparison(table)
        if args.diagnostics:
            for solver, stats in path_length_summary(results).items():
                print(f"\n{solver} path lengths: median {stats['median']}, histogram {stats['histogram']}")
        if args.csv:
            table.to_csv(args.csv, index=False)
        if args.db:
            with ResultsStore(args.db, "compare") as db:
                for (index, seed, model), reports in zip(instances, results):
                    for report in reports:
                        db.add_report(report, index, seed, model)

        problems = disagreements(instances, results)
        if problems:
            print("\nEnergy disagreement", file=sys.stderr)
            for line in problems:
                print(f"  {line}", file=sys.stderr)
            return 2
    except MemflowError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


def get_solver_summary(db_path: str = DEFAULT_DB_PATH) -> pd.DataFrame:
    """Per-solver aggregates over every stored report"""
    reports = pd.DataFrame(load_reports(db_path))
    if reports.empty:
        return reports
    reports["full_graph_values"] = (reports["num_labels"] * reports["num_vertices"]
                                    + 2 * (reports["num_labels"] - 1) ** 2 * reports["num_edges"])
    summary = reports.groupby("solver", sort=True).agg(
        runs=("id", "count"),
        mean_augmentations=("augmentations", "mean"),
        mean_stored_values=("stored_values_peak", "mean"),
        mean_full_graph_values=("full_graph_values", "mean"),
        mean_time_ms=("wall_time_ms", "mean"),
    )
    summary["storage_ratio"] = summary["mean_full_graph_values"] / summary["mean_stored_values"]
    return summary.reset_index()


def get_augmentation_ratios(db_path: str = DEFAULT_DB_PATH, solver: str = "block") -> pd.Series:
    """solver / reference augmentation counts for instances stored in the same run"""
    reports = pd.DataFrame(load_reports(db_path))
    if reports.empty:
        return pd.Series(dtype=float)
    keyed = reports.set_index(["run_id", "instance_index", "solver"])["augmentations"]
    keyed = keyed[~keyed.index.duplicated(keep="last")].unstack("solver")
    if solver not in keyed or "reference" not in keyed:
        return pd.Series(dtype=float)
    pairs = keyed[[solver, "reference"]].dropna()
    pairs = pairs[pairs["reference"] > 0]
    return pairs[solver] / pairs["reference"]


def print_solver_report(db_path: str = DEFAULT_DB_PATH):
    """Print per-solver aggregates"""
    print("Stored Solver Report\n" + "=" * 50)
    summary = get_solver_summary(db_path)
    if summary.empty:
        print("No solve reports found in database")
        return
    print(f"{'Solver':<12} {'Runs':<6} {'Mean Augs':<12} {'Mean Stored':<14} {'Storage Ratio':<14} {'Mean ms'}")
    print("-" * 70)
    for row in summary.itertuples(index=False):
        print(f"{row.solver:<12} {row.runs:<6} {row.mean_augmentations:<12.1f} "
              f"{row.mean_stored_values:<14.0f} {row.storage_ratio:<14.2f} {row.mean_time_ms:.1f}")


def print_solver_comparison(db_path: str = DEFAULT_DB_PATH):
    """Print the median augmentation ratio of each memory-efficient solver"""
    print("\nAugmentations vs Reference\n" + "=" * 40)
    printed = False
    for solver in ("poly", "block"):
        ratios = get_augmentation_ratios(db_path, solver)
        if ratios.empty:
            continue
        printed = True
        fewer = int((ratios < 1.0).sum())
        print(f"{solver:<8} median ratio {ratios.median():.3f}, fewer on {fewer}/{len(ratios)} instances")
    if not printed:
        print("No paired reference runs found")


def export_to_json(db_path: str = DEFAULT_DB_PATH, output_file: str = "memflow_results.json"):
    """Export stored reports and the per-solver summary to JSON"""
    summary = get_solver_summary(db_path)
    export_data = {
        "solver_summary": json.loads(summary.to_json(orient="records")) if not summary.empty else [],
        "augmentation_ratios": {
            solver: [float(v) for v in get_augmentation_ratios(db_path, solver)]
            for solver in ("poly", "block")
        },
        "reports": load_reports(db_path),
    }
    with open(output_file, 'w') as f:
        json.dump(export_data, f, indent=2)
    print(f"Results exported to {output_file}")


def main(argv: Optional[Sequence[str]] = None):
    parser = argparse.ArgumentParser(description='Analyze stored memflow results')
    parser.add_argument('--db', default=DEFAULT_DB_PATH, help='Database file path')
    parser.add_argument('--export', help='Export to JSON file')
    parser.add_argument('--report', action='store_true', help='Show per-solver report')
    parser.add_argument('--compare', action='store_true', help='Show augmentation comparison')
    args = parser.parse_args(argv)

    if args.export:
        export_to_json(args.db, args.export)

    if args.report or (not args.export and not args.compare):
        print_solver_report(args.db)

    if args.compare or (not args.export and not args.report):
        print_solver_comparison(args.db)


if __name__ == "__main__":
    main()
