"""
Solve and generate commands.

Exit codes: 0 success, 1 any memflow error, 2 solvers disagree under --verify.
"""
import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from energy import EnergyModel, brute_force_minimize, generate_grid_instance, generate_inpainting_instance
from errors import InvalidArgumentError, MemflowError, SolverDisagreementError
from instance_io import read_instance, serialize_instance, write_instance, write_pgm
from ishikawa import phi_from_theta, solve_reference
from memf_block import solve_block
from memf_poly import solve_poly
from results_store import DEFAULT_DB_PATH, ResultsStore
from solve_report import SolveReport, SolverDiagnostics
from solver_config import REGULARIZER_NAMES, SOLVER_NAMES, MemflowConfig, load_config

logger = logging.getLogger(__name__)

GENERATORS = ("grid", "inpaint")

Solver = Callable[..., SolveReport]


def solve_bruteforce(model: EnergyModel, cap: int = 10_000_000, **_) -> SolveReport:
    """Exhaustive minimum; flow_total is the max-flow value it implies"""
    started = time.perf_counter()
    labeling, energy = brute_force_minimize(model, cap)
    constant = phi_from_theta(model, materialize=False).constant if model.num_vertices else 0
    return SolveReport(
        solver="bruteforce",
        energy=energy,
        flow_total=energy - constant,
        constant=constant,
        labeling=labeling,
        wall_time_ms=(time.perf_counter() - started) * 1000.0,
    )


SOLVERS: Dict[str, Solver] = {
    "bruteforce": solve_bruteforce,
    "reference": lambda model, **_: solve_reference(model),
    "poly": lambda model, diagnostics=False, sample_every=1, **_: solve_poly(model, diagnostics, sample_every),
    "block": lambda model, diagnostics=False, sample_every=1, **_: solve_block(model, diagnostics, sample_every),
}


def get_solver(name: str) -> Solver:
    if name not in SOLVERS:
        raise InvalidArgumentError(f"unknown solver {name!r}; choose from {', '.join(SOLVER_NAMES)}")
    return SOLVERS[name]


def run_solver(name: str, model: EnergyModel, diagnostics: bool = False, sample_every: int = 1,
               cap: int = 10_000_000) -> SolveReport:
    return get_solver(name)(model, diagnostics=diagnostics, sample_every=sample_every, cap=cap)


def parse_grid_size(text: str) -> Tuple[int, int]:
    """'WxH' -> (W, H)"""
    parts = text.lower().split("x")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise InvalidArgumentError(f"grid size must look like WxH, got {text!r}")
    width, height = int(parts[0]), int(parts[1])
    if width < 1 or height < 1:
        raise InvalidArgumentError(f"grid must be at least 1x1, got {text}")
    return width, height


def add_instance_arguments(parser: argparse.ArgumentParser):
    """Flags that select or generate one instance; defaults come from config.json"""
    source = parser.add_mutually_exclusive_group()
    source.add_argument('--gen', nargs=2, metavar=('KIND', 'WxH'),
                        help=f'Generate an instance: one of {", ".join(GENERATORS)} plus a size')
    source.add_argument('--input', help='Instance file')
    parser.add_argument('--labels', type=int, help='Label count L')
    parser.add_argument('--reg', help=f'Regularizer: {"|".join(REGULARIZER_NAMES)}')
    parser.add_argument('--huber-delta', type=int, help='Huber delta')
    parser.add_argument('--weight', type=int, help='Regularizer weight')
    parser.add_argument('--unary-max', type=int, help='Unaries are drawn from 0..U-1')
    parser.add_argument('--seed', type=int, help='Random seed')
    parser.add_argument('--scale', help="Multiply --input file values by K (rationals allowed); rejected for generated instances")
    parser.add_argument('--config', help='Config file path')
    parser.add_argument('--log-level', help='Logging level (default from config)')


def configure_logging(level: Optional[str], config: MemflowConfig):
    name = (level or config.solver.log_level).upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        raise InvalidArgumentError(f"unknown log level {name!r}")
    logging.basicConfig(level=numeric, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(numeric)


def build_model(args: argparse.Namespace, config: MemflowConfig, seed: Optional[int] = None) -> EnergyModel:
    """Instance from --input or --gen, missing values filled from config"""
    if args.input:
        return read_instance(args.input, args.scale)
    if args.scale is not None:
        raise InvalidArgumentError("--scale applies to instance files (--input) only")
    grid = config.grid
    kind, size = args.gen if args.gen else ("grid", f"{grid.width}x{grid.height}")
    if kind not in GENERATORS:
        raise InvalidArgumentError(f"unknown generator {kind!r}; choose from {', '.join(GENERATORS)}")
    width, height = parse_grid_size(size)
    regularizer = args.reg or grid.regularizer
    if regularizer not in REGULARIZER_NAMES:
        raise InvalidArgumentError(f"unknown regularizer {regularizer!r}")
    params = dict(
        width=width,
        height=height,
        num_labels=args.labels if args.labels is not None else grid.labels,
        regularizer=regularizer,
        weight=args.weight if args.weight is not None else grid.weight,
        unary_max=args.unary_max if args.unary_max is not None else grid.unary_max,
        seed=seed if seed is not None else (args.seed if args.seed is not None else grid.seed),
        huber_delta=args.huber_delta if args.huber_delta is not None else grid.huber_delta,
    )
    generate = generate_grid_instance if kind == "grid" else generate_inpainting_instance
    return generate(**params)


def check_agreement(reports: Sequence[SolveReport], instance: Optional[str] = None):
    """
    Raises:
        SolverDisagreementError: the reports do not share one energy
    """
    energies = {report.solver: report.energy for report in reports}
    if len(set(energies.values())) > 1:
        raise SolverDisagreementError(energies, instance)


def diagnostics_lines(diag: SolverDiagnostics) -> List[str]:
    lines = [
        f"diag_existence_checks={diag.existence_checks}",
        f"diag_existence_mismatches={diag.existence_mismatches}",
        f"diag_column_mismatches={diag.column_mismatches}",
    ]
    if diag.distance_checks:
        lines.append(f"diag_distance_checks={diag.distance_checks}")
        lines.append(f"diag_distance_violations={diag.distance_violations}")
    stats = diag.path_length_stats()
    if stats is not None:
        lines.append(f"diag_path_length_median={stats['median']}")
        histogram = ",".join(f"{k}:{v}" for k, v in stats["histogram"].items())
        lines.append(f"diag_path_length_histogram={histogram}")
    return lines


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Solve one multi-label MRF instance')
    add_instance_arguments(parser)
    parser.add_argument('--solver', help=f'Solver: {"|".join(SOLVER_NAMES)}')
    parser.add_argument('--verify', action='store_true',
                        help='Also run every other solver and require equal energies')
    parser.add_argument('--diagnostics', action='store_true',
                        help='Runtime invariant checks (slow)')
    parser.add_argument('--sample-every', type=int, help='Diagnostics sampling interval')
    parser.add_argument('--labeling-out', help='Write the labeling as a PGM image (grid instances)')
    parser.add_argument('--report-out', help='Write the key=value report to a file')
    parser.add_argument('--db', nargs='?', const=DEFAULT_DB_PATH, help='Store the report in a sqlite file')
    return parser


def solve(args: argparse.Namespace, config: MemflowConfig) -> Tuple[SolveReport, EnergyModel]:
    """Run the selected solver (and, with --verify, every other applicable one)"""
    name = args.solver or config.solver.default_solver
    get_solver(name)
    model = build_model(args, config)
    sample_every = args.sample_every or config.solver.sample_every
    cap = config.solver.brute_force_cap
    report = run_solver(name, model, args.diagnostics, sample_every, cap)

    if args.verify:
        reports = [report]
        for other in SOLVER_NAMES:
            if other == name:
                continue
            if other == "bruteforce" and model.num_labels ** model.num_vertices > cap:
                logger.info("skipping brute force: %d^%d labelings", model.num_labels, model.num_vertices)
                continue
            reports.append(run_solver(other, model, False, sample_every, cap))
        check_agreement(reports, args.input or " ".join(args.gen or ()))
    return report, model


def run(argv: Optional[Sequence[str]] = None) -> int:
    """The solve command; returns the process exit code"""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        configure_logging(args.log_level, config)
        report, model = solve(args, config)

        text = report.to_key_value()
        if report.diagnostics is not None:
            text += "\n".join(diagnostics_lines(report.diagnostics)) + "\n"
        print(text, end="")
        if args.report_out:
            Path(args.report_out).write_text(text)
        if args.labeling_out:
            if model.grid_shape is None:
                raise InvalidArgumentError("--labeling-out needs a grid instance")
            width, height = model.grid_shape
            write_pgm(args.labeling_out, report.labeling, width, height, model.num_labels)
        if args.db:
            with ResultsStore(args.db, "solve") as db:
                db.add_report(report, 0, args.seed, model)
    except SolverDisagreementError as e:
        print(f"Error: {e}", file=sys.stderr)
        for solver, energy in e.energies.items():
            print(f"  {solver}: {energy}", file=sys.stderr)
        return 2
    except MemflowError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


def generate(argv: Optional[Sequence[str]] = None) -> int:
    """Write a generated instance to --out (or stdout)"""
    parser = argparse.ArgumentParser(description='Generate an instance file')
    add_instance_arguments(parser)
    parser.add_argument('--out', help='Output file (default stdout)')
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        configure_logging(args.log_level, config)
        if args.input:
            raise InvalidArgumentError("generate takes --gen, not --input")
        model = build_model(args, config)
        if args.out:
            write_instance(args.out, model)
            print(f"Wrote {model.num_vertices} vertices, {model.num_edges} edges to {args.out}")
        else:
            print(serialize_instance(model), end="")
    except MemflowError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
