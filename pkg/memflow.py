# Import Required Packages
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent / "src"))
from analyze import compare as compare_solvers
from analyze import main as analyze_results
from run import generate as generate_instance
from run import run as solve_instance


COMMANDS = {
    'solve': solve_instance,
    'compare': compare_solvers,
    'generate': generate_instance,
}

USAGE = """usage: memflow.py {solve,compare,generate,analyze} [options]

Examples:
  memflow.py solve --gen grid 16x16 --labels 8 --solver block --verify
  memflow.py solve --input inst.mrf --solver poly --diagnostics
  memflow.py solve --gen grid 32x32 --labeling-out labels.pgm --db
  memflow.py compare --gen grid 16x16 --solvers reference,block --instances 10
  memflow.py generate --gen inpaint 64x64 --labels 16 --out inst.mrf
  memflow.py analyze --report           # Stored per-solver report
  memflow.py analyze --compare          # Augmentations vs reference
  memflow.py analyze --export out.json  # Export to JSON

Run 'memflow.py <command> --help' for the options of one command."""


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ('-h', '--help'):
        print(USAGE)
        return 0 if argv else 1

    command, rest = argv[0], argv[1:]
    if command == 'analyze':
        analyze_results(rest)
        return 0
    if command not in COMMANDS:
        print(f"Error: unknown command {command!r}", file=sys.stderr)
        print(USAGE, file=sys.stderr)
        return 1

    try:
        return COMMANDS[command](rest)
    except KeyboardInterrupt:
        print("\n Interrupted by user", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
