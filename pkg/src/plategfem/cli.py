"""Command-line driver for the benchmark convergence studies."""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from .errors import CapabilityError, DataError, NonconvergenceError, SingularityError
from .experiments import emit_report, run_convergence
from .obstacle_solver import PdasOptions

EXIT_OK, EXIT_NONCONVERGENCE, EXIT_DATA = 0, 2, 3
MAX_DEFAULT_LEVEL = 6


def parse_levels(text):
    """``"2..6"`` -> [2, 3, 4, 5, 6]; a single integer is one level."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
        else:
            a = b = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like 'a..b', got {text!r}") from None
    if a < 1 or b < a:
        raise argparse.ArgumentTypeError(f"need 1 <= a <= b, got {text!r}")
    return list(range(a, b + 1))


def parse_delta(text):
    try:
        d = float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad delta {text!r}") from None
    if not 0 < d < 1:
        raise argparse.ArgumentTypeError("delta must lie in (0, 1)")
    return d


class _Parser(argparse.ArgumentParser):
    """Bad arguments are data errors; exit code 2 is reserved for nonconvergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_DATA, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="plategfem", description="GFEM plate obstacle benchmark runs.")
    sub = p.add_subparsers(dest="example", required=True)
    for i in range(1, 5):
        s = sub.add_parser(f"example{i}", help=f"convergence study for example {i}")
        s.add_argument("--levels", type=parse_levels, default=None, help="level range a..b (default 2..6)")
        s.add_argument("--delta", type=parse_delta, default=1.0 / 3.0, help="flat-top parameter (default 1/3)")
        s.add_argument("--space", choices=("q2", "q3"), default="q2")
        s.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        s.add_argument("--emit-matrix", action="store_true", help="write stiffness triplets per level")
        s.add_argument("--warm-start", action="store_true", help="seed PDAS with the coarser contact set")
        s.add_argument("--allow-large", action="store_true", help="permit levels above 6")
        s.add_argument("--normalization", choices=("laplacian", "hessian"), default="laplacian")
        s.add_argument("--max-iter", type=int, default=PdasOptions.max_iter)
        s.add_argument("--quiet", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    example = int(args.example.removeprefix("example"))
    levels = args.levels or list(range(2, MAX_DEFAULT_LEVEL + 1))
    if max(levels) > MAX_DEFAULT_LEVEL and not args.allow_large:
        print(f"levels above {MAX_DEFAULT_LEVEL} need --allow-large", file=sys.stderr)
        return EXIT_DATA

    def progress(rec):
        if not args.quiet:
            print(
                f"level {rec.level}: dofs={rec.dofs} energy={rec.energy_error:.6e} "
                f"linf={rec.linf_error:.6e} pdas={rec.pdas_iterations} t={rec.seconds:.1f}s",
                flush=True,
            )

    try:
        report = run_convergence(
            example,
            levels,
            delta=args.delta,
            space=args.space,
            warm_start=args.warm_start,
            opts=PdasOptions(max_iter=args.max_iter),
            matrix_dir=args.out if args.emit_matrix else None,
            log_dir=args.out,
            progress=progress,
            normalization=args.normalization,
        )
    except NonconvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (DataError, CapabilityError, SingularityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    paths = emit_report(report, args.out)
    if not args.quiet:
        for r in report.records:
            bh = "" if r.beta_h is None else f"{r.beta_h:.4f}"
            print(f"{r.level:3d}  {r.rel_energy_error:.4e}  {bh:>7}  {r.linf_error:.4e}")
        print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
