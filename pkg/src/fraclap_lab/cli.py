"""``fraclap-lab <solve|measure|verify|sweep> [flags]``.

Exit codes: 0 success, 1 parameter error, 2 convergence error,
3 measurement error.  Values from ``--config`` are overridden by flags
given on the command line.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .errors import FracLabError, ParameterError


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags, which would collide with
    # the convergence-error code
    def error(self, message):
        raise ParameterError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fraclap-lab", description="Fractional p-Laplacian regularity lab (1-D).",
                 argument_default=argparse.SUPPRESS)
    ap.add_argument("command", choices=harness.COMMANDS)
    ap.add_argument("--p", help="integrability exponent, > 1 (default 2)")
    ap.add_argument("--s", help="fractional order in (0, 1) (default 0.5)")
    ap.add_argument("--rhs", help="source: const:<v>, bump or file:<path> (default const:1)")
    ap.add_argument("--diffusivity", help="const:<v> or file:<path> (default: A = 1)")
    ap.add_argument("--n", help="number of cells on the window (default 2048)")
    ap.add_argument("--L", help="window half-width (default 8a for solve, 2a otherwise)")
    ap.add_argument("--a", help="domain half-width (default 1)")
    ap.add_argument("--tol", help="relative gradient tolerance of the optimizer")
    ap.add_argument("--out", help="output CSV path")
    ap.add_argument("--input", help="measure: solution CSV to probe instead of solving")
    ap.add_argument("--config", help="key = value file with defaults for any flag")
    ap.add_argument("--suite", help="verify: comma-separated suites or 'all'")
    ap.add_argument("--p-list", dest="p_list", help="sweep: comma-separated p values")
    ap.add_argument("--s-list", dest="s_list", help="sweep: comma-separated s values")
    ap.add_argument("--hmin", help="smallest probe step (default a/256)")
    ap.add_argument("--hmax", help="largest probe step (default a/16)")
    ap.add_argument("--workers", help="sweep: concurrent rows (default 1)")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    return ap


def config_from_args(argv) -> harness.RunConfig:
    args = vars(build_parser().parse_args(argv))
    verbose = args.pop("verbose", False)
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    values = {}
    path = args.pop("config", None)
    if path is not None:
        values.update(harness.read_config_file(path))
    values.update(args)
    return harness.RunConfig.from_mapping(values)


def _report_solve(cfg):
    sol = harness.run_solve(cfg)
    g = sol.u.grid
    print(f"converged: iterations={sol.iterations} energy={sol.energy:.10g} "
          f"residual={sol.residual:.3e} u(0)={sol.u.values[g.n_cells // 2]:.6f}")
    return 0


def _report_measure(cfg):
    pr = harness.run_measure(cfg)
    print(f"slope={pr.slope:.6f} residual={pr.residual:.4f} points={pr.npoints} predicted={pr.predicted:.6f}")
    return 0


def _report_verify(cfg):
    checks = harness.run_verify(cfg)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def _report_sweep(cfg):
    report = harness.run_sweep(cfg)
    sys.stdout.write(report.to_text())
    return 0 if report.all_passed else 1


_HANDLERS = {"solve": _report_solve, "measure": _report_measure, "verify": _report_verify, "sweep": _report_sweep}


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return _HANDLERS[cfg.command](cfg)
    except FracLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
