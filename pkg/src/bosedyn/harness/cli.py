"""Command-line entry point: ``bosedyn <experiment> [--config PATH] [options]``.

Exit codes: 0 success, 1 acceptance check missed, 2 configuration error,
3 numerical failure (truncation, convergence or stability).
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, ConvergenceError, StabilityError, TruncationError
from .config import EXPERIMENTS, ExperimentConfig, load_config, parse_value
from .experiments import RUNNERS
from .output import emit

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("bosedyn")

_DESCRIPTIONS = {
    "converge": "exact dynamics vs Hartree: reduced-density errors and rate fit",
    "fluct": "fluctuation number around the coherent Hartree state",
    "clt": "exact law of the centered observable sum vs the Gaussian limit",
    "gp": "scattering length, then narrow-kernel Hartree vs local GP",
    "minimize": "GP ground states in a harmonic trap",
    "scatter": "zero-energy scattering solution and scattering length",
}


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="bosedyn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_ArgumentParser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name])
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="output directory (default: config 'out' or ./results)")
        p.add_argument("--seed", type=_seed, help="RNG seed (unsigned 64-bit)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--N", dest="N_list", help="comma-separated particle numbers")
        p.add_argument("--t-max", dest="t_max", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--no-plot", action="store_true", help="skip the SVG figure")
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v)
    for key in ("N_list", "t_max", "dt", "seed", "out"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = parse_value(v) if isinstance(v, str) and key == "N_list" else v
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg: ExperimentConfig = load_config(args.config, _overrides(args), args.experiment)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s with seed %d", cfg.experiment, cfg.seed)
    try:
        results = RUNNERS[cfg.experiment](cfg)
    except (TruncationError, ConvergenceError, StabilityError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    paths = emit(results, cfg.out, cfg.to_dict(), cfg.seed, plots=not args.no_plot)
    for name, check in sorted(results.checks.items()):
        status = "PASS" if check["pass"] else "FAIL"
        print(f"{status} {cfg.experiment}.{name}: value={check['value']} threshold={check['threshold']}")
    for kind, path in paths.items():
        log.info("wrote %s %s", kind, path)
    return EXIT_OK if results.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
