"""Command-line interface: ``modeconv {modes,design,spdc,chsh,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import pipeline
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _modes(cfg):
    return pipeline.write_modes(pipeline.compute_modes(cfg), cfg.output_dir)


def _design(cfg):
    return pipeline.write_design(cfg, pipeline.compute_design(cfg), cfg.output_dir)


def _sweep(cfg):
    return pipeline.write_kappa_map(*pipeline.compute_kappa_map(cfg), cfg.output_dir)


def _spdc(cfg):
    return pipeline.write_spdc(pipeline.compute_spdc(cfg), cfg.output_dir)


def _chsh(cfg):
    record, _ = pipeline.compute_chsh(cfg)
    return pipeline.write_chsh(record, cfg.output_dir)


COMMANDS = {
    "modes": (_modes, "solve and export guided modes of both sections"),
    "design": (_design, "grating periods, coupling per volt, crosstalk and sweeps"),
    "sweep": (_sweep, "coupling over the electrode (a, d) grid"),
    "spdc": (_spdc, "down-conversion spectra and the (w, v) state estimate"),
    "chsh": (_chsh, "optimized CHSH settings and drive voltages"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modeconv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                       help="log progress to stderr")
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a dotted config key, e.g. solver.spacing=0.05; repeatable")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.override, args.out)
    except ConfigError as exc:
        print(f"modeconv {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run, _ = COMMANDS[args.command]
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            paths = run(cfg)
    except ConfigError as exc:
        print(f"modeconv {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.StageError as exc:
        print(f"modeconv {args.command}: numeric error {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"modeconv {args.command}: output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
