"""Command-line entry point: ``jrcsim <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, JrcError
from .experiments import run_scenario
from .scenario import default_scenario, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

SUBCOMMANDS = {
    "generate": "generate",
    "comm": "comm-ber",
    "radar": "radar-profile",
    "fuse": "fusion",
    "sweep-pmi": "pmi-sweep",
    "sweep-snr": "snr-sweep",
}

_HELP = {
    "generate": "synthesise one pulse and dump m(t), IF and MMW signals",
    "comm": "BER of the self-coherent link at the scenario SNR",
    "radar": "single sub-band range profiles",
    "fuse": "coherent fusion of both sub-bands",
    "sweep-pmi": "comm BER and radar SNR versus PMI at fixed noise",
    "sweep-snr": "BER waterfall versus SNR",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jrcsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _HELP.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", help="YAML scenario file")
        p.add_argument("--preset", choices=("paper", "desk"),
                       help="waveform preset (default: scenario value, else desk)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", help="output directory (default: scenario value, else ./out)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = SUBCOMMANDS[args.command]
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        if args.scenario:
            sc = load_scenario(args.scenario, experiment=experiment, preset_name=args.preset)
        else:
            sc = default_scenario(experiment, args.preset or "desk")
        manifest = run_scenario(sc, args.out, jobs=args.jobs, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except JrcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    out = args.out or sc.output or "out"
    print(f"{experiment}: {manifest.status}; {len(manifest.outputs)} files in {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
