"""Command-line entry point: ``irsnoma {single,sweep,region-map,selftest}``.

Exit codes: 0 success, 1 selftest failures, 2 configuration or usage error,
3 solver failure in ``single`` mode.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .channel_model import QosSpec, ScenarioConfig, synthesize_channels
from .exceptions import ConfigError, IrsNomaError
from .harness import (BASELINES, DEFAULT_SWEEPS, ExperimentSpec, RunSettings, load_config,
                      parse_baselines, rows_to_csv, run_experiment, run_trial)
from .hybrid import solve_hybrid
from .quasi_degradation import RegionGrid, region_map, write_region_csv
from .selftest import run_selftest

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

SWEEP_KINDS = {"antennas": "sweep_antennas", "elements": "sweep_elements",
               "distance": "sweep_distance"}
REGION_GEOMETRY = {"bs_pos": (0.0, 0.0), "irs_pos": (5.0, 5.0), "user1_pos": (5.0, 5.5)}


def _common(parser):
    parser.add_argument("--config", help="scenario file with 'key = value' lines")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", help="output CSV path (stdout when omitted)")
    parser.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
    parser.add_argument("--baselines", help=f"comma list from: {', '.join(BASELINES)}")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsnoma", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("single", help="solve one channel realization")
    _common(p)
    p.add_argument("--trial", type=int, default=0, help="channel stream index")

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over antennas, elements or distance")
    _common(p)
    p.add_argument("--experiment", choices=sorted(SWEEP_KINDS), default="antennas")
    p.add_argument("--values", help="comma list of sweep values (defaults per experiment)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("region-map", help="grid of user-2 positions where the channels can be quasi-degraded")
    _common(p)
    p.add_argument("--mode", choices=("improved", "no_irs"), default="improved")
    p.add_argument("--user1", type=float, nargs=2, metavar=("X", "Y"))
    p.add_argument("--resolution", type=int, default=41, help="grid points per axis")

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    _common(p)
    return parser


def _scenario(args, defaults=None):
    if args.config:
        cfg, settings = load_config(args.config)
    else:
        cfg, settings = ScenarioConfig(**(defaults or {})), RunSettings()
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        settings = RunSettings(args.trials, settings.baselines, settings.randomization_count,
                               settings.sdp_tol)
    if args.baselines is not None:
        settings = RunSettings(settings.trials, parse_baselines(args.baselines),
                               settings.randomization_count, settings.sdp_tol)
    return cfg, settings


def _emit(text, out):
    if out:
        with open(out, "wb") as fh:
            fh.write(text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def cmd_single(args):
    cfg, settings = _scenario(args)
    qos = QosSpec.from_config(cfg)
    ch = synthesize_channels(cfg, stream=args.trial)
    try:
        rep = solve_hybrid(ch, qos, settings.hybrid_options(seed=args.trial))
    except IrsNomaError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"scheme = {rep.decision.chosen}")
    print(f"reason = {rep.decision.reason}")
    print(f"power_w = {rep.power_w!r}")
    print(f"qd_at_theta = {int(rep.qd_at_theta)}")
    print(f"iterations = {rep.iterations}")
    print("theta = " + " ".join(f"{t:.6f}" for t in rep.theta.theta))
    if rep.noma_failure:
        print(f"noma_failure = {rep.noma_failure}")
    if args.out:
        spec = ExperimentSpec("single", (0,), 1, settings.baselines, args.out, cfg.seed, cfg, settings)
        _emit(rows_to_csv(run_trial(spec, 0, args.trial)), args.out)
    return EXIT_OK


def cmd_sweep(args):
    cfg, settings = _scenario(args)
    kind = SWEEP_KINDS[args.experiment]
    values = DEFAULT_SWEEPS[kind]
    if args.values:
        try:
            values = tuple(float(v) for v in args.values.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --values: {args.values!r}") from exc
        if kind != "sweep_distance":
            values = tuple(int(v) for v in values)
    spec = ExperimentSpec(kind, values, settings.trials, settings.baselines, None, cfg.seed, cfg,
                          settings, workers=max(1, args.workers))
    rows = run_experiment(spec)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_region_map(args):
    cfg, _ = _scenario(args, REGION_GEOMETRY)
    if args.user1:
        cfg = cfg.with_(user1_pos=tuple(args.user1))
    if args.resolution < 1:
        raise ConfigError("--resolution must be >= 1")
    grid = RegionGrid(nx=args.resolution, ny=args.resolution)
    cells = region_map(cfg, grid, args.mode)
    if args.out:
        write_region_csv(cells, args.out)
    else:
        held = sum(c.holds for c in cells)
        print(f"{held} of {len(cells)} cells satisfy the {args.mode} condition")
    return EXIT_OK


def cmd_selftest(args):
    seed = 0 if args.seed is None else args.seed
    _, failed = run_selftest(seed)
    return EXIT_OK if failed == 0 else EXIT_SELFTEST


COMMANDS = {"single": cmd_single, "sweep": cmd_sweep, "region-map": cmd_region_map,
            "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
