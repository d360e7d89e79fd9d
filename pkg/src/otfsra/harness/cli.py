"""Command line interface: `otfs-ra run|oracle|complexity`."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, ExperimentConfig, read_config
from .csvio import write_csv
from .runner import run_preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="otfs-ra",
        description="OTFS massive random access simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo preset")
    run.add_argument("--preset", help="preset name (or supply --config)")
    run.add_argument("--config", help="config file path")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--trials", type=int, default=None)
    run.add_argument("--out", default=None, help="output CSV path")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--full-scale", action="store_true",
                     help="paper-scale dimensions instead of desk scale")

    oracle = sub.add_parser(
        "oracle", help="run the independent-oracle validation suites")
    oracle.add_argument("--scenarios", type=int, default=10)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--full", action="store_true",
                        help="include the paper-scale consistency check")

    comp = sub.add_parser(
        "complexity", help="predicted vs measured operation counts")
    comp.add_argument("--config", help="config file for scenario overrides")
    comp.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    try:
        if args.config:
            cfg = read_config(args.config)
            if args.preset:
                cfg = replace(cfg, preset=args.preset)
        elif args.preset:
            cfg = ExperimentConfig(preset=args.preset)
        else:
            raise ConfigError("run needs --preset or --config")
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.trials is not None:
            cfg = replace(cfg, trials=args.trials)
        if args.out is not None:
            cfg = replace(cfg, out=args.out)
        if args.workers is not None:
            cfg = replace(cfg, workers=args.workers)
        if args.full_scale:
            cfg = replace(cfg, full_scale=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(done, total):
        print(f"\r{cfg.preset}: trial {done}/{total}", end="",
              file=sys.stderr, flush=True)

    try:
        rows, diverged_frac = run_preset(cfg, progress=progress)
    except ConfigError as exc:
        print(f"\nconfig error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("", file=sys.stderr)
    out = cfg.out or f"{cfg.preset}.csv"
    write_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    if diverged_frac > 0.5:
        print(f"solver diverged in {diverged_frac:.0%} of solves",
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_oracle(args) -> int:
    from . import oracles

    print("psi kernel vs geometric sum:")
    worst = oracles.psi_oracle(seed=args.seed)
    print(f"  worst abs deviation {worst:.3e}")

    print("Laplacian posterior moments vs adaptive quadrature (6x6x6 grid):")
    worst = oracles.scalar_estimator_oracle(points=6)
    print(f"  worst relative error {worst:.3e}")

    print("DD operator vs time-domain pipeline:")
    for key, val in oracles.dd_operator_oracle(seed=args.seed).items():
        print(f"  {key:32s} {val:8.2f} dB")

    print(f"stage consistency over {args.scenarios} desk scenarios:")
    res = oracles.consistency_suite(n_scenarios=args.scenarios,
                                    seed=args.seed)
    for key, vals in res.items():
        print("  " + oracles.format_report(key, vals))

    print("stage consistency, integer-Doppler scenarios:")
    res = oracles.consistency_suite(n_scenarios=max(args.scenarios // 2, 4),
                                    seed=args.seed, integer_doppler=True)
    for key, vals in res.items():
        print("  " + oracles.format_report(key, vals))

    if args.full:
        from ..access_pipeline import ScenarioConfig
        print("stage consistency at paper-scale dimensions (slow):")
        cfg = ScenarioConfig(
            n_doppler=128, m_delay=512, n_rough=64, m_rough=4, k_p=30,
            l_p=40, kp_dim=20, lp_dim=20, tau_max_bins=19.2,
            nu_max_bins=9.48, n_paths=9, upa_y=1, upa_z=1,
            halo=2, halo_rough=2)
        res = oracles.consistency_suite(n_scenarios=4, seed=args.seed,
                                        cfg=cfg)
        for key, vals in res.items():
            print("  " + oracles.format_report(key, vals))
    return EXIT_OK


def _cmd_complexity(args) -> int:
    from ..access_pipeline import ScenarioConfig
    from .complexity import measure_complexity, predict_complexity, \
        scaling_ratios
    from .config import scenario_from_config

    try:
        if args.config:
            cfg = read_config(args.config)
            small = scenario_from_config(cfg)
        else:
            small = ScenarioConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    large = replace(small, n_doppler=2 * small.n_doppler,
                    m_delay=2 * small.m_delay, n_rough=2 * small.n_rough,
                    n_ue=2 * small.n_ue, l_p=2 * small.l_p,
                    k_p=2 * small.k_p)

    print("predicted complexity (per AP):")
    for name, cfg_i in (("desk", small), ("2x size", large)):
        pred = predict_complexity(cfg_i)
        print(f"  {name:8s} chi_s {pred.chi_s:.3e}  chi_e {pred.chi_e:.3e}"
              f"  chi_h {pred.chi_h:.3e}")

    print("measured MACs (fixed-iteration instrumented runs):")
    rep_s = measure_complexity(small, seed=args.seed)
    rep_l = measure_complexity(large, seed=args.seed)
    for name, rep in (("desk", rep_s), ("2x size", rep_l)):
        print(f"  {name:8s} rough {rep.measured_rough:.3e}  "
              f"accurate {rep.measured_accurate:.3e}")
    rough_ratio, acc_ratio = scaling_ratios(rep_s, rep_l)
    print(f"measured/predicted growth: rough {rough_ratio:.3f}, "
          f"accurate {acc_ratio:.3f} (1.0 = exact tracking)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "oracle":
        return _cmd_oracle(args)
    return _cmd_complexity(args)


if __name__ == "__main__":
    sys.exit(main())
