"""Command-line entry point: subcommand dispatch, seed control, CSV output."""

import argparse
import os
import sys

import numpy as np

from .config import config_echo, config_hash, parse_config
from .errors import ConfigError
from .experiments import (run_case1, run_case2, run_case3, run_detect,
                          write_case1, write_case2, write_case3)
from .sensing import calibrate_threshold, noise_variance


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cfisac",
        description="OFDM integrated sensing and communication simulator for "
                    "cell-free networks: Doppler-aware GLRT detection and 3D "
                    "velocity estimation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("case1", "estimator timing and velocity-error comparison"),
        ("case2", "Doppler-mismatch SNR comparison"),
        ("case3", "sensing SNR versus subcarrier count"),
        ("calibrate", "print the statistic threshold for the configured P_FA"),
        ("detect", "run one end-to-end detection trial"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--trials", type=int, default=None, help="trial count")
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker cap")
        p.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override one config key")
    return parser


def _apply_flags(cfg, args):
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg.threads = args.threads
    return cfg


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = parse_config(args.config, args.sets)
        cfg = _apply_flags(cfg, args)
        seed = cfg.master_seed
        digest = config_hash(cfg)
        echo = config_echo(cfg)
        if args.command in ("case1", "case2", "case3"):
            os.makedirs(cfg.out_dir, exist_ok=True)
        if args.command == "case1":
            result = run_case1(cfg, n_trials=args.trials, seed=seed)
            write_case1(result, cfg.out_dir, seed, digest, echo)
        elif args.command == "case2":
            result = run_case2(cfg, n_trials=args.trials, seed=seed)
            write_case2(result, cfg.out_dir, seed, digest, echo)
        elif args.command == "case3":
            result = run_case3(cfg, n_trials=args.trials, seed=seed)
            write_case3(result, cfg.out_dir, seed, digest, echo)
        elif args.command == "calibrate":
            nv = noise_variance(cfg.grid, cfg.scenario.noise_psd_dbm_hz,
                                cfg.scenario.noise_figure_db)
            n_rx = cfg.scenario.m_rx if cfg.scenario.n_rx_per_region <= 0 \
                else min(cfg.scenario.n_rx_per_region, cfg.scenario.m_rx)
            r_tot = n_rx * cfg.scenario.m_tx
            rng = np.random.default_rng(seed)
            delta = calibrate_threshold(r_tot, nv, cfg.p_fa,
                                        mode=cfg.threshold_mode, rng=rng)
            print(repr(delta))
        elif args.command == "detect":
            outcome, data = run_detect(cfg, seed=seed)
            alpha = ";".join(
                f"{z.real!r}{z.imag:+}j"
                for vec in outcome.alpha_hats for z in vec)
            print(f"# seed={seed}")
            print(f"# config_hash={digest}")
            print("decision,statistic,threshold,vx_hat,vy_hat,vz_hat,"
                  "vx_true,vy_true,vz_true,estimator_failed,alpha_hat")
            v = outcome.v_hat
            vt = data.scene.target.velocity
            print(",".join([
                "H1" if outcome.decision else "H0",
                repr(outcome.statistic), repr(outcome.threshold),
                repr(float(v[0])), repr(float(v[1])), repr(float(v[2])),
                repr(float(vt[0])), repr(float(vt[1])), repr(float(vt[2])),
                "1" if outcome.estimator_failed else "0",
                f'"{alpha}"']))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
