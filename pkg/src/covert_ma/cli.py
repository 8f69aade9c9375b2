"""Command-line entry point: ``covert-ma run | verify | demo``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bsum import SolverConfig, check_feasible, run_bsum
from .channel import sample_scenario
from .config import ConfigError, SystemConfig
from .covertness import min_detection_error, warden_received_power
from .experiment import (
    aggregate, load_config, read_records, resolve_threads, run_sweep, verify_record,
    write_outputs,
)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    changes = {"threads": resolve_threads(args.threads, cfg.threads)}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    cfg = replace(cfg, **changes)
    records = run_sweep(cfg)
    out = write_outputs(cfg, records)
    for s in aggregate(records):
        print(f"{s.scheme:8s} {s.sweep_value:8g}  mean {s.mean:8.4f}  std {s.std:7.4f}  n={s.count}")
    flagged = [r for r in records if r.flag]
    print(f"{len(records)} records written to {out}; {len(flagged)} flagged")
    return 2 if flagged else 0


def _cmd_verify(args) -> int:
    path = Path(args.record)
    cfg = load_config(args.config or path.with_name("config.txt"))
    failures = 0
    records = read_records(path)
    for r in records:
        problems = verify_record(cfg, r)
        if problems:
            failures += 1
            print(f"FAIL {r.scheme} {r.sweep_value:g} trial {r.trial_index}: {'; '.join(problems)}")
    print(f"{len(records) - failures}/{len(records)} records pass")
    return 2 if failures else 0


def _cmd_demo(args) -> int:
    sys_cfg = SystemConfig()
    scenario = sample_scenario(sys_cfg, args.seed)
    state = run_bsum(scenario, SolverConfig(), seed=args.seed)
    for m, rate in enumerate(state.sum_rate_trace):
        print(f"iter {m:3d}  sum rate {rate:.6f} bits/s/Hz")
    leak = warden_received_power(scenario.warden_channel(state.positions), state.W)
    xi = min_detection_error(leak, sys_cfg.warden_noise_power, sys_cfg.noise_uncertainty)
    print(f"transmit power {np.vdot(state.W, state.W).real:.4e} W of {sys_cfg.max_power:.4e} W")
    print(f"warden power {leak:.4e} W (cap {sys_cfg.covert_threshold:.4e} W), detection error {xi:.4f}")
    print("positions (wavelengths):")
    for n, t in enumerate(state.positions / sys_cfg.wavelength):
        print(f"  antenna {n}: ({t[0]:.4f}, {t[1]:.4f})")
    problems = check_feasible(scenario, state.W, state.positions)
    print("feasible" if not problems else "INFEASIBLE: " + "; ".join(problems))
    return 0 if not problems else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covert-ma", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a parameter sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--threads", type=int)
    run.set_defaults(func=_cmd_run)

    verify = sub.add_parser("verify", help="re-check stored solutions")
    verify.add_argument("--record", required=True)
    verify.add_argument("--config", help="defaults to config.txt next to the records")
    verify.set_defaults(func=_cmd_verify)

    demo = sub.add_parser("demo", help="solve one reference instance")
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(func=_cmd_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
