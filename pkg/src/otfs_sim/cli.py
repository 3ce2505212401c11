"""Command-line front end for the simulator.

Subcommands:
  ber        perfect-CSI BER sweep over (Doppler, SNR)
  ber-est    estimated-CSI BER sweep (pilot -> H_e -> detection) + baseline
  est-error  channel-estimation error vs pilot SNR and pilot length
  mf-dump    matched-filter magnitude grid for a shift scenario, as CSV
  selftest   run the built-in invariant checks
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import chanest, harness
from .harness import ExperimentConfig, emit_csv, load_config


def _load(args) -> ExperimentConfig:
    exp = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    if args.threads is not None:
        exp = replace(exp, threads=args.threads)
    if args.out is not None:
        exp = replace(exp, out_path=args.out)
    if getattr(args, "snr", None):
        exp = replace(exp, sweep=replace(exp.sweep, snr_db=tuple(args.snr)))
    if getattr(args, "doppler", None):
        exp = replace(exp, sweep=replace(exp.sweep, doppler_hz=tuple(args.doppler)))
    return exp


def _check_converged(records, strict: bool) -> int:
    bad = [r for r in records if not r.converged]
    for r in bad:
        print(f"warning: unconverged point snr={r.snr_db} dB "
              f"({r.bit_errors} bit errors)", file=sys.stderr)
    return 1 if (strict and bad) else 0


def cmd_ber(args) -> int:
    exp = _load(args)
    records = harness.run_ber_sweep(exp)
    emit_csv(records, exp.out_path)
    for r in records:
        print(f"doppler={r.doppler_hz:g} Hz  snr={r.snr_db:g} dB  ber={r.ber:.3e}  "
              f"({r.bit_errors} errors / {r.frames} frames)")
    print(f"wrote {exp.out_path}")
    return _check_converged(records, args.strict)


def cmd_ber_est(args) -> int:
    exp = _load(args)
    if not exp.estimation.enabled:
        exp = replace(exp, estimation=replace(exp.estimation, enabled=True))
    records = harness.run_estimated_csi_sweep(exp)
    emit_csv(records, exp.out_path)
    for r in records:
        extra = f"  n_p={r.n_p}  h_err={r.h_err_f_mean:.3e}" if r.csi == "estimated" else ""
        print(f"csi={r.csi}  snr={r.snr_db:g} dB  ber={r.ber:.3e}{extra}")
    print(f"wrote {exp.out_path}")
    return _check_converged(records, args.strict)


def cmd_est_error(args) -> int:
    exp = _load(args)
    if not exp.estimation.enabled:
        exp = replace(exp, estimation=replace(exp.estimation, enabled=True))
    records = harness.run_estimation_error_sweep(exp)
    emit_csv(records, exp.out_path)
    for r in records:
        print(f"n_p={r.n_p}  pilot_snr={r.pilot_snr_db:g} dB  "
              f"mean ||H-He||_F = {r.h_err_f_mean:.4f}")
    print(f"wrote {exp.out_path}")
    return 0


def cmd_mf_dump(args) -> int:
    pilot = chanest.gen_pn_sequence(args.r)
    n_p = pilot.n_p
    paths = []
    for spec in args.path:
        delta, omega = (int(v) for v in spec.split(","))
        paths.append(chanest.PilotPath(gain=1.0 + 0.0j, delta=delta % n_p, omega=omega % n_p))
    model = chanest.DiscretePilotModel(paths=tuple(paths), n_p=n_p, K=0, W=0.0)
    sigma2 = chanest.pilot_snr_to_sigma2(args.snr_db, model)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    R = chanest.simulate_pilot_rx(pilot, model, sigma2, rng)
    MF = chanest.matched_filter_matrix(R, pilot)
    chanest.dump_mf_csv(MF, args.out or "mf_grid.csv")
    print(f"wrote {args.out or 'mf_grid.csv'} ({n_p}x{n_p} grid)")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otfs-sim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep_flags=True):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--threads", type=int, help="worker process count")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--strict", action="store_true",
                       help="nonzero exit if any point is unconverged")
        if sweep_flags:
            p.add_argument("--snr", type=float, nargs="+", help="SNR points in dB")
            p.add_argument("--doppler", type=float, nargs="+", help="max Doppler values in Hz")

    p = sub.add_parser("ber", help="perfect-CSI BER sweep")
    common(p)
    p.set_defaults(func=cmd_ber)

    p = sub.add_parser("ber-est", help="estimated-CSI BER sweep")
    common(p)
    p.set_defaults(func=cmd_ber_est)

    p = sub.add_parser("est-error", help="estimation-error sweep")
    common(p)
    p.set_defaults(func=cmd_est_error)

    p = sub.add_parser("mf-dump", help="dump a matched-filter magnitude grid")
    p.add_argument("--r", type=int, default=7, help="LFSR degree (N_p = 2^r - 1)")
    p.add_argument("--path", nargs="+", default=["40,90"],
                   help="paths as delta,omega pairs")
    p.add_argument("--snr-db", type=float, default=0.0, help="pilot SNR in dB")
    p.add_argument("--seed", type=int, help="noise seed")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_mf_dump)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
