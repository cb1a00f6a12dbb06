"""Command-line entry point: ``falcon-lfd {demo-synth,fit,simulate,report}``."""

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import lfd
from .config import ScenarioConfig, load_config
from .errors import FalconError
from .scenario import SimLog, compute_metrics, emit_plots, prepare_reference, run, write_metrics

log = logging.getLogger("falcon_lfd")


def _config(args):
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, demo=replace(cfg.demo, seed=args.seed))
    if getattr(args, "literal_law", False):
        cfg = replace(cfg, gains=replace(cfg.gains, use_paper_literal_law=True))
    if getattr(args, "hold", None) is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, hold=args.hold))
    cfg.validate()
    return cfg


def cmd_demo_synth(args):
    cfg = _config(args)
    d = cfg.demo
    demo = lfd.synth_demo(d.start, d.end, d.T, d.n, d.noise, d.seed, cfg.geometry)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "demo.csv")
    lfd.write_demo_csv(demo, path)
    print(path)


def cmd_fit(args):
    cfg = _config(args)
    demo = lfd.ingest_demo(args.demo) if args.demo else None
    _, traj = prepare_reference(cfg, demo)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "trajectory.lfdtraj")
    lfd.save_trajectory(traj, path)
    print(path)


def _summary(metrics):
    lines = [
        f"rms position error   {metrics.rms_position_error:.6g} m",
        f"max |s|              {metrics.max_s_norm:.6g}",
        f"switch times         {metrics.switch_times}",
        f"settling times       {metrics.settling_times}",
        f"gamma_hat end error  {[round(v, 6) for v in metrics.gamma_terminal_error]}",
        f"V increase count     {metrics.v_violations}",
    ]
    return "\n".join(lines)


def cmd_simulate(args):
    cfg = _config(args)
    traj = lfd.load_trajectory(args.trajectory) if args.trajectory else None
    _, metrics = run(cfg, write=True, traj=traj)
    print(_summary(metrics))
    print(f"outputs written to {cfg.out_dir}")


def cmd_report(args):
    cfg = _config(args)
    path = args.log or os.path.join(cfg.out_dir, "log.csv")
    sim_log = SimLog.from_csv(path)
    m = cfg.metrics
    metrics = compute_metrics(sim_log, m.settle_factor, m.pre_window, m.v_tol)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_metrics(metrics, os.path.join(cfg.out_dir, "metrics.json"))
    emit_plots(sim_log, cfg.out_dir)
    print(_summary(metrics))


def build_parser():
    parser = argparse.ArgumentParser(prog="falcon-lfd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value scenario file")
        p.add_argument("--out", help="output directory (overrides output.dir)")

    p = sub.add_parser("demo-synth", help="write a synthetic minimum-jerk demonstration")
    common(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_demo_synth)

    p = sub.add_parser("fit", help="fit the smoothing-spline reference")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--demo", help="demonstration CSV (default: config demo.source)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the closed-loop reproduction")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--literal-law", action="store_true", help="use the uncorrected adaptation law (no -Lambda*edot term)")
    p.add_argument("--hold", type=float, help="zero-order-hold control period in seconds")
    p.add_argument("--trajectory", help="stored .lfdtraj reference to reproduce")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="recompute metrics and plot data from a log")
    common(p)
    p.add_argument("--log", help="log CSV (default: <out>/log.csv)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (FalconError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
