"""End-to-end reproduction experiment: demonstrate, fit, track under a payload schedule."""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import lfd
from .controller import (
    AdaptiveController,
    control_torque,
    gamma_rate,
    lyapunov,
    tracking_error,
)
from .dynamics import cartesian_factors
from .errors import EmptyLog, FalconError, ParseError, ScenarioError
from .plant import PlantState, finish_step, payload_at, plant_accel, rk4_step, step

LOG_COLUMNS = (
    "t", "x", "y", "z", "xd", "yd", "zd", "vx", "vy", "vz", "vxd", "vyd", "vzd",
    "ex", "ey", "ez", "s_norm", "gamma_hat", "gamma_true", "tau1", "tau2", "tau3", "V", "Vdot",
)


def _fmt(v):
    return f"{v:.17g}"


def write_csv(path, columns, data):
    lines = [",".join(columns)]
    lines.extend(",".join(_fmt(v) for v in row) for row in data)
    lfd._atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise ParseError("empty file", 1)
        columns = tuple(header.split(","))
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError:
                raise ParseError("non-numeric field", lineno) from None
            if len(row) != len(columns):
                raise ParseError(f"expected {len(columns)} fields, got {len(row)}", lineno)
            rows.append(row)
    return columns, np.array(rows, dtype=float).reshape(-1, len(columns))


class SimLog:
    """Column-named table of simulation samples."""

    def __init__(self, data, columns=LOG_COLUMNS):
        self.columns = tuple(columns)
        self.data = np.asarray(data, dtype=float).reshape(-1, len(self.columns))
        self._index = {c: i for i, c in enumerate(self.columns)}

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, name):
        return self.data[:, self._index[name]]

    def cols(self, *names):
        return self.data[:, [self._index[n] for n in names]]

    def to_csv(self, path):
        write_csv(path, self.columns, self.data)

    @classmethod
    def from_csv(cls, path):
        columns, data = read_csv(path)
        if columns != LOG_COLUMNS:
            raise ParseError(f"unexpected log header {','.join(columns)!r}", 1)
        return cls(data, columns)


def _log_row(params, geom, gains, t, x, v, ref, gamma_hat, gamma_true, tau):
    err = tracking_error(x, v, ref.x, ref.xdot, gains.Lambda)
    ly = lyapunov(params, geom, x, v, err.s, gamma_true - gamma_hat, gains, gamma_true)
    return [
        t, *x, *ref.x, *v, *ref.xdot, *err.e,
        float(np.linalg.norm(err.s)), gamma_hat, gamma_true, *tau, ly.V, ly.Vdot,
    ]


def simulate(params, geom, gains, traj, schedule, sim):
    """Closed-loop reproduction of ``traj``; returns a SimLog.

    With ``sim.hold == 0`` and measured velocity the torque is recomputed at every
    RK4 stage and the estimate is integrated in the same RK4 step.  Otherwise the
    torque is held for one control period and the estimate advanced by forward
    Euler at that period.
    """
    dt = sim.dt
    n_steps = int(round(sim.duration / dt))
    continuous = sim.hold == 0 and sim.velocity == "measured"
    period = max(1, int(round(sim.hold / dt))) if sim.hold > 0 else 1
    ref0 = lfd.eval_trajectory(traj, 0.0)
    state = PlantState(0.0, ref0.x + np.asarray(sim.initial_offset, dtype=float), ref0.xdot, payload_at(schedule, 0.0))
    ctrl = AdaptiveController(params, geom, gains)
    rows = []
    tau_held = None
    x_prev = None

    def closed_loop(t, y):
        x, v = y[:3], y[3:6]
        g_hat = min(max(y[6], 0.0), 1.0)
        ref = lfd.eval_trajectory(traj, t)
        f0 = cartesian_factors(params, geom, x, v, 0.0)
        tau = control_torque(params, geom, x, v, ref, gains, g_hat, factors=f0)
        acc = plant_accel(params, geom, PlantState(t, x, v, state.gamma_true), tau, factors=f0)
        rate = 0.0
        if gains.adapt:
            err = tracking_error(x, v, ref.x, ref.xdot, gains.Lambda)
            rate = gamma_rate(err.s, ref.xddot, err.edot, gains, params)
            if (g_hat <= 0.0 and rate < 0.0) or (g_hat >= 1.0 and rate > 0.0):
                rate = 0.0
        return np.concatenate([v, acc, [rate]])

    for n in range(n_steps + 1):
        t = n * dt
        ref = lfd.eval_trajectory(traj, t)
        try:
            if continuous:
                tau = ctrl.torque(state.x, state.xdot, ref)
            elif n % period == 0:
                if sim.velocity == "differentiated":
                    h = period * dt
                    v_meas = state.xdot if x_prev is None else (state.x - x_prev) / h
                    x_prev = state.x
                else:
                    v_meas = state.xdot
                tau_held = ctrl.torque(state.x, v_meas, ref)
                if n < n_steps:
                    ctrl.adapt(state.x, v_meas, ref, period * dt)
            tau_now = tau if continuous else tau_held
            if n % sim.record_stride == 0:
                rows.append(_log_row(params, geom, gains, t, state.x, state.xdot, ref,
                                     ctrl.gamma_hat, state.gamma_true, tau_now))
            if n == n_steps:
                break
            if continuous:
                y0 = np.concatenate([state.x, state.xdot, [ctrl.gamma_hat]])
                y1 = rk4_step(closed_loop, t, y0, dt)
                ctrl.gamma_hat = float(min(max(y1[6], 0.0), 1.0))
                state = finish_step(state, y1[:3], y1[3:6], schedule, dt, sim.max_speed, (n + 1) * dt)
            else:
                held = tau_held
                state = step(params, geom, state, lambda ts, st: held, schedule, dt,
                             max_speed=sim.max_speed, t_next=(n + 1) * dt)
        except FalconError as exc:
            raise ScenarioError("reproduce", t, exc) from exc
    return SimLog(rows)


@dataclass
class Metrics:
    rms_position_error: float
    max_s_norm: float
    switch_times: list
    thresholds: list
    settling_times: list
    spike_count: int
    gamma_terminal_error: list
    v_violations: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "rms_position_error": self.rms_position_error,
            "max_s_norm": self.max_s_norm,
            "switch_times": self.switch_times,
            "thresholds": self.thresholds,
            "settling_times": self.settling_times,
            "spike_count": self.spike_count,
            "gamma_terminal_error": self.gamma_terminal_error,
            "v_violations": self.v_violations,
            **self.extra,
        }


def segment_bounds(log):
    """Row index ranges [start, stop) of constant gamma_true."""
    g = log["gamma_true"]
    cuts = [0] + [i for i in range(1, len(g)) if g[i] != g[i - 1]] + [len(g)]
    return list(zip(cuts[:-1], cuts[1:]))


def _runs(mask):
    """Number of maximal True runs and the index after the last True."""
    if not mask.any():
        return 0, None
    starts = np.flatnonzero(mask & ~np.concatenate([[False], mask[:-1]]))
    return len(starts), int(np.flatnonzero(mask)[-1]) + 1


def v_violations(log, rel_tol=1e-6):
    """Per-step increases of V beyond ``rel_tol`` times the segment's opening V.

    A segment that opens with V = 0 (estimate equal to the true payload, zero
    error) would otherwise be judged on rounding noise, so increments below a
    few ulps of the run's largest V are ignored.
    """
    V = log["V"]
    floor = 64 * np.finfo(float).eps * float(np.max(np.abs(V)))
    count = 0
    for a, b in segment_bounds(log):
        inc = np.diff(V[a:b])
        count += int(np.sum(inc > max(rel_tol * V[a], floor)))
    return count


def compute_metrics(log, settle_factor=2.0, pre_window=0.5, v_tol=1e-6):
    """Tracking and adaptation summary of a run.

    For each payload switch the settling threshold is ``settle_factor`` times the
    median of ||s|| over the ``pre_window`` seconds before the switch; the settling
    time is the delay until ||s|| stays at or below it for the rest of the segment
    (None when it never does).
    """
    if len(log) == 0:
        raise EmptyLog("log has no rows")
    t = log["t"]
    s = log["s_norm"]
    e = log.cols("ex", "ey", "ez")
    segments = segment_bounds(log)
    switch_times, thresholds, settling, terminal = [], [], [], []
    spikes = 0
    for k, (a, b) in enumerate(segments):
        gamma_err = log["gamma_hat"][b - 1] - log["gamma_true"][b - 1]
        terminal.append(float(abs(gamma_err)))
        if k == 0:
            continue
        t_sw = float(t[a])
        prev_a = segments[k - 1][0]
        window = (t >= max(t_sw - pre_window, t[prev_a])) & (t < t_sw)
        thr = settle_factor * float(np.median(s[window])) if window.any() else 0.0
        n_runs, last = _runs(s[a:b] > thr)
        spikes += n_runs
        if last is None:
            settle = 0.0
        elif a + last >= b:
            settle = None
        else:
            settle = float(t[a + last] - t_sw)
        switch_times.append(t_sw)
        thresholds.append(thr)
        settling.append(settle)
    return Metrics(
        rms_position_error=float(np.sqrt(np.mean(np.sum(e**2, axis=1)))),
        max_s_norm=float(np.max(s)),
        switch_times=switch_times,
        thresholds=thresholds,
        settling_times=settling,
        spike_count=spikes,
        gamma_terminal_error=terminal,
        v_violations=v_violations(log, v_tol),
    )


FIGURE_FILES = {
    "fig3_pos_vel.csv": ("t", "x", "xd", "y", "yd", "z", "zd", "vx", "vxd", "vy", "vyd", "vz", "vzd"),
    "fig4_path.csv": ("x", "y", "z", "xd", "yd", "zd"),
    "fig5_s_norm.csv": ("t", "s_norm"),
    "fig6_gamma.csv": ("t", "gamma_hat", "gamma_true"),
}


def emit_plots(log, outdir):
    """Write plot-ready CSV files mirroring the four result figures."""
    if len(log) == 0:
        raise EmptyLog("log has no rows")
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for name, cols in FIGURE_FILES.items():
        path = os.path.join(outdir, name)
        write_csv(path, cols, log.cols(*cols))
        paths.append(path)
    return paths


def prepare_reference(config, demo=None):
    """Demonstration (synthetic or from file) and its fitted reference."""
    d = config.demo
    try:
        if demo is None:
            if d.source == "synthetic":
                demo = lfd.synth_demo(d.start, d.end, d.T, d.n, d.noise, d.seed, config.geometry)
            else:
                demo = lfd.ingest_demo(d.source)
    except FalconError as exc:
        raise ScenarioError("demonstrate", None, exc) from exc
    try:
        traj = lfd.fit_smoothing_spline(demo, d.p)
        lfd.check_in_workspace(traj, config.geometry)
    except FalconError as exc:
        raise ScenarioError("fit", None, exc) from exc
    return demo, traj


def run(config, write=True, traj=None):
    """demonstrate -> fit -> reproduce; optionally writes log, metrics and plot data."""
    schedule = config.validate()
    demo = None
    if traj is None:
        demo, traj = prepare_reference(config)
    log = simulate(config.dynamics, config.geometry, config.gains, traj, schedule, config.sim)
    m = config.metrics
    metrics = compute_metrics(log, m.settle_factor, m.pre_window, m.v_tol)
    if write:
        out = config.out_dir
        os.makedirs(out, exist_ok=True)
        if demo is not None:
            lfd.write_demo_csv(demo, os.path.join(out, "demo.csv"))
        lfd.save_trajectory(traj, os.path.join(out, "trajectory.lfdtraj"))
        log.to_csv(os.path.join(out, "log.csv"))
        write_metrics(metrics, os.path.join(out, "metrics.json"))
        emit_plots(log, out)
    return log, metrics


def write_metrics(metrics, path):
    lfd._atomic_write(path, json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")
