"""Forward simulation of the true robot in Cartesian coordinates."""

from bisect import bisect_right
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .dynamics import cartesian_factors, with_mass
from .errors import IntegrationDiverged, NotPD


@dataclass(frozen=True)
class PlantState:
    t: float
    x: np.ndarray
    xdot: np.ndarray
    gamma_true: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xdot", np.asarray(self.xdot, dtype=float))
        if not 0.0 <= self.gamma_true <= 1.0:
            raise ValueError(f"gamma_true must lie in [0, 1], got {self.gamma_true}")


class PayloadSchedule:
    """Piecewise-constant true mass ratio, left-closed at each breakpoint."""

    def __init__(self, breakpoints, initial=None):
        pts = [(float(t), float(g)) for t, g in breakpoints]
        if not pts and initial is None:
            raise ValueError("schedule needs breakpoints or an initial value")
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        values = [g for _, g in pts] + ([] if initial is None else [float(initial)])
        if any(not 0.0 <= g <= 1.0 for g in values):
            raise ValueError("payload ratios must lie in [0, 1]")
        self.breakpoints = tuple(pts)
        self.initial = pts[0][1] if initial is None else float(initial)
        self._times = times

    @classmethod
    def constant(cls, gamma):
        return cls([], initial=gamma)

    @property
    def switch_times(self):
        """Breakpoint times at which the value actually changes."""
        out = []
        prev = self.initial
        for t, g in self.breakpoints:
            if g != prev:
                out.append(t)
            prev = g
        return out

    def __repr__(self):
        return f"PayloadSchedule({list(self.breakpoints)!r}, initial={self.initial!r})"


def payload_at(schedule, t):
    idx = bisect_right(schedule._times, t)
    if idx == 0:
        return schedule.initial
    return schedule.breakpoints[idx - 1][1]


def plant_accel(params, geom, state, tau, F_ext=(0.0, 0.0, 0.0), factors=None):
    """Solve J^T tau = M_x xddot + S_x xdot + D_x + G_x + F_ext for xddot.

    ``factors`` evaluated at (state.x, state.xdot) for any mass may be supplied
    to skip recomputing the kinematics.
    """
    m_eff = state.gamma_true * params.m_bar
    if factors is None:
        f = cartesian_factors(params, geom, state.x, state.xdot, m_eff)
    else:
        f = with_mass(factors, params, m_eff)
    rhs = f.J.T @ np.asarray(tau, dtype=float) - f.S_x @ state.xdot - f.D_x - f.G_x - np.asarray(F_ext, dtype=float)
    try:
        return cho_solve(cho_factor(f.M_x), rhs)
    except LinAlgError as exc:
        raise NotPD("Cartesian inertia is not positive definite") from exc


def step(params, geom, state, tau_fn, schedule, dt, F_ext=(0.0, 0.0, 0.0), max_speed=10.0, t_next=None):
    """One classical RK4 step; ``tau_fn(t, stage_state)`` is called at every stage.

    The payload ratio is held at ``state.gamma_true`` through the step and
    refreshed from ``schedule`` at the new time.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")

    def deriv(t, y):
        s = replace(state, t=t, x=y[:3], xdot=y[3:])
        return np.concatenate([y[3:], plant_accel(params, geom, s, tau_fn(t, s), F_ext)])

    y1 = rk4_step(deriv, state.t, np.concatenate([state.x, state.xdot]), dt)
    return finish_step(state, y1[:3], y1[3:], schedule, dt, max_speed, t_next)


def rk4_step(deriv, t, y, dt):
    """Classical fourth-order Runge-Kutta step for y' = deriv(t, y)."""
    k1 = deriv(t, y)
    k2 = deriv(t + dt / 2, y + dt / 2 * k1)
    k3 = deriv(t + dt / 2, y + dt / 2 * k2)
    k4 = deriv(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def finish_step(state, x1, v1, schedule, dt, max_speed, t_next=None):
    """Divergence guard and payload refresh shared by the steppers."""
    t1 = state.t + dt if t_next is None else t_next
    speed = np.linalg.norm(v1)
    if not np.isfinite(speed) or speed > max_speed:
        raise IntegrationDiverged(f"speed {speed:.3g} m/s exceeds {max_speed:g} m/s at t={t1:.6g} s")
    gamma = state.gamma_true if schedule is None else payload_at(schedule, t1)
    return PlantState(t=t1, x=x1, xdot=v1, gamma_true=gamma)
