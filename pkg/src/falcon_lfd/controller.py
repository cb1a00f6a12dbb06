"""Adaptive inverse-dynamics tracking controller with online payload estimation.

The payload enters the Cartesian model only through the effector mass
``m_eff = gamma * m_bar``.  The controller carries an estimate ``gamma_hat`` and
applies

    tau = J^{-T} [ M_hat (xdd_d - Lam edot) + S_x (xd_d - Lam e) + G_hat + D_x - K_d s ]

with ``s = edot + Lam e``.  The default adaptation law

    gamma_hat_dot = -(1/k) s . m_bar (xdd_d - Lam edot + g)

cancels the estimation cross-term in dV/dt for
``V = 1/2 s^T M_x s + 1/2 k gamma_tilde^2``, leaving
``dV/dt = -s^T (K_d + c_d J^T J) s``.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import cartesian_factors, link_gravity
from .errors import SingularError


@dataclass(frozen=True)
class Gains:
    Lambda: np.ndarray = None
    K_d: np.ndarray = None
    k: float = 500.0
    gamma_hat0: float = 0.5
    use_paper_literal_law: bool = False
    use_transpose_torque: bool = False
    adapt: bool = True

    def __post_init__(self):
        lam = 10.0 * np.eye(3) if self.Lambda is None else _as_diag(self.Lambda)
        kd = 20.0 * np.eye(3) if self.K_d is None else _as_matrix(self.K_d)
        object.__setattr__(self, "Lambda", lam)
        object.__setattr__(self, "K_d", kd)
        if np.any(np.diag(lam) <= 0) or np.any(lam - np.diag(np.diag(lam))):
            raise ValueError("Lambda must be diagonal with positive entries")
        if not np.allclose(kd, kd.T) or np.linalg.eigvalsh(kd).min() <= 0:
            raise ValueError("K_d must be symmetric positive definite")
        if not self.k > 0:
            raise ValueError("adaptation gain k must be positive")
        if not 0.0 <= self.gamma_hat0 <= 1.0:
            raise ValueError("gamma_hat0 must lie in [0, 1]")


def _as_diag(v):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(3)
    if a.ndim == 1:
        return np.diag(a)
    return a.copy()


def _as_matrix(v):
    return _as_diag(v)


@dataclass(frozen=True)
class TrackingError:
    e: np.ndarray
    edot: np.ndarray
    s: np.ndarray


def tracking_error(x, xdot, x_d, xdot_d, Lambda):
    e = np.asarray(x, dtype=float) - np.asarray(x_d, dtype=float)
    edot = np.asarray(xdot, dtype=float) - np.asarray(xdot_d, dtype=float)
    return TrackingError(e=e, edot=edot, s=edot + _as_diag(Lambda) @ e)


def control_torque(params, geom, x, xdot, ref, gains, gamma_hat, factors=None):
    """Joint torque of the adaptive law for measured (x, xdot) and reference ``ref``.

    ``ref`` is any object with ``x``, ``xdot`` and ``xddot`` attributes.
    ``factors`` may be passed to reuse Cartesian factors already evaluated at
    (x, xdot); their mass terms are ignored.
    """
    err = tracking_error(x, xdot, ref.x, ref.xdot, gains.Lambda)
    f = cartesian_factors(params, geom, x, xdot, 0.0) if factors is None else factors
    Gamma_hat = gamma_hat * params.m_bar
    JT = f.J.T
    M_hat = params.c_I * (JT @ f.J) + Gamma_hat * np.eye(3)
    G_hat = JT @ link_gravity(params, geom, f.q) + Gamma_hat * params.g_vec
    lam = gains.Lambda
    bracket = (
        M_hat @ (ref.xddot - lam @ err.edot)
        + f.S_x @ (ref.xdot - lam @ err.e)
        + G_hat
        + f.D_x
        - gains.K_d @ err.s
    )
    if gains.use_transpose_torque:
        return JT @ bracket
    try:
        return np.linalg.solve(JT, bracket)
    except np.linalg.LinAlgError as exc:
        raise SingularError("Jacobian is not invertible") from exc


def gamma_rate(s, xddot_d, edot, gains, params):
    """Time derivative of the estimate under the selected adaptation law."""
    s = np.asarray(s, dtype=float)
    if gains.use_paper_literal_law:
        w = params.m_bar * np.asarray(xddot_d, dtype=float) + params.g_vec
    else:
        w = params.m_bar * (np.asarray(xddot_d, dtype=float) - gains.Lambda @ np.asarray(edot, dtype=float) + params.g_vec)
    return -(s @ w) / gains.k


def update_gamma(s, xddot_d, edot, gains, gamma_hat, dt, params):
    """Forward-Euler step of the adaptation law, projected onto [0, 1]."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = gamma_hat + dt * gamma_rate(s, xddot_d, edot, gains, params)
    return float(min(max(g, 0.0), 1.0))


@dataclass(frozen=True)
class LyapunovSample:
    V: float
    Vdot: float
    Vdot_fd: float = float("nan")


def lyapunov(params, geom, x, xdot, s, gamma_tilde, gains, gamma_true, factors=None):
    """V and its analytic rate at one instant (instrumentation; uses gamma_true)."""
    s = np.asarray(s, dtype=float)
    f = cartesian_factors(params, geom, x, xdot, gamma_true * params.m_bar) if factors is None else factors
    M_x = params.c_I * (f.J.T @ f.J) + gamma_true * params.m_bar * np.eye(3)
    V = 0.5 * s @ M_x @ s + 0.5 * gains.k * gamma_tilde**2
    Vdot = -s @ (gains.K_d + params.c_d * (f.J.T @ f.J)) @ s
    return LyapunovSample(V=float(V), Vdot=float(Vdot))


def lyapunov_rate_fd(t, V):
    """Central-difference dV/dt along a sampled run (one-sided at the ends)."""
    return np.gradient(np.asarray(V, dtype=float), np.asarray(t, dtype=float))


def cross_term(s, xddot_d, edot, gains, params, gamma_tilde, gamma_tilde_rate):
    """s^T Gamma_tilde (xdd_d - Lam edot + g) + k gamma_tilde gamma_tilde_rate.

    Vanishes identically under the default law when the projection is inactive.
    """
    w = np.asarray(xddot_d) - gains.Lambda @ np.asarray(edot) + params.g_vec
    return float(np.asarray(s) @ (params.m_bar * gamma_tilde * w) + gains.k * gamma_tilde * gamma_tilde_rate)


class AdaptiveController:
    """Stateful wrapper: holds gamma_hat and advances it once per control period."""

    def __init__(self, params, geom, gains):
        self.params = params
        self.geom = geom
        self.gains = gains
        self.gamma_hat = float(gains.gamma_hat0)

    def torque(self, x, xdot, ref, factors=None):
        return control_torque(self.params, self.geom, x, xdot, ref, self.gains, self.gamma_hat, factors)

    def adapt(self, x, xdot, ref, dt):
        if not self.gains.adapt:
            return self.gamma_hat
        err = tracking_error(x, xdot, ref.x, ref.xdot, self.gains.Lambda)
        self.gamma_hat = update_gamma(err.s, ref.xddot, err.edot, self.gains, self.gamma_hat, dt, self.params)
        return self.gamma_hat
