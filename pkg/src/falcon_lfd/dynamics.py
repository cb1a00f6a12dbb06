"""Identified joint-space model of the haptic robot and its Cartesian form.

Parameters are in the firmware's torque units; only ``g`` is SI.  The dry-friction
``sign`` is smoothed with ``tanh(qdot / eps_s)`` so the model can be integrated.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kinematics as kin
from .errors import SingularError


@dataclass(frozen=True)
class DynamicParams:
    c_m: float = -192.0
    c_I: float = 5.5
    c_d: float = 33.0
    c_s: float = 112.0
    m_base: float = 486.0
    phi_off: float = np.pi / 6
    g: float = 9.81
    m_bar: float = None
    eps_s: float = 1e-3

    def __post_init__(self):
        if self.m_bar is None:
            object.__setattr__(self, "m_bar", 2.0 * self.m_base)
        if not self.c_I > 0:
            raise ValueError("c_I must be positive")
        if self.c_d < 0 or self.c_s < 0:
            raise ValueError("c_d and c_s must be non-negative")
        if not 0 < self.m_base <= self.m_bar:
            raise ValueError("need 0 < m_base <= m_bar")
        if not self.eps_s > 0:
            raise ValueError("eps_s must be positive")

    @property
    def g_vec(self):
        return np.array([0.0, self.g, 0.0])


@dataclass(frozen=True)
class CartesianDynamicsFactors:
    M_x: np.ndarray
    S_x: np.ndarray
    D_x: np.ndarray
    G_x: np.ndarray
    J: np.ndarray = field(repr=False)
    J_dot: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    m_eff: float = 0.0


def smooth_sign(v, eps_s):
    return np.tanh(np.asarray(v, dtype=float) / eps_s)


def link_gravity(params, geom, q):
    """Per-leg link-gravity torque c_m sin(phi_i) sin(q_i + phi_off)."""
    return params.c_m * np.sin(np.asarray(geom.phi)) * np.sin(np.asarray(q) + params.phi_off)


def link_potential(params, geom, q):
    """Potential whose joint gradient is ``link_gravity``."""
    return -params.c_m * np.sum(np.sin(np.asarray(geom.phi)) * np.cos(np.asarray(q) + params.phi_off))


def _inv_transpose_apply(J, v):
    try:
        return np.linalg.solve(J.T, v)
    except np.linalg.LinAlgError as exc:
        raise SingularError("Jacobian is not invertible") from exc


def joint_torque(params, geom, q, qdot, qddot, a_p, F_ext, m_eff, J=None):
    """Actuator torque of the identified model for a given joint/effector motion."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if J is None:
        J = kin.jacobian(geom, kin.forward_kinematics(geom, q), q)
    effector = m_eff * (np.asarray(a_p, dtype=float) + params.g_vec) + np.asarray(F_ext, dtype=float)
    return (
        link_gravity(params, geom, q)
        + params.c_I * np.asarray(qddot, dtype=float)
        + params.c_s * smooth_sign(qdot, params.eps_s)
        + params.c_d * qdot
        + _inv_transpose_apply(J, effector)
    )


def cartesian_accel(geom, x, qdot, qddot):
    """Effector acceleration from joint rates and accelerations."""
    st = kin.leg_state(geom, x)
    try:
        xdot = np.linalg.solve(st.J, qdot)
        J_dot = kin.jacobian_dot(geom, x, xdot, state=st)
        return np.linalg.solve(st.J, np.asarray(qddot, dtype=float) - J_dot @ xdot)
    except np.linalg.LinAlgError as exc:
        raise SingularError("Jacobian is not invertible") from exc


def cartesian_factors(params, geom, x, xdot, m_eff):
    """M_x, S_x, D_x, G_x of the Cartesian model at state (x, xdot)."""
    st = kin.leg_state(geom, x)
    J = st.J
    xdot = np.asarray(xdot, dtype=float)
    J_dot = kin.jacobian_dot(geom, x, xdot, state=st)
    qdot = J @ xdot
    JT = J.T
    M_x = params.c_I * (JT @ J) + m_eff * np.eye(3)
    M_x = 0.5 * (M_x + M_x.T)
    S_x = params.c_I * (JT @ J_dot) + params.c_d * (JT @ J)
    D_x = params.c_s * (JT @ smooth_sign(qdot, params.eps_s))
    G_x = JT @ link_gravity(params, geom, st.theta) + m_eff * params.g_vec
    return CartesianDynamicsFactors(M_x=M_x, S_x=S_x, D_x=D_x, G_x=G_x, J=J, J_dot=J_dot, q=st.theta, m_eff=m_eff)


def with_mass(factors, params, m_eff):
    """Factors re-evaluated for a different effector mass (mass enters M_x and G_x only)."""
    return replace(
        factors,
        M_x=factors.M_x + (m_eff - factors.m_eff) * np.eye(3),
        G_x=factors.G_x + (m_eff - factors.m_eff) * params.g_vec,
        m_eff=m_eff,
    )


def total_energy(params, geom, x, xdot, m_eff):
    """Kinetic plus potential energy (meaningful when c_d = c_s = 0)."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    st = kin.leg_state(geom, x)
    qdot = st.J @ xdot
    return (
        0.5 * params.c_I * qdot @ qdot
        + 0.5 * m_eff * xdot @ xdot
        + link_potential(params, geom, st.theta)
        + m_eff * params.g_vec @ x
    )
