"""Rotary delta kinematics: closed-form IK, Newton-Raphson FK, Jacobian and its rate.

Each leg i lives in a frame rotated by ``phi[i]`` about the base z-axis.  In that
frame the actuated joint turns about the y-axis at the origin, the knee sits at
``k(theta) = L_a * (cos theta, 0, sin theta)`` and the effector attachment point is
``d_i = R_z(phi_i)^T x + (r_off, 0, 0)``.  A leg is closed when

    F_i(x, theta_i) = |d_i - k(theta_i)|^2 - L_b^2 = 0.

The Jacobian follows the convention ``qdot = J @ xdot`` (joint rates from
Cartesian velocity).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    InconsistentState,
    NoConvergence,
    SingularClosure,
    SingularError,
    Unreachable,
)

LEG_PHI = (7 * np.pi / 12, -np.pi / 12, -9 * np.pi / 12)


@dataclass(frozen=True)
class KinematicGeometry:
    L_a: float = 0.060
    L_b: float = 0.1025
    r_off: float = 0.0245
    phi: tuple = LEG_PHI

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(p) for p in self.phi))
        if len(self.phi) != 3:
            raise ValueError("phi must hold three leg azimuths")
        if not (self.L_a > 0 and self.L_b > 0):
            raise ValueError("link lengths must be positive")
        if not self.L_b > abs(self.r_off):
            raise ValueError("L_b must exceed |r_off|")
        wrapped = np.mod(np.asarray(self.phi), 2 * np.pi)
        if len(np.unique(np.round(wrapped, 12))) != 3:
            raise ValueError("leg azimuths must be distinct")

    @property
    def rotations(self):
        return _rotations(self.phi)


@lru_cache(maxsize=32)
def _rotations(phi):
    """Stack of R_z(phi_i), shape (3, 3, 3)."""
    c, s = np.cos(phi), np.sin(phi)
    R = np.zeros((3, 3, 3))
    R[:, 0, 0] = c
    R[:, 0, 1] = -s
    R[:, 1, 0] = s
    R[:, 1, 1] = c
    R[:, 2, 2] = 1.0
    R.setflags(write=False)
    return R


def leg_frame_point(geom, i, x):
    """Effector attachment point of leg ``i`` (0-based) in that leg's frame."""
    if i not in (0, 1, 2):
        raise IndexError(f"leg index must be 0, 1 or 2, got {i}")
    R = geom.rotations[i]
    return R.T @ np.asarray(x, dtype=float) + np.array([geom.r_off, 0.0, 0.0])


def _leg_points(geom, x):
    # d[i] = R_i^T x + (r_off, 0, 0)
    d = np.einsum("ikj,k->ij", geom.rotations, np.asarray(x, dtype=float))
    d[:, 0] += geom.r_off
    return d


def _knee(geom, theta):
    k = np.zeros((3, 3))
    k[:, 0] = geom.L_a * np.cos(theta)
    k[:, 2] = geom.L_a * np.sin(theta)
    return k


def _knee_tangent(geom, theta):
    kp = np.zeros((3, 3))
    kp[:, 0] = -geom.L_a * np.sin(theta)
    kp[:, 2] = geom.L_a * np.cos(theta)
    return kp


def _trig_terms(geom, d):
    A = 2 * geom.L_a * d[:, 0]
    B = 2 * geom.L_a * d[:, 2]
    C = np.einsum("ij,ij->i", d, d) + geom.L_a**2 - geom.L_b**2
    return A, B, C


def closure_residual(geom, x, q):
    """F_i(x, q_i) for the three legs."""
    d = _leg_points(geom, x)
    u = d - _knee(geom, np.asarray(q, dtype=float))
    return np.einsum("ij,ij->i", u, u) - geom.L_b**2


def _solve_legs(geom, x):
    """Return (theta, branch_margin) for all legs; raise Unreachable on failure."""
    d = _leg_points(geom, x)
    A, B, C = _trig_terms(geom, d)
    R = np.hypot(A, B)
    for i in range(3):
        if R[i] == 0.0 or abs(C[i]) > R[i]:
            ratio = np.inf if R[i] == 0.0 else abs(C[i]) / R[i]
            raise Unreachable(i, ratio)
    beta = np.arccos(np.clip(C / R, -1.0, 1.0))
    # no wrapping: atan2's cut (d_z = 0 behind the motor) lies outside the workspace
    theta = np.arctan2(B, A) + beta
    return theta, beta


def inverse_kinematics(geom, x):
    """Actuated joint angles for effector position ``x`` (elbow-out branch)."""
    return _solve_legs(geom, x)[0]


@dataclass(frozen=True)
class PassiveAngles:
    """Per-leg passive angles: ``in_plane[i]`` is the shin angle relative to the
    thigh inside the leg plane, ``out_of_plane[i]`` the parallelogram tilt."""

    in_plane: np.ndarray
    out_of_plane: np.ndarray


def passive_angles(geom, x, q, tol=1e-6):
    q = np.asarray(q, dtype=float)
    res = closure_residual(geom, x, q)
    if np.max(np.abs(res)) > tol:
        raise InconsistentState(f"closure residual {np.max(np.abs(res)):.3g} exceeds {tol:g}")
    u = _leg_points(geom, x) - _knee(geom, q)
    theta3 = np.arcsin(np.clip(u[:, 1] / geom.L_b, -1.0, 1.0))
    theta2 = np.arctan2(u[:, 2], u[:, 0]) - q
    theta2 = np.mod(theta2 + np.pi, 2 * np.pi) - np.pi
    return PassiveAngles(in_plane=theta2, out_of_plane=theta3)


def leg_points_from_angles(geom, q, passive):
    """Rebuild each leg-frame effector point from (theta1, theta2, theta3)."""
    q = np.asarray(q, dtype=float)
    a = q + passive.in_plane
    c3 = np.cos(passive.out_of_plane)
    u = geom.L_b * np.stack([c3 * np.cos(a), np.sin(passive.out_of_plane), c3 * np.sin(a)], axis=1)
    return _knee(geom, q) + u


@lru_cache(maxsize=32)
def workspace_centroid(geom):
    """Midpoint of the reachable stretch of the symmetry axis."""
    zs = np.linspace(0.0, 2 * (geom.L_a + geom.L_b), 2001)
    ok = []
    for z in zs:
        try:
            _solve_legs(geom, (0.0, 0.0, z))
            ok.append(z)
        except Unreachable:
            pass
    if not ok:
        raise Unreachable(0, np.inf)
    return (0.0, 0.0, float(0.5 * (ok[0] + ok[-1])))


def _closure_x_gradient(geom, u):
    # dF_i/dx = 2 u_i^T R_i^T  ->  row i = 2 R_i u_i
    return 2 * np.einsum("ijk,ik->ij", geom.rotations, u)


def forward_kinematics(geom, q, x_guess=None, tol=1e-12, max_iter=50, max_halvings=20):
    """Effector position for joint angles ``q`` by damped Newton-Raphson."""
    q = np.asarray(q, dtype=float)
    x = np.array(workspace_centroid(geom) if x_guess is None else x_guess, dtype=float)
    knee = _knee(geom, q)
    L2 = geom.L_b**2

    def residual(p):
        u = _leg_points(geom, p) - knee
        return np.einsum("ij,ij->i", u, u) - L2, u

    F, u = residual(x)
    for _ in range(max_iter):
        if np.max(np.abs(F)) < tol:
            return x
        Jx = _closure_x_gradient(geom, u)
        if np.linalg.matrix_rank(Jx) < 3:
            raise SingularClosure(f"closure gradient rank-deficient at x={x}")
        step = np.linalg.solve(Jx, F)
        norm0 = np.linalg.norm(F)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            x_new = x - alpha * step
            F_new, u_new = residual(x_new)
            if np.linalg.norm(F_new) < norm0:
                break
            alpha *= 0.5
        x, F, u = x_new, F_new, u_new
    if np.max(np.abs(F)) < tol:
        return x
    raise NoConvergence(f"forward kinematics did not converge in {max_iter} iterations (|F|={np.max(np.abs(F)):.3g})")


@dataclass(frozen=True)
class LegState:
    """Closure quantities at a pose, shared by J and its time derivative."""

    theta: np.ndarray
    u: np.ndarray       # d_i - k_i, leg frame
    k: np.ndarray       # knee positions, leg frame
    dF_dtheta: np.ndarray
    dF_dx: np.ndarray   # rows are dF_i/dx in base coordinates
    J: np.ndarray


def leg_state(geom, x, q=None, sing_tol=1e-12):
    x = np.asarray(x, dtype=float)
    theta = inverse_kinematics(geom, x) if q is None else np.asarray(q, dtype=float)
    k = _knee(geom, theta)
    u = _leg_points(geom, x) - k
    kp = _knee_tangent(geom, theta)
    dF_dtheta = -2 * np.einsum("ij,ij->i", u, kp)
    scale = 2 * geom.L_a * geom.L_b
    bad = np.abs(dF_dtheta) <= sing_tol * scale
    if np.any(bad):
        raise SingularError(f"leg {int(np.argmax(bad))} is straight or folded")
    dF_dx = _closure_x_gradient(geom, u)
    J = -dF_dx / dF_dtheta[:, None]
    return LegState(theta=theta, u=u, k=k, dF_dtheta=dF_dtheta, dF_dx=dF_dx, J=J)


def jacobian(geom, x, q=None):
    """J with qdot = J @ xdot; row i only involves leg i."""
    return leg_state(geom, x, q).J


def jacobian_dot(geom, x, xdot, q=None, state=None):
    """Analytic dJ/dt along (x, xdot)."""
    st = leg_state(geom, x, q) if state is None else state
    xdot = np.asarray(xdot, dtype=float)
    theta_dot = st.J @ xdot
    kp = _knee_tangent(geom, st.theta)
    # u_dot = R^T xdot - k' theta_dot ; k'' = -k
    u_dot = np.einsum("ikj,k->ij", geom.rotations, xdot) - kp * theta_dot[:, None]
    a_dot = -2 * (np.einsum("ij,ij->i", u_dot, kp) - np.einsum("ij,ij->i", st.u, st.k) * theta_dot)
    b_dot = 2 * np.einsum("ijk,ik->ij", geom.rotations, u_dot)
    a = st.dF_dtheta
    return -b_dot / a[:, None] + st.dF_dx * (a_dot / a**2)[:, None]


JOINT_RANGE = (-np.pi / 2, np.pi)


def workspace_contains(geom, x, margin=0.05):
    """True if every leg solves with at least ``margin`` rad to spare from its
    branch-degeneracy / straight-leg limits and every actuated angle lies in
    ``JOINT_RANGE``."""
    try:
        x = np.asarray(x, dtype=float)
        if x.shape != (3,) or not np.all(np.isfinite(x)):
            return False
        theta, beta = _solve_legs(geom, x)
    except Unreachable:
        return False
    lo, hi = JOINT_RANGE
    in_range = np.all(theta > lo) and np.all(theta < hi)
    return bool(in_range and np.all(beta >= margin) and np.all(beta <= np.pi - margin))
