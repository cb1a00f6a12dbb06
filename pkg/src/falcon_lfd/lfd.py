"""Demonstration capture, smoothing-spline fitting and trajectory storage.

Each Cartesian axis is fitted independently with the natural cubic spline ``f``
that minimises

    p * sum_i (y_i - f(t_i))**2 + (1 - p) * integral f''(t)**2 dt

with knots at the sample times (Reinsch's algorithm).  ``p = 1`` gives the
interpolating natural spline and ``p = 0`` the least-squares straight line.
"""

import csv
import os
import tempfile
import warnings
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from . import kinematics as kin
from .errors import (
    FormatVersionMismatch,
    NonMonotoneTime,
    OutOfWorkspace,
    ParseError,
    SolverFailure,
    TooFewSamples,
)

FORMAT_HEADER = "lfdtraj v1"
AXES = ("x", "y", "z")


@dataclass(frozen=True)
class Demonstration:
    t: np.ndarray
    x: np.ndarray  # (n, 3)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if t.ndim != 1 or x.shape != (t.size, 3):
            raise ValueError("expected t of shape (n,) and x of shape (n, 3)")
        if t.size < 4:
            raise TooFewSamples(f"need at least 4 samples, got {t.size}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ValueError("demonstration contains non-finite values")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise NonMonotoneTime(f"timestamps not strictly increasing at sample {bad[0] + 1}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return self.t.size

    @property
    def sample_period(self):
        return float(np.median(np.diff(self.t)))


def ingest_demo(source):
    """Build a Demonstration from a CSV path (``t,x,y,z``) or (t, x, y, z) rows."""
    if isinstance(source, (str, os.PathLike)):
        rows = _read_demo_csv(source)
    else:
        rows = [tuple(float(v) for v in r) for r in source]
    if not rows:
        raise TooFewSamples("demonstration is empty")
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ParseError("samples must have four fields (t, x, y, z)")
    return Demonstration(arr[:, 0], arr[:, 1:])


def _read_demo_csv(path):
    rows = []
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = [f.strip() for f in next(csv.reader([text]))]
            if not header_seen:
                if fields != ["t", "x", "y", "z"]:
                    raise ParseError(f"expected header 't,x,y,z', got {text!r}", lineno)
                header_seen = True
                continue
            if len(fields) != 4:
                raise ParseError(f"expected 4 fields, got {len(fields)}", lineno)
            try:
                rows.append(tuple(float(f) for f in fields))
            except ValueError:
                raise ParseError(f"non-numeric field in {text!r}", lineno) from None
    if not header_seen:
        raise ParseError("missing header 't,x,y,z'")
    return rows


def write_demo_csv(demo, path):
    lines = ["t,x,y,z"]
    for t, p in zip(demo.t, demo.x):
        lines.append(",".join(f"{v:.17g}" for v in (t, *p)))
    _atomic_write(path, "\n".join(lines) + "\n")


def synth_demo(start, end, T, n, noise_sigma=0.0, seed=0, geom=None):
    """Minimum-jerk point-to-point demonstration sampled at ``n`` uniform times."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if n < 4:
        raise TooFewSamples(f"need at least 4 samples, got {n}")
    if not T > 0:
        raise ValueError(f"demonstration duration must be positive, got {T}")
    geom = kin.KinematicGeometry() if geom is None else geom
    for name, p in (("start", start), ("end", end)):
        if not kin.workspace_contains(geom, p):
            raise OutOfWorkspace(f"{name} point {p.tolist()} is outside the workspace")
    t = np.linspace(0.0, T, n)
    x = minimum_jerk(start, end, T, t)[0]
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        x = x + rng.normal(0.0, noise_sigma, size=x.shape)
    return Demonstration(t, x)


def minimum_jerk(start, end, T, t):
    """Position, velocity and acceleration of the quintic rest-to-rest profile."""
    start = np.asarray(start, dtype=float)
    delta = np.asarray(end, dtype=float) - start
    s = np.clip(np.asarray(t, dtype=float) / T, 0.0, 1.0)[..., None]
    pos = start + delta * (10 * s**3 - 15 * s**4 + 6 * s**5)
    vel = delta * (30 * s**2 - 60 * s**3 + 30 * s**4) / T
    acc = delta * (60 * s - 180 * s**2 + 120 * s**3) / T**2
    return pos, vel, acc


class SmoothingSpline:
    """Natural cubic spline stored as per-interval coefficients.

    On ``[knots[i], knots[i+1]]`` the value is
    ``a + b*h + c*h**2 + d*h**3`` with ``h = t - knots[i]``.
    """

    def __init__(self, knots, coef, p):
        self.knots = np.asarray(knots, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.p = float(p)
        if self.coef.shape != (self.knots.size - 1, 4):
            raise ValueError("coefficient array must be (n_knots - 1, 4)")

    def _locate(self, t):
        i = np.searchsorted(self.knots, t, side="right") - 1
        return np.clip(i, 0, self.knots.size - 2)

    def __call__(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        i = self._locate(t)
        h = t - self.knots[i]
        a, b, c, d = (self.coef[i, j] for j in range(4))
        if nu == 0:
            return a + h * (b + h * (c + h * d))
        if nu == 1:
            return b + h * (2 * c + 3 * h * d)
        if nu == 2:
            return 2 * c + 6 * h * d
        if nu == 3:
            return 6 * d + 0 * h
        raise ValueError("derivative order must be 0..3")

    def roughness(self):
        """Integral of f''**2 over the knot span."""
        h = np.diff(self.knots)
        c, d = self.coef[:, 2], self.coef[:, 3]
        # f'' = 2c + 6d s on [0, h]
        return float(np.sum(4 * c**2 * h + 12 * c * d * h**2 + 12 * d**2 * h**3))


def _fit_axis(t, y, p):
    n = t.size
    h = np.diff(t)
    if p <= 0.0:
        slope, intercept = np.polyfit(t - t[0], y, 1)
        g = intercept + slope * (t - t[0])
        gam = np.zeros(n)
    else:
        ih = 1.0 / h
        # Q^T y: second divided differences scaled, length n-2
        Qty = (y[2:] - y[1:-1]) * ih[1:] - (y[1:-1] - y[:-2]) * ih[:-1]
        lam = (1.0 - p) / p
        m = n - 2
        # Upper banded storage of R + lam Q^T Q (pentadiagonal, symmetric)
        ab = np.zeros((3, m))
        ab[2] = (h[:-1] + h[1:]) / 3 + lam * (ih[:-1] ** 2 + (ih[:-1] + ih[1:]) ** 2 + ih[1:] ** 2)
        ab[1, 1:] = h[1:-1] / 6 - lam * ih[1:-1] * ((ih[:-2] + ih[1:-1]) + (ih[1:-1] + ih[2:]))
        ab[0, 2:] = lam * ih[1:-2] * ih[2:-1]
        try:
            inner = solveh_banded(ab, Qty)
        except (LinAlgError, ValueError) as exc:
            raise SolverFailure("smoothing-spline normal equations are singular") from exc
        gam = np.concatenate([[0.0], inner, [0.0]])
        # g = y - lam * Q gamma
        Qg = np.zeros(n)
        Qg[:-2] += ih[:-1] * inner
        Qg[1:-1] -= (ih[:-1] + ih[1:]) * inner
        Qg[2:] += ih[1:] * inner
        g = y - lam * Qg
    a = g[:-1]
    b = (g[1:] - g[:-1]) / h - h * (2 * gam[:-1] + gam[1:]) / 6
    c = gam[:-1] / 2
    d = (gam[1:] - gam[:-1]) / (6 * h)
    return np.column_stack([a, b, c, d])


@dataclass
class ReferenceTrajectory:
    splines: tuple
    t_s: float

    def __post_init__(self):
        if len(self.splines) != 3:
            raise ValueError("need one spline per axis")
        knots = self.splines[0].knots
        if knots[-1] - knots[0] <= 0:
            raise ValueError("trajectory duration must be positive")

    @property
    def t0(self):
        return float(self.splines[0].knots[0])

    @property
    def T(self):
        return float(self.splines[0].knots[-1])

    @property
    def p(self):
        return self.splines[0].p

    def _stacked(self):
        if getattr(self, "_cache", None) is None:
            self._cache = (self.splines[0].knots.tolist(), np.stack([s.coef for s in self.splines]))
        return self._cache


def fit_smoothing_spline(demo, p=0.999):
    if not 0.0 <= p <= 1.0:
        raise ValueError("smoothing parameter p must lie in [0, 1]")
    splines = tuple(SmoothingSpline(demo.t, _fit_axis(demo.t, demo.x[:, j], p), p) for j in range(3))
    return ReferenceTrajectory(splines=splines, t_s=demo.sample_period)


@dataclass(frozen=True)
class RefPoint:
    x: np.ndarray
    xdot: np.ndarray
    xddot: np.ndarray
    clamped: bool = False


def eval_trajectory(traj, t):
    """Desired position, velocity and acceleration at ``t`` (clamped to the domain)."""
    knots, coef = traj._stacked()
    tc = min(max(float(t), traj.t0), traj.T)
    i = min(max(bisect_right(knots, tc) - 1, 0), len(knots) - 2)
    h = tc - knots[i]
    a, b, c, d = coef[:, i, 0], coef[:, i, 1], coef[:, i, 2], coef[:, i, 3]
    x = a + h * (b + h * (c + h * d))
    v = b + h * (2 * c + 3 * h * d)
    acc = 2 * c + 6 * h * d
    return RefPoint(x, v, acc, tc != t)


def _atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_trajectory(traj, path):
    lines = [FORMAT_HEADER, f"p {traj.p!r}", f"t_s {traj.t_s!r}", f"knots {traj.splines[0].knots.size}"]
    for name, spl in zip(AXES, traj.splines):
        lines.append(f"axis {name}")
        lines.append(" ".join(repr(float(k)) for k in spl.knots))
        for row in spl.coef:
            lines.append(" ".join(repr(float(v)) for v in row))
    lines.append("end")
    _atomic_write(path, "\n".join(lines) + "\n")


def load_trajectory(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0].strip() != FORMAT_HEADER:
        found = lines[0].strip() if lines else "<empty file>"
        raise FormatVersionMismatch(f"expected {FORMAT_HEADER!r}, found {found!r}")
    it = iter(enumerate(lines[1:], start=2))

    def take(prefix):
        try:
            lineno, text = next(it)
        except StopIteration:
            raise ParseError(f"unexpected end of file, expected {prefix!r}") from None
        parts = text.split()
        if not parts or parts[0] != prefix:
            raise ParseError(f"expected {prefix!r}", lineno)
        return lineno, parts[1:]

    def numbers(count):
        try:
            lineno, text = next(it)
        except StopIteration:
            raise ParseError("unexpected end of file") from None
        try:
            vals = [float(v) for v in text.split()]
        except ValueError:
            raise ParseError("non-numeric value", lineno) from None
        if len(vals) != count:
            raise ParseError(f"expected {count} numbers, got {len(vals)}", lineno)
        return vals

    _, (p,) = take("p")
    _, (t_s,) = take("t_s")
    lineno, (nk,) = take("knots")
    nk = int(nk)
    if nk < 2:
        raise ParseError("need at least two knots", lineno)
    splines = []
    for name in AXES:
        _, rest = take("axis")
        if rest != [name]:
            raise ParseError(f"expected axis {name}")
        knots = numbers(nk)
        coef = [numbers(4) for _ in range(nk - 1)]
        splines.append(SmoothingSpline(knots, coef, float(p)))
    take("end")
    try:
        return ReferenceTrajectory(splines=tuple(splines), t_s=float(t_s))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def check_in_workspace(traj, geom, n=200):
    """Raise OutOfWorkspace if the fitted path leaves the workspace."""
    for t in np.linspace(traj.t0, traj.T, n):
        x = eval_trajectory(traj, t).x
        if not kin.workspace_contains(geom, x):
            raise OutOfWorkspace(f"reference leaves the workspace at t={t:.4g} s, x={x.tolist()}")


def warn_if_clamped(ref, t):
    if ref.clamped:
        warnings.warn(f"trajectory queried outside its domain at t={t}", stacklevel=2)
