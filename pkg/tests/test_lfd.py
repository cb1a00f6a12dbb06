import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline, make_smoothing_spline

from falcon_lfd.config import DEFAULT_END, DEFAULT_START
from falcon_lfd.errors import (
    FormatVersionMismatch,
    NonMonotoneTime,
    OutOfWorkspace,
    ParseError,
    TooFewSamples,
)
from falcon_lfd.lfd import (
    Demonstration,
    eval_trajectory,
    fit_smoothing_spline,
    ingest_demo,
    load_trajectory,
    minimum_jerk,
    save_trajectory,
    synth_demo,
    write_demo_csv,
)


def make_demo(t, f):
    t = np.asarray(t, dtype=float)
    return Demonstration(t, np.column_stack([f(t), 2 * f(t) + 0.1, -f(t)]))


# ingestion

def test_ingest_rows():
    demo = ingest_demo([(0, 0, 0, 0.1), (0.1, 0, 0, 0.1), (0.2, 0, 0, 0.1), (0.3, 0, 0, 0.1)])
    assert len(demo) == 4
    assert demo.sample_period == pytest.approx(0.1)


def test_ingest_repeated_timestamp():
    with pytest.raises(NonMonotoneTime):
        ingest_demo([(0, 0, 0, 0), (0.1, 0, 0, 0), (0.1, 0, 0, 0), (0.2, 0, 0, 0)])


def test_ingest_too_few():
    with pytest.raises(TooFewSamples):
        ingest_demo([(0, 0, 0, 0), (0.1, 0, 0, 0), (0.2, 0, 0, 0)])


def test_ingest_csv_with_comments(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("# recorded at 1 kHz\nt,x,y,z\n0,0,0,0.1\n# pause\n0.1,0,0,0.1\n0.2,0,0,0.1\n0.3,0,0,0.1\n")
    assert len(ingest_demo(path)) == 4


def test_ingest_csv_malformed_row_reports_line(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("t,x,y,z\n0,0,0,0\n0.1,0,0\n0.2,0,0,0\n0.3,0,0,0\n")
    with pytest.raises(ParseError) as info:
        ingest_demo(path)
    assert info.value.line == 3


def test_ingest_csv_bad_header(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("time,x,y,z\n0,0,0,0\n")
    with pytest.raises(ParseError):
        ingest_demo(path)


def test_demo_csv_round_trip(tmp_path):
    demo = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 50, noise_sigma=1e-4, seed=3)
    write_demo_csv(demo, tmp_path / "d.csv")
    back = ingest_demo(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.t, demo.t)
    np.testing.assert_array_equal(back.x, demo.x)


# spline fitting

def test_straight_line_reproduced():
    t = np.linspace(0, 2, 40)
    demo = make_demo(t, lambda s: 0.01 + 0.02 * s)
    traj = fit_smoothing_spline(demo, p=0.5)
    for tq in np.linspace(0, 2, 97):
        ref = eval_trajectory(traj, tq)
        np.testing.assert_allclose(ref.x, [0.01 + 0.02 * tq, 0.12 + 0.04 * tq, -0.01 - 0.02 * tq], atol=1e-10)
        assert np.max(np.abs(ref.xddot)) < 1e-9


def test_p_one_interpolates_like_natural_cubic():
    rng = np.random.default_rng(1)
    t = np.sort(rng.uniform(0, 3, 25))
    y = rng.normal(size=25)
    traj = fit_smoothing_spline(Demonstration(t, np.column_stack([y, y, y])), p=1.0)
    ref = CubicSpline(t, y, bc_type="natural")
    tq = np.linspace(t[0], t[-1], 301)
    np.testing.assert_allclose(traj.splines[0](tq), ref(tq), atol=1e-10)
    np.testing.assert_allclose(traj.splines[0](tq, 2), ref(tq, 2), atol=1e-8)


def test_p_zero_is_least_squares_line():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 1, 30)
    y = rng.normal(size=30)
    traj = fit_smoothing_spline(Demonstration(t, np.column_stack([y, y, y])), p=0.0)
    slope, intercept = np.polyfit(t, y, 1)
    np.testing.assert_allclose(traj.splines[1](t), intercept + slope * t, atol=1e-12)


@pytest.mark.parametrize("p", [0.3, 0.9, 0.999, 0.999999])
def test_matches_scipy_smoothing_spline(p):
    rng = np.random.default_rng(4)
    t = np.sort(rng.uniform(0, 5, 60))
    y = np.sin(t) + rng.normal(0, 0.05, 60)
    ours = fit_smoothing_spline(Demonstration(t, np.column_stack([y, y, y])), p=p).splines[2]
    ref = make_smoothing_spline(t, y, lam=(1 - p) / p)
    tq = np.linspace(t[0], t[-1], 500)
    np.testing.assert_allclose(ours(tq), ref(tq), atol=1e-8)


def test_minimum_jerk_fit_accuracy():
    demo = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 200)
    traj = fit_smoothing_spline(demo, p=0.999)
    tq = np.linspace(0, 7, 1001)
    err = max(np.linalg.norm(eval_trajectory(traj, s).x - minimum_jerk(DEFAULT_START, DEFAULT_END, 7.0, s)[0]) for s in tq)
    assert err < 1e-5


def test_c2_continuity_and_natural_ends():
    demo = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 60, noise_sigma=2e-4, seed=5)
    for spl in fit_smoothing_spline(demo, p=0.99).splines:
        k = spl.knots[1:-1]
        eps = 1e-9
        for nu, tol in ((0, 1e-12), (1, 1e-9), (2, 1e-7)):
            np.testing.assert_allclose(spl(k - eps, nu), spl(k + eps, nu), atol=tol)
        assert abs(spl(spl.knots[0], 2)) < 1e-10
        assert abs(spl(spl.knots[-1], 2)) < 1e-9


def test_roughness_decreases_as_smoothing_increases():
    demo = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 80, noise_sigma=5e-4, seed=6)
    rough = [fit_smoothing_spline(demo, p).splines[0].roughness() for p in (0.9999, 0.999, 0.99, 0.9)]
    assert all(a > b for a, b in zip(rough, rough[1:]))


def test_fit_is_linear_in_data():
    t = np.linspace(0, 1, 20)
    rng = np.random.default_rng(7)
    y1, y2 = rng.normal(size=(2, 20))
    fit = lambda y: fit_smoothing_spline(Demonstration(t, np.column_stack([y, y, y])), 0.9).splines[0].coef
    np.testing.assert_allclose(fit(2 * y1 - 3 * y2), 2 * fit(y1) - 3 * fit(y2), atol=1e-10)


def test_fit_rejects_bad_p():
    demo = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 10)
    with pytest.raises(ValueError):
        fit_smoothing_spline(demo, p=1.5)


# evaluation

def test_constant_samples():
    demo = make_demo(np.linspace(0, 1, 10), lambda s: 0.0 * s + 0.05)
    ref = eval_trajectory(fit_smoothing_spline(demo), 0.37)
    np.testing.assert_allclose(ref.x, [0.05, 0.2, -0.05], atol=1e-14)
    assert np.max(np.abs(ref.xdot)) < 1e-12 and np.max(np.abs(ref.xddot)) < 1e-10


def test_eval_derivatives_match_finite_differences():
    demo = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 200, noise_sigma=1e-4, seed=8)
    traj = fit_smoothing_spline(demo)
    h = 1e-6
    for tq in np.random.default_rng(9).uniform(0.01, 6.99, 1000):
        lo, mid, hi = (eval_trajectory(traj, tq + d) for d in (-h, 0.0, h))
        np.testing.assert_allclose((hi.x - lo.x) / (2 * h), mid.xdot, atol=1e-6)
        np.testing.assert_allclose((hi.xdot - lo.xdot) / (2 * h), mid.xddot, atol=1e-6)


def test_eval_clamps_outside_domain():
    traj = fit_smoothing_spline(synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 50))
    end = eval_trajectory(traj, 7.0)
    late = eval_trajectory(traj, 9.0)
    assert late.clamped and not end.clamped
    np.testing.assert_array_equal(late.x, end.x)
    assert eval_trajectory(traj, -1.0).clamped


# synthetic demonstrations

def test_synth_demo_boundary_conditions():
    demo = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 200)
    np.testing.assert_allclose(demo.x[0], DEFAULT_START, atol=1e-15)
    np.testing.assert_allclose(demo.x[-1], DEFAULT_END, atol=1e-15)
    _, v, a = minimum_jerk(DEFAULT_START, DEFAULT_END, 7.0, np.array([0.0, 7.0]))
    assert np.max(np.abs(v)) == 0 and np.max(np.abs(a)) < 1e-15


def test_synth_demo_deterministic():
    a = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 40, noise_sigma=1e-4, seed=11)
    b = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 40, noise_sigma=1e-4, seed=11)
    c = synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 40, noise_sigma=1e-4, seed=12)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)


def test_synth_demo_out_of_workspace():
    with pytest.raises(OutOfWorkspace):
        synth_demo(DEFAULT_START, (0.0, 0.0, 0.5), 7.0, 40)


def test_synth_demo_rejects_zero_duration():
    with pytest.raises(ValueError):
        synth_demo(DEFAULT_START, DEFAULT_END, 0.0, 40)


# persistence

def test_save_load_round_trip(tmp_path):
    traj = fit_smoothing_spline(synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 120, noise_sigma=1e-4, seed=2))
    path = tmp_path / "ref.lfdtraj"
    save_trajectory(traj, path)
    back = load_trajectory(path)
    assert back.p == traj.p and back.t_s == traj.t_s
    for a, b in zip(traj.splines, back.splines):
        np.testing.assert_array_equal(a.knots, b.knots)
        np.testing.assert_array_equal(a.coef, b.coef)
    for tq in (0.0, 1.234, 7.0):
        np.testing.assert_array_equal(eval_trajectory(traj, tq).xddot, eval_trajectory(back, tq).xddot)


def test_load_truncated(tmp_path):
    traj = fit_smoothing_spline(synth_demo(DEFAULT_START, DEFAULT_END, 7.0, 20))
    path = tmp_path / "ref.lfdtraj"
    save_trajectory(traj, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[: len(lines) // 2]) + "\n")
    with pytest.raises(ParseError):
        load_trajectory(path)


def test_load_wrong_version(tmp_path):
    path = tmp_path / "ref.lfdtraj"
    path.write_text("lfdtraj v2\n")
    with pytest.raises(FormatVersionMismatch):
        load_trajectory(path)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(4, 40), st.integers(0, 2**31))
def test_fit_is_finite_for_any_p(p, n, seed):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.01, 0.2, n))
    traj = fit_smoothing_spline(Demonstration(t, rng.normal(size=(n, 3))), p)
    assert all(np.all(np.isfinite(s.coef)) for s in traj.splines)
