import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpptbench import converter as cv
from mpptbench import metrics
from mpptbench import scenarios as sc
from mpptbench import sim
from mpptbench.array import build_scenario
from mpptbench.errors import AllDark, EmptyLog, EventOutOfRange, WindowInvalid
from mpptbench.sim import RunLog


def make_log(p_pv, p_max, dt=1e-3):
    p_pv, p_max = np.asarray(p_pv, float), np.asarray(p_max, float)
    n = len(p_pv)
    t = np.arange(n) * dt
    z = np.zeros(n)
    return RunLog(t, z, z, z, p_pv, p_max, ["Tracking"] * n)


def test_efficiency_examples():
    pm = np.linspace(0.05, 0.1, 50)
    assert metrics.efficiency(make_log(pm, pm)) == pytest.approx(100.0)
    assert metrics.efficiency(make_log(0.9 * pm, pm)) == pytest.approx(90.0)


def test_efficiency_skips_dark_intervals():
    pm = np.array([0, 0, 0, 1, 1, 1, 0, 0, 1, 1.0])
    pv = np.array([0, 0, 0, 0.5, 0.5, 0.5, 0, 0, 0.5, 0.5])
    assert metrics.efficiency(make_log(pv, pm)) == pytest.approx(50.0)
    with pytest.raises(AllDark):
        metrics.efficiency(make_log(np.zeros(5), np.zeros(5)))
    with pytest.raises(EmptyLog):
        metrics.efficiency(make_log([], []))


def test_tracking_time_examples():
    pm = np.ones(100)
    assert metrics.tracking_time(make_log(pm, pm), 0.01) == 0.0
    assert metrics.tracking_time(make_log(0.5 * pm, pm), 0.0) is None
    pv = np.where(np.arange(100) < 30, 0.5, 0.99)
    assert metrics.tracking_time(make_log(pv, pm), 0.01) == pytest.approx(0.02)
    # A single in-band sample does not count as settled.
    pv = np.full(100, 0.5)
    pv[40] = 1.0
    assert metrics.tracking_time(make_log(pv, pm), 0.0) is None
    with pytest.raises(EventOutOfRange):
        metrics.tracking_time(make_log(pm, pm), 1.0)


def test_tracking_time_respects_until():
    pm = np.ones(100)
    pv = np.where(np.arange(100) < 60, 0.5, 1.0)
    log = make_log(pv, pm)
    assert metrics.tracking_time(log, 0.0, until=0.05) is None
    assert metrics.tracking_time(log, 0.0) == pytest.approx(0.06)


def test_ss_oscillation():
    pm = np.ones(50)
    assert metrics.ss_oscillation(make_log(pm, pm), (0.0, 0.049)) == 0.0
    pv = np.where(np.arange(50) % 2, 0.9, 1.0)
    assert metrics.ss_oscillation(make_log(pv, pm), (0.0, 0.049)) == pytest.approx(10.0)
    with pytest.raises(WindowInvalid):
        metrics.ss_oscillation(make_log(pm, pm), (0.03, 0.02))
    with pytest.raises(WindowInvalid):
        metrics.ss_oscillation(make_log(pm, pm), (0.0, 1.0))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_scale_invariance(c):
    rng = np.random.default_rng(3)
    pm = np.concatenate([np.zeros(10), np.full(90, 0.09)])
    pv = pm * np.clip(rng.normal(0.97, 0.03, 100), 0, 1)
    pv[60:] = pm[60:]
    a, b = make_log(pv, pm), make_log(c * pv, c * pm)
    assert metrics.efficiency(b) == pytest.approx(metrics.efficiency(a), rel=1e-12)
    assert metrics.tracking_time(b, 0.01) == metrics.tracking_time(a, 0.01)
    assert metrics.ss_oscillation(b, (0.05, 0.09)) == pytest.approx(metrics.ss_oscillation(a, (0.05, 0.09)),
                                                                   rel=1e-9, abs=1e-12)


def test_refinement_stability(cell):
    args = (build_scenario("STC", cell), sc.named("constant"), cv.ConverterSpec("boost"), "adaptive_gd")
    full = sim.run(*args, sim.SimConfig(duration=0.01))
    half = sim.run(*args, sim.SimConfig(duration=0.01, record_decimation=2))
    assert abs(metrics.efficiency(full) - metrics.efficiency(half)) < 0.01


def test_report_on_profile1(cell):
    prof = sc.named("profile1")
    log = sim.run(build_scenario("STC", cell), prof, cv.ConverterSpec("boost"), "adaptive_gd",
                  sim.SimConfig(duration=0.07))
    rep = metrics.report(log, prof.events())
    assert [e for e, _ in rep.tracking_times] == [0.0, 0.02, 0.06]
    assert rep.tracking_times[1][1] is not None
    assert 0 <= rep.eta_mppt <= 100
    assert '"eta_mppt"' in rep.to_json()


def test_steady_window_and_segments():
    assert metrics.steady_window(0.0, 1.0) == (0.8, 1.0)
    pm = np.array([0, 0, 1, 1, 1, 2, 2.0])
    lo, hi = metrics.segment_bounds(make_log(pm, pm), 0.003)
    assert (lo, hi) == (pytest.approx(0.002), pytest.approx(0.004))
