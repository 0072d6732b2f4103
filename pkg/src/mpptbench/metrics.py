"""Evaluation metrics over a RunLog: efficiency, tracking time, oscillation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import AllDark, EmptyLog, EventOutOfRange, WindowInvalid

DARK_W = 1e-12
BAND = 0.02
PERSIST = 20
SS_FRACTION = 0.2


def efficiency(log) -> float:
    """Trapezoidal energy ratio in percent, skipping intervals with a dark endpoint."""
    if len(log) == 0:
        raise EmptyLog("empty log")
    t, pv, pm = log.t, log.p_pv, log.p_max
    if len(t) < 2:
        if pm[0] < DARK_W:
            raise AllDark("every sample is dark")
        return float(100.0 * pv[0] / pm[0])
    lit = (pm[:-1] >= DARK_W) & (pm[1:] >= DARK_W)
    if not np.any(lit):
        raise AllDark("every sample is dark")
    dt = np.diff(t)
    num = np.sum((0.5 * (pv[:-1] + pv[1:]) * dt)[lit])
    den = np.sum((0.5 * (pm[:-1] + pm[1:]) * dt)[lit])
    return float(100.0 * num / den)


def _in_band(log):
    # Dark samples have no MPP to track, so they never count as settled.
    return (np.abs(log.p_pv - log.p_max) <= BAND * log.p_max) & (log.p_max >= DARK_W)


def tracking_time(log, event_t, persist=PERSIST, until=None) -> Optional[float]:
    """Delay from ``event_t`` until P_pv stays within +-2 % of P_max for
    ``persist`` consecutive samples; None if that never happens (before
    ``until`` when given).
    """
    if len(log) == 0:
        raise EmptyLog("empty log")
    if not log.t[0] - 1e-12 <= event_t <= log.t[-1] + 1e-12:
        raise EventOutOfRange(f"event {event_t} outside the log")
    start = int(np.searchsorted(log.t, event_t - 1e-12))
    stop = len(log) if until is None else int(np.searchsorted(log.t, until - 1e-12))
    ok = _in_band(log)[start:stop]
    run = 0
    for k, flag in enumerate(ok):
        run = run + 1 if flag else 0
        if run >= persist:
            first = start + k - persist + 1
            return float(max(log.t[first] - event_t, 0.0))
    return None


def ss_oscillation(log, window: Tuple[float, float]) -> float:
    t0, t1 = window
    if not t1 > t0:
        raise WindowInvalid("window end must follow its start")
    if t0 < log.t[0] - 1e-12 or t1 > log.t[-1] + 1e-12:
        raise WindowInvalid(f"window {window} outside the log")
    mask = log.window(t0, t1)
    if mask.sum() < 2:
        raise WindowInvalid("window holds fewer than two samples")
    pv, pm = log.p_pv[mask], log.p_max[mask]
    mean = float(np.mean(pm))
    if mean < DARK_W:
        raise WindowInvalid("window is dark")
    return float((np.max(pv) - np.min(pv)) / mean * 100.0)


def duty_peak_to_peak(log, window):
    mask = log.window(*window)
    d = log.duty[mask]
    return float(np.max(d) - np.min(d))


def steady_window(t_start, t_end, fraction=SS_FRACTION):
    """Final ``fraction`` of a constant segment."""
    return (t_end - fraction * (t_end - t_start), t_end)


def segment_bounds(log, t):
    """Extent of the constant-P_max run containing time ``t``."""
    k = int(np.searchsorted(log.t, t - 1e-12))
    pm = log.p_max
    lo = k
    while lo > 0 and pm[lo - 1] == pm[k]:
        lo -= 1
    hi = k
    while hi < len(pm) - 1 and pm[hi + 1] == pm[k]:
        hi += 1
    return float(log.t[lo]), float(log.t[hi])


@dataclass
class MetricReport:
    eta_mppt: float
    tracking_times: List[Tuple[float, Optional[float]]] = field(default_factory=list)
    ss_oscillation: Optional[float] = None
    ss_window: Optional[Tuple[float, float]] = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def report(log, events=(), window=None) -> MetricReport:
    """Efficiency, tracking time per event (plus startup at t=0, each searched
    only up to the next event) and the
    steady-state oscillation over ``window`` (default: last 20 % of the final
    constant stretch, if it is lit).
    """
    eta = efficiency(log)
    times = []
    evs = [0.0] + [e for e in events if log.t[0] < e <= log.t[-1]]
    for ev, nxt in zip(evs, evs[1:] + [None]):
        times.append((float(ev), tracking_time(log, ev, until=nxt)))
    if window is None:
        lo, hi = segment_bounds(log, log.t[-1])
        window = steady_window(lo, hi)
    try:
        osc = ss_oscillation(log, window)
    except WindowInvalid:
        osc, window = None, None
    return MetricReport(eta, times, osc, None if window is None else (float(window[0]), float(window[1])))
