"""Irradiance and temperature test profiles.

A profile is a contiguous list of hold/ramp segments. Sampling is exact and
right-continuous: at a boundary the later segment wins.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import NegativeIrradiance, NonMonotoneTime, OutOfRange, ParseError, UnknownScenario, UsageError

IRRADIANCE = "irradiance"
TEMPERATURE = "temperature"

_T_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    kind: str  # "hold" | "ramp"
    start_value: float
    end_value: float

    def at(self, t):
        if self.kind == "hold" or t <= self.t_start:
            return self.start_value
        if t >= self.t_end:
            return self.end_value
        frac = (t - self.t_start) / (self.t_end - self.t_start)
        return self.start_value + frac * (self.end_value - self.start_value)


@dataclass(frozen=True)
class Profile:
    segments: Tuple[Segment, ...]
    quantity: str = IRRADIANCE

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise UsageError("profile needs at least one segment")
        if self.quantity not in (IRRADIANCE, TEMPERATURE):
            raise UsageError(f"unknown quantity {self.quantity!r}")
        for a, b in zip(segs, segs[1:]):
            if b.t_start != a.t_end:
                raise UsageError("segments must be contiguous")
        for s in segs:
            if not s.t_end > s.t_start:
                raise NonMonotoneTime("segment end must follow its start")
            if s.kind not in ("hold", "ramp"):
                raise UsageError(f"unknown segment kind {s.kind!r}")
            if self.quantity == IRRADIANCE and min(s.start_value, s.end_value) < 0:
                raise NegativeIrradiance("irradiance must be >= 0")
        object.__setattr__(self, "_starts", [s.t_start for s in segs])

    @property
    def t_start(self):
        return self.segments[0].t_start

    @property
    def duration(self):
        return self.segments[-1].t_end - self.segments[0].t_start

    @property
    def t_end(self):
        return self.segments[-1].t_end

    def sample(self, t):
        if t < self.t_start - _T_TOL or t > self.t_end + _T_TOL:
            raise OutOfRange(f"t={t} outside [{self.t_start}, {self.t_end}]")
        k = max(bisect.bisect_right(self._starts, t) - 1, 0)
        return self.segments[k].at(t)

    def events(self):
        """Times where a segment begins, excluding t=0."""
        return [s.t_start for s in self.segments[1:]]

    def values(self):
        return [v for s in self.segments for v in (s.start_value, s.end_value)]

    def to_rows(self):
        return [(s.t_start, s.t_end, s.kind, s.start_value, s.end_value) for s in self.segments]


def from_schedule(steps, quantity=IRRADIANCE, t0=0.0):
    """Build a profile from (duration, kind, start, end) tuples.

    Boundaries are rounded to 1e-12 s so that schedule sums are exact.
    """
    segs = []
    t = t0
    for dur, kind, v0, v1 in steps:
        t1 = round(t + dur, 12)
        segs.append(Segment(t, t1, kind, float(v0), float(v1)))
        t = t1
    return Profile(tuple(segs), quantity)


def hold(dur, value):
    return (dur, "hold", value, value)


def ramp(dur, v0, v1):
    return (dur, "ramp", v0, v1)


def profile1():
    """Worst-case step profile: darkness <-> full sun, then 25/50/75 % holds."""
    return from_schedule([
        hold(0.02, 0.0),
        hold(0.04, 1000.0),
        hold(0.01, 0.0),
        hold(0.03, 250.0),
        hold(0.03, 500.0),
        hold(0.03, 750.0),
    ])


def profile2():
    """EN50530 dynamic schedule, 10-50 % then 30-100 %, levels of 1000 W/m^2."""
    return from_schedule([
        hold(0.025, 100.0),
        ramp(0.050, 100.0, 500.0),
        hold(0.025, 500.0),
        ramp(0.050, 500.0, 100.0),
        hold(0.025, 100.0),
        hold(0.025, 300.0),
        ramp(0.075, 300.0, 1000.0),
        hold(0.025, 1000.0),
        ramp(0.075, 1000.0, 300.0),
        hold(0.025, 300.0),
    ])


STATIC_TEMPS = (0.0, 25.0, 50.0, 75.0)
TEMP_RAMPS = ((20.0, 50.0), (25.0, 45.0))
STATIC_HOLD_S = 0.05
RAMP_S = 0.1
CONSTANT_S = 0.05


def _num(x):
    return str(int(x)) if float(x).is_integer() else str(x)


def thermal_scenarios():
    out = []
    for t in STATIC_TEMPS:
        out.append((f"temp_static_{_num(t)}", from_schedule([hold(STATIC_HOLD_S, t)], TEMPERATURE)))
    for a, b in TEMP_RAMPS:
        out.append((f"temp_ramp_{_num(a)}_{_num(b)}", from_schedule([ramp(RAMP_S, a, b)], TEMPERATURE)))
    return out


@dataclass(frozen=True)
class ScenarioProfiles:
    """Irradiance and/or temperature drive for one run.

    Irradiance multiplies every module's own level by G(t)/1000; a temperature
    profile sets every module's temperature. Missing profiles leave the array
    as built.
    """

    name: str
    irradiance: Optional[Profile] = None
    temperature: Optional[Profile] = None

    @property
    def duration(self):
        ds = [p.t_end for p in (self.irradiance, self.temperature) if p is not None]
        return min(ds) if ds else CONSTANT_S

    def events(self):
        ev = set()
        for p in (self.irradiance, self.temperature):
            if p is not None:
                ev.update(p.events())
        return sorted(ev)


def constant(duration=CONSTANT_S, irradiance=1000.0):
    return from_schedule([hold(duration, irradiance)])


def named(name) -> ScenarioProfiles:
    """Built-in profile set by name.

    ``profile1``, ``profile2``, ``constant`` (1000 W/m^2, 0.05 s),
    ``temp_static_<T>`` and ``temp_ramp_<a>_<b>`` (with 1000 W/m^2).
    """
    if name == "profile1":
        return ScenarioProfiles(name, irradiance=profile1())
    if name == "profile2":
        return ScenarioProfiles(name, irradiance=profile2())
    if name == "constant":
        return ScenarioProfiles(name, irradiance=constant())
    for key, prof in thermal_scenarios():
        if key == name:
            return ScenarioProfiles(name, irradiance=constant(prof.duration), temperature=prof)
    raise UnknownScenario(f"unknown profile {name!r}; choose from {', '.join(profile_names())}")


def profile_names():
    return ["profile1", "profile2", "constant"] + [k for k, _ in thermal_scenarios()]


def _parse_float(text, lineno):
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"line {lineno}: not a number: {text!r}") from None
    if not math.isfinite(x):
        raise ParseError(f"line {lineno}: non-finite value {text!r}")
    return x


def load_trace(path, resample_dt=None) -> Profile:
    """Piecewise-linear irradiance profile from a ``time_s,irradiance_wm2`` CSV.

    The trace must start at t=0. With ``resample_dt`` the rows are first
    re-gridded by linear interpolation (the final timestamp is always kept).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read trace {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["time_s", "irradiance_wm2"]:
        raise ParseError("trace header must be 'time_s,irradiance_wm2'")
    times, values = [], []
    for n, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"line {n}: expected 2 columns, got {len(row)}")
        t, g = _parse_float(row[0], n), _parse_float(row[1], n)
        if times and t <= times[-1]:
            raise NonMonotoneTime(f"line {n}: time {t} does not increase")
        if g < 0:
            raise NegativeIrradiance(f"line {n}: irradiance {g} < 0")
        times.append(t)
        values.append(g)
    if len(times) < 2:
        raise ParseError("trace needs at least two rows")
    if times[0] != 0.0:
        raise ParseError("trace must start at time 0")
    if resample_dt is not None:
        if not resample_dt > 0:
            raise UsageError("resample_dt must be > 0")
        n = int(math.floor(times[-1] / resample_dt + 1e-9))
        grid = [round(k * resample_dt, 12) for k in range(n + 1)]
        if grid[-1] < times[-1]:
            grid.append(times[-1])
        values = list(np.interp(grid, times, values))
        times = grid
    segs = []
    for (t0, g0), (t1, g1) in zip(zip(times, values), zip(times[1:], values[1:])):
        segs.append(Segment(float(t0), float(t1), "hold" if g0 == g1 else "ramp", float(g0), float(g1)))
    return Profile(tuple(segs), IRRADIANCE)
