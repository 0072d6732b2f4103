"""Series/parallel/bypass composition of PV devices into one terminal curve.

Idealisations: bypass diodes clamp a shaded element at exactly 0 V, and every
parallel branch carries a blocking diode, so no branch ever sinks current.
Reverse-bias breakdown is not modelled: a series chain without bypass simply
saturates at the current of its weakest element.

Every node evaluates arrays of operating points at once; inversions use a
bracketed Newton iteration with bisection fallback.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy.signal import find_peaks

from . import device
from .device import _EXP_CAP, CellParams, Environment
from .errors import NoConvergence, OutOfRange, UnknownScenario, UsageError

_MAX_ITER = 200
_NEWTON_ITER = 40


def _solve_monotone(fn, target, lo, hi, xtol):
    """Solve fn(x) = target elementwise for fn non-increasing on [lo, hi].

    ``fn`` returns (value, derivative). Assumes fn(lo) >= target >= fn(hi).
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = 0.5 * (lo + hi)
    for it in range(_MAX_ITER):
        val, der = fn(x)
        r = val - target
        lo = np.where(r > 0, x, lo)
        hi = np.where(r < 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = x - r / der
        # Newton can cycle on bypass kinks; plain bisection after _NEWTON_ITER.
        bad = ~np.isfinite(nxt) | (nxt <= lo) | (nxt >= hi) | (it >= _NEWTON_ITER)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        nxt = np.where(r == 0, x, nxt)
        done = (np.abs(nxt - x) <= xtol) | (hi - lo <= xtol)
        x = nxt
        if np.all(done):
            return x
    raise NoConvergence("array curve inversion did not converge")


def _solve_scalar(fn, target, lo, hi, xtol):
    """Scalar twin of :func:`_solve_monotone`; avoids numpy overhead per step."""
    x = 0.5 * (lo + hi)
    for it in range(_MAX_ITER):
        val, der = fn(x)
        r = val - target
        if r == 0:
            return x
        if r > 0:
            lo = x
        else:
            hi = x
        nxt = x - r / der if der != 0 and it < _NEWTON_ITER else math.nan
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= xtol or hi - lo <= xtol:
            return nxt
        x = nxt
    raise NoConvergence("array curve inversion did not converge")


def _group(children):
    """Identical children merged into (child, multiplicity) pairs, order kept."""
    counts = {}
    for c in children:
        counts[c] = counts.get(c, 0) + 1
    return tuple(counts.items())


class ArrayNode:
    """Base of the composition tree.

    ``current_at(v)`` maps voltages to currents and ``voltage_at(i)`` maps
    currents to voltages; both accept scalars or arrays. ``i_max`` is the
    largest current the node can carry at non-negative voltage (infinite when a
    bypass path exists).
    """

    def current_and_slope(self, v):
        raise NotImplementedError

    def voltage_and_slope(self, i):
        raise NotImplementedError

    def devices(self):
        raise NotImplementedError

    def map_devices(self, fn):
        """Copy of the tree with every Device replaced by ``fn(device)``."""
        raise NotImplementedError

    # Scalar (value, slope) twins of the two array methods.
    def _i1(self, v):
        raise NotImplementedError

    def _v1(self, i):
        raise NotImplementedError

    def current_at(self, v):
        if isinstance(v, (float, int)):
            if v < 0:
                raise OutOfRange("voltage must be >= 0")
            return self._i1(float(v))[0]
        v = np.asarray(v, dtype=float)
        if np.any(v < 0):
            raise OutOfRange("voltage must be >= 0")
        out = self.current_and_slope(np.atleast_1d(v))[0]
        return out.reshape(v.shape) if v.ndim else float(out[0])

    def voltage_at(self, i):
        i = np.asarray(i, dtype=float)
        if np.any(i < 0) or np.any(i > self.i_max * (1 + 1e-12)):
            raise OutOfRange(f"current outside [0, {self.i_max}]")
        if i.ndim == 0:
            return self._v1(float(i))[0]
        return self.voltage_and_slope(i)[0]

    @cached_property
    def v_oc(self):
        return float(self.voltage_and_slope(np.zeros(1))[0][0])

    @cached_property
    def i_sc(self):
        return float(self.current_and_slope(np.zeros(1))[0][0])

    def with_environment(self, env: Environment):
        return self.map_devices(lambda d: replace(d, env=env))

    def scaled(self, irradiance_scale=1.0, temperature=None):
        """Every device's irradiance multiplied; temperature overridden if given."""
        def fn(d):
            t = d.env.temperature if temperature is None else temperature
            return replace(d, env=Environment(d.env.irradiance * irradiance_scale, t))
        return self.map_devices(fn)


@dataclass(frozen=True, eq=True)
class Device(ArrayNode):
    params: CellParams
    env: Environment = device.STC

    @property
    def i_max(self):
        return self.i_sc

    @cached_property
    def i_sc(self):
        if device.photocurrent(self.params, self.env) <= 0:
            return 0.0
        return device.solve_current(self.params, self.env, 0.0)

    def current_and_slope(self, v):
        if device.photocurrent(self.params, self.env) <= 0:
            return np.zeros_like(v), np.zeros_like(v)
        i = device.current_array(self.params, self.env, v)
        di = device.current_slope(self.params, self.env, v, i)
        blocked = i <= 0
        return np.where(blocked, 0.0, i), np.where(blocked, 0.0, di)

    def voltage_and_slope(self, i):
        if device.photocurrent(self.params, self.env) <= 0:
            return np.zeros_like(i), np.zeros_like(i)
        isc = self.i_sc
        ic = np.minimum(i, isc)
        v = np.maximum(device.voltage_array(self.params, self.env, ic), 0.0)
        v = np.where(i >= isc, 0.0, v)
        dv = np.where(i >= isc, 0.0, 1.0 / device.current_slope(self.params, self.env, v, ic))
        return v, dv

    @cached_property
    def _terms(self):
        if device.photocurrent(self.params, self.env) <= 0:
            return None
        return (device.photocurrent(self.params, self.env),
                device.saturation_current(self.params, self.env),
                device.diode_scale(self.params, self.env))

    def _didv(self, x):
        _, i_s, nvt = self._terms
        rs, rsh = self.params.r_s, self.params.r_sh
        a = i_s / nvt * math.exp(min(x / nvt, _EXP_CAP))
        return -(a + 1.0 / rsh) / (1.0 + rs * a + rs / rsh)

    def _i1(self, v):
        if self._terms is None:
            return 0.0, 0.0
        i = device.solve_current(self.params, self.env, v)
        if i <= 0:
            return 0.0, 0.0
        return i, self._didv(v + i * self.params.r_s)

    def _v1(self, i):
        if self._terms is None or i >= self.i_sc:
            return 0.0, 0.0
        iph, i_s, nvt = self._terms
        rs, rsh = self.params.r_s, self.params.r_sh
        v = nvt * math.log1p((iph - i) / i_s) - i * rs
        for _ in range(_MAX_ITER):
            x = v + i * rs
            e = math.exp(min(x / nvt, _EXP_CAP))
            f = iph - i_s * (e - 1.0) - x / rsh - i
            v -= f / (-i_s / nvt * e - 1.0 / rsh)
            if abs(f) < device.RESIDUAL_TOL:
                break
        else:
            raise NoConvergence(f"no voltage for I={i}")
        if v <= 0:
            return 0.0, 0.0
        return v, 1.0 / self._didv(v + i * rs)

    def devices(self):
        return [self]

    def map_devices(self, fn):
        return fn(self)


@dataclass(frozen=True, eq=True)
class Bypassed(ArrayNode):
    child: ArrayNode

    i_max = math.inf

    def current_and_slope(self, v):
        return self.child.current_and_slope(v)

    def voltage_and_slope(self, i):
        lim = self.child.i_max
        ic = np.minimum(i, lim)
        v, dv = self.child.voltage_and_slope(ic)
        off = (i > lim) | (v <= 0)
        return np.where(off, 0.0, v), np.where(off, 0.0, dv)

    def _i1(self, v):
        return self.child._i1(v)

    def _v1(self, i):
        if i > self.child.i_max:
            return 0.0, 0.0
        v, dv = self.child._v1(i)
        return (0.0, 0.0) if v <= 0 else (v, dv)

    def devices(self):
        return self.child.devices()

    def map_devices(self, fn):
        return Bypassed(self.child.map_devices(fn))


@dataclass(frozen=True, eq=True)
class Series(ArrayNode):
    children: Tuple[ArrayNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise UsageError("Series needs at least one child")

    @cached_property
    def i_max(self):
        return min(c.i_max for c in self.children)

    @cached_property
    def _groups(self):
        return _group(self.children)

    def voltage_and_slope(self, i):
        v = np.zeros_like(i)
        dv = np.zeros_like(i)
        for c, n in self._groups:
            cv, cdv = c.voltage_and_slope(i)
            v = v + n * cv
            dv = dv + n * cdv
        return v, dv

    @cached_property
    def _span(self):
        # Above i_hi every bypassed child is clamped to 0 V.
        i_hi = min(self.i_max, max(c.i_sc for c in self.children))
        return i_hi, self._v1(0.0)[0], self._v1(i_hi)[0]

    def _v1(self, i):
        v = dv = 0.0
        for c, n in self._groups:
            cv, cdv = c._v1(i)
            v += n * cv
            dv += n * cdv
        return v, dv

    def _i1(self, v):
        i_hi, v_top, v_floor = self._span
        if v >= v_top:
            return 0.0, 0.0
        if v <= v_floor:
            return i_hi, 0.0
        i = _solve_scalar(self._v1, v, 0.0, i_hi, 1e-15)
        dv = self._v1(i)[1]
        return i, (1.0 / dv if dv < 0 else 0.0)

    def current_and_slope(self, v):
        i_hi, v_top, v_floor = self._span
        i = np.zeros_like(v)
        inside = (v < v_top) & (v > v_floor)
        i = np.where(v <= v_floor, i_hi, i)
        if np.any(inside):
            sol = _solve_monotone(self.voltage_and_slope, v[inside],
                                  np.zeros(inside.sum()), np.full(inside.sum(), i_hi), 1e-15)
            i[inside] = sol
        dv = self.voltage_and_slope(i)[1]
        with np.errstate(divide="ignore"):
            di = np.where((dv < 0) & inside, 1.0 / dv, 0.0)
        return i, di

    def devices(self):
        return [d for c in self.children for d in c.devices()]

    def map_devices(self, fn):
        return Series(tuple(c.map_devices(fn) for c in self.children))


@dataclass(frozen=True, eq=True)
class Parallel(ArrayNode):
    children: Tuple[ArrayNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise UsageError("Parallel needs at least one child")

    @cached_property
    def i_max(self):
        return sum(c.i_max for c in self.children)

    @cached_property
    def _groups(self):
        return _group(self.children)

    def current_and_slope(self, v):
        i = np.zeros_like(v)
        di = np.zeros_like(v)
        for c, n in self._groups:
            ci, cdi = c.current_and_slope(v)
            i = i + n * np.maximum(ci, 0.0)
            di = di + n * np.where(ci > 0, cdi, 0.0)
        return i, di

    def _i1(self, v):
        i = di = 0.0
        for c, n in self._groups:
            ci, cdi = c._i1(v)
            if ci > 0:
                i += n * ci
                di += n * cdi
        return i, di

    def _v1(self, i):
        if len(self._groups) == 1:
            c, n = self._groups[0]
            cv, cdv = c._v1(i / n)
            return cv, cdv / n
        if i >= self.i_sc:
            return 0.0, 0.0
        v_top = max(c.v_oc for c in self.children)
        if i <= 0:
            return v_top, 0.0
        v = _solve_scalar(self._i1, i, 0.0, v_top, 1e-13)
        di = self._i1(v)[1]
        return v, (1.0 / di if di < 0 else 0.0)

    def voltage_and_slope(self, i):
        if len(self._groups) == 1:
            # n identical branches share the current equally.
            c, n = self._groups[0]
            cv, cdv = c.voltage_and_slope(i / n)
            return cv, cdv / n
        v_top = max(c.v_oc for c in self.children)
        i_zero = self.i_sc
        v = np.zeros_like(i)
        inside = (i > 0) & (i < i_zero)
        v = np.where(i <= 0, v_top, v)
        if np.any(inside):
            sol = _solve_monotone(self.current_and_slope, i[inside],
                                  np.zeros(inside.sum()), np.full(inside.sum(), v_top), 1e-13)
            v[inside] = sol
        di = self.current_and_slope(v)[1]
        with np.errstate(divide="ignore"):
            dv = np.where((di < 0) & inside, 1.0 / di, 0.0)
        return v, dv

    def devices(self):
        return [d for c in self.children for d in c.devices()]

    def map_devices(self, fn):
        return Parallel(tuple(c.map_devices(fn) for c in self.children))


@dataclass(frozen=True)
class CurveTable:
    voltage: np.ndarray
    current: np.ndarray

    @property
    def power(self):
        return self.voltage * self.current

    def local_maxima(self):
        """Indices of local maxima of P (plateaus count once)."""
        p = np.concatenate(([-np.inf], self.power, [-np.inf]))
        peaks, _ = find_peaks(p)
        return peaks - 1

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["voltage_V", "current_A", "power_W"])
        for v, i in zip(self.voltage, self.current):
            w.writerow([repr(float(v)), repr(float(i)), repr(float(v * i))])
        return buf.getvalue()


MIN_TABLE_POINTS = 512


def tabulate(node: ArrayNode, n_points=2001) -> CurveTable:
    if n_points < MIN_TABLE_POINTS:
        raise UsageError(f"n_points must be >= {MIN_TABLE_POINTS}")
    v = np.linspace(0.0, node.v_oc, n_points)
    return CurveTable(v, node.current_and_slope(v)[0])


def uniform(node: ArrayNode, env: Environment = device.STC) -> ArrayNode:
    """Same topology with every device at ``env`` (the unshaded nameplate)."""
    return node.with_environment(env)


# Shading fixtures. Levels in W/m^2, one entry per module; every module is
# one reference cell behind its own bypass diode.
TWO_PEAKS = (1000.0, 1000.0, 1000.0, 400.0)
THREE_PEAKS = (1000.0, 1000.0, 700.0, 700.0, 300.0)
MODERATE = (
    (700.0, 700.0, 700.0, 300.0, 100.0),
    (700.0, 700.0, 300.0, 300.0, 100.0),
    (700.0, 300.0, 300.0, 100.0, 100.0),
)
STRONG = (
    (750.0, 750.0, 750.0, 150.0, 100.0),
    (750.0, 750.0, 150.0, 150.0, 100.0),
    (750.0, 150.0, 150.0, 100.0, 100.0),
)
TCT_ROWS = (500.0, 300.0, 100.0, 200.0, 25.0)
TCT_ROW_WIDTH = 4

SCENARIOS = ("STC", "TwoPeaks", "ThreePeaks", "Moderate", "Strong", "TCT")
PSC_SCENARIOS = SCENARIOS[1:]


def _string(cell, levels):
    return Series(tuple(Bypassed(Device(cell, Environment(g))) for g in levels))


def build_scenario(name, cell: CellParams = None) -> ArrayNode:
    """Array for a named shading scenario (case-insensitive)."""
    from .calibration import reference_cell

    cell = reference_cell() if cell is None else cell
    key = {s.lower(): s for s in SCENARIOS}.get(str(name).lower())
    if key is None:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    if key == "STC":
        return Device(cell, device.STC)
    if key == "TwoPeaks":
        return _string(cell, TWO_PEAKS)
    if key == "ThreePeaks":
        return _string(cell, THREE_PEAKS)
    if key in ("Moderate", "Strong"):
        rows = MODERATE if key == "Moderate" else STRONG
        return Parallel(tuple(_string(cell, r) for r in rows))
    return Series(tuple(
        Bypassed(Parallel(tuple(Device(cell, Environment(g)) for _ in range(TCT_ROW_WIDTH))))
        for g in TCT_ROWS))
