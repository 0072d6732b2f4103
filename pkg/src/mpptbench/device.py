"""Single-diode PV device model.

A device is one cell, or ``n_series_cells`` identical cells lumped into a
module (voltage scales with the cell count, current does not). All functions
are pure; parameters and environments are frozen dataclasses.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DegenerateParams, NoConvergence, UsageError

K_B = 1.380649e-23  # J/K
Q_E = 1.602176634e-19  # C
T_STC = 25.0
G_STC = 1000.0

_EXP_CAP = 700.0
_MAX_ITER = 100
RESIDUAL_TOL = 1e-12
# Fitted (effective) ideality factors below 1 are accepted: the reference
# datasheet cannot be reproduced otherwise.
ALPHA_MIN = 0.5
ALPHA_MAX = 2.0


@dataclass(frozen=True)
class CellParams:
    isc_stc: float
    voc_stc: float
    i_s: float
    alpha_ideality: float
    r_s: float
    r_sh: float
    k_i: float = 0.0
    k_v: float = 0.0
    t_stc: float = T_STC
    g_stc: float = G_STC
    n_series_cells: int = 1

    def __post_init__(self):
        if not self.isc_stc > 0:
            raise UsageError("isc_stc must be > 0")
        if not self.voc_stc > 0:
            raise UsageError("voc_stc must be > 0")
        if self.r_s < 0:
            raise UsageError("r_s must be >= 0")
        if not self.r_sh > 0:
            raise UsageError("r_sh must be > 0")
        if not ALPHA_MIN <= self.alpha_ideality <= ALPHA_MAX:
            raise UsageError(f"alpha_ideality must lie in [{ALPHA_MIN}, {ALPHA_MAX}]")
        if self.g_stc != G_STC or self.t_stc != T_STC:
            raise UsageError("reference conditions are fixed at 1000 W/m^2, 25 C")
        if self.n_series_cells < 1:
            raise UsageError("n_series_cells must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown CellParams keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = int(value) if key == "n_series_cells" else float(value)
        return cls(**kwargs)

    def scaled(self, current_factor):
        """Same cell with every current-like quantity multiplied (area scaling)."""
        return CellParams(
            isc_stc=self.isc_stc * current_factor,
            voc_stc=self.voc_stc,
            i_s=self.i_s * current_factor,
            alpha_ideality=self.alpha_ideality,
            r_s=self.r_s / current_factor,
            r_sh=self.r_sh / current_factor,
            k_i=self.k_i * current_factor,
            k_v=self.k_v,
            n_series_cells=self.n_series_cells,
        )


@dataclass(frozen=True)
class Environment:
    irradiance: float = G_STC
    temperature: float = T_STC

    def __post_init__(self):
        if not self.irradiance >= 0:
            raise UsageError(f"irradiance must be >= 0, got {self.irradiance}")


STC = Environment(G_STC, T_STC)


@dataclass(frozen=True)
class OperatingPoint:
    voltage: float
    current: float
    power: float

    @classmethod
    def at(cls, voltage, current):
        voltage = float(voltage)
        current = float(current)
        return cls(voltage, current, voltage * current)


def thermal_voltage(temperature_c):
    return K_B * (temperature_c + 273.15) / Q_E


def diode_scale(p: CellParams, env: Environment):
    """alpha * n * V_t, the denominator of every diode exponent."""
    return p.alpha_ideality * p.n_series_cells * thermal_voltage(env.temperature)


def photocurrent(p: CellParams, env: Environment):
    return (p.isc_stc + p.k_i * (env.temperature - p.t_stc)) * env.irradiance / p.g_stc


def saturation_current(p: CellParams, env: Environment):
    dt = env.temperature - p.t_stc
    denom = math.expm1((p.voc_stc + p.k_v * dt) / diode_scale(p, env))
    if not denom > 0 or math.isinf(denom):
        raise DegenerateParams(f"saturation-current denominator is {denom}")
    i_s = (p.isc_stc + p.k_i * dt) / denom
    if not i_s > 0:
        raise DegenerateParams(f"saturation current {i_s} is not positive")
    return i_s


def _terms(p, env):
    return photocurrent(p, env), saturation_current(p, env), diode_scale(p, env)


def solve_current(p: CellParams, env: Environment, v):
    """Terminal current at voltage ``v``: Newton on the implicit diode equation.

    The residual is concave and strictly decreasing in I, so Newton is
    monotone once right of the root; a bracket is kept anyway and any step
    that leaves it is replaced by bisection.
    """
    iph, i_s, nvt = _terms(p, env)
    rs, rsh = p.r_s, p.r_sh
    v = float(v)
    i = iph - i_s * math.expm1(min(v / nvt, _EXP_CAP)) - v / rsh
    if rs == 0.0:
        return i
    lo, hi = -math.inf, math.inf
    for _ in range(_MAX_ITER):
        x = v + i * rs
        e = math.exp(min(x / nvt, _EXP_CAP))
        f = iph - i_s * (e - 1.0) - x / rsh - i
        df = -i_s * rs / nvt * e - rs / rsh - 1.0
        if f > 0:
            lo = i
        elif f < 0:
            hi = i
        nxt = i - f / df
        if abs(f) < RESIDUAL_TOL:
            return nxt if lo <= nxt <= hi else i
        if not lo < nxt < hi and not (math.isinf(lo) or math.isinf(hi)):
            nxt = 0.5 * (lo + hi)
        i = nxt
    raise NoConvergence(f"no convergence at V={v}")


def current_array(p: CellParams, env: Environment, v):
    """Vectorised :func:`solve_current` over an array of voltages."""
    iph, i_s, nvt = _terms(p, env)
    rs, rsh = p.r_s, p.r_sh
    v = np.asarray(v, dtype=float)
    i = iph - i_s * np.expm1(np.minimum(v / nvt, _EXP_CAP)) - v / rsh
    if rs == 0.0:
        return i
    for _ in range(_MAX_ITER):
        x = v + i * rs
        e = np.exp(np.minimum(x / nvt, _EXP_CAP))
        f = iph - i_s * (e - 1.0) - x / rsh - i
        df = -i_s * rs / nvt * e - rs / rsh - 1.0
        i = i - f / df
        if np.all(np.abs(f) < RESIDUAL_TOL):
            return i
    raise NoConvergence("vectorised current solve did not converge")


def voltage_array(p: CellParams, env: Environment, i):
    """Terminal voltage carrying current ``i`` (inverse of :func:`current_array`).

    Valid for 0 <= i <= I(V=0); the starting point is the exact R_sh = inf
    solution, which sits right of the root, so Newton descends monotonically.
    """
    iph, i_s, nvt = _terms(p, env)
    rs, rsh = p.r_s, p.r_sh
    i = np.asarray(i, dtype=float)
    arg = np.maximum((iph - i) / i_s, -1.0 + 1e-300)
    v = nvt * np.log1p(arg) - i * rs
    if math.isinf(rsh):
        return v
    for _ in range(_MAX_ITER):
        x = v + i * rs
        e = np.exp(np.minimum(x / nvt, _EXP_CAP))
        f = iph - i_s * (e - 1.0) - x / rsh - i
        df = -i_s / nvt * e - 1.0 / rsh
        v = v - f / df
        if np.all(np.abs(f) < RESIDUAL_TOL):
            return v
    raise NoConvergence("vectorised voltage solve did not converge")


def current_slope(p: CellParams, env: Environment, v, i):
    """dI/dV along the curve at (v, i), by implicit differentiation."""
    _, i_s, nvt = _terms(p, env)
    rs, rsh = p.r_s, p.r_sh
    a = i_s / nvt * np.exp(np.minimum((np.asarray(v) + np.asarray(i) * rs) / nvt, _EXP_CAP))
    return -(a + 1.0 / rsh) / (1.0 + rs * a + rs / rsh)


def open_circuit_voltage(p: CellParams, env: Environment):
    if photocurrent(p, env) <= 0:
        return 0.0
    return float(voltage_array(p, env, 0.0))


def short_circuit_current(p: CellParams, env: Environment):
    return solve_current(p, env, 0.0)


def analytic_slope(p: CellParams, env: Environment, op: OperatingPoint, mode="full"):
    """dP/dV at an operating point on the curve.

    ``full`` keeps series and shunt resistance; ``simplified`` is the
    R_s -> 0, R_sh -> inf form and is only accurate for such a device.
    """
    v, i = op.voltage, op.current
    if mode == "full":
        return float(i + v * current_slope(p, env, v, i))
    if mode == "simplified":
        iph, i_s, nvt = _terms(p, env)
        e = math.exp(min(v / nvt, _EXP_CAP))
        return iph - i_s * (e - 1.0) - v * (i_s / nvt) * e
    raise UsageError(f"unknown slope mode {mode!r}")
