"""Quasi-static converter models: duty cycle -> PV terminal voltage.

The output sits on a fixed rail (battery), so the PV-side voltage is
``v_out / gain(D)``. Switching ripple and losses are not modelled; a fixed
conversion efficiency only scales delivered power.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from scipy.optimize import brentq

from .errors import GainUndefined, NonActuatable, UsageError

_EPS = 1e-6

TOPOLOGIES = (
    "boost",
    "buck_boost",
    "bidirectional_buck_boost",
    "cuk",
    "sepic",
    "zeta",
    "quadratic_boost",
    "multilevel_boost",
    "high_step_up_boost",
    "fibonacci_sc",
    "interleaved_sc_hybrid",
    "interleaved_boost_2ph",
    "flyback",
    "forward",
    "push_pull",
    "half_bridge",
    "full_bridge",
    "resonant",
)

# Turns ratios chosen so that a ~0.65 V source reaches a 4.2 V rail well
# inside the default duty range.
_DEFAULT_TURNS = {
    "flyback": 1.0,
    "forward": 10.0,
    "half_bridge": 10.0,
    "push_pull": 5.0,
    "full_bridge": 5.0,
    "high_step_up_boost": 1.0,
    "resonant": 6.5,
}


@dataclass(frozen=True)
class ConverterSpec:
    topology: str = "interleaved_boost_2ph"
    efficiency: float = 0.9643
    v_out: float = 4.2
    d_min: float = 0.05
    d_max: float = 0.95
    turns: float | None = None  # transformer / coupled-inductor ratio n
    levels: int = 2  # N of the multilevel boost
    sc_gain: float = 1.0  # switched-capacitor stage of the SC hybrid
    fib_stages: int = 3  # k of the Fibonacci SC converter
    tank_gain: float = 1.0
    mode: str = "boost"  # bidirectional buck-boost branch: boost | buck
    v_f: float = 0.3  # SEPIC diode drop
    v_switch: float = 0.1  # SEPIC switch drop
    tau: float = 0.0  # optional first-order lag of V_pv behind the command, s

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise UsageError(f"unknown topology {self.topology!r}; choose from {', '.join(TOPOLOGIES)}")
        if not 0 < self.d_min < self.d_max < 1:
            raise UsageError("need 0 < d_min < d_max < 1")
        if not 0 < self.efficiency <= 1:
            raise UsageError("efficiency must lie in (0, 1]")
        if not self.v_out > 0:
            raise UsageError("v_out must be > 0")
        if self.mode not in ("boost", "buck"):
            raise UsageError("mode must be 'boost' or 'buck'")
        if self.tau < 0:
            raise UsageError("tau must be >= 0")
        if self.turns is None:
            object.__setattr__(self, "turns", _DEFAULT_TURNS.get(self.topology, 1.0))

    @property
    def actuatable(self):
        return self.topology not in ("fibonacci_sc", "resonant")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown converter keys: {sorted(unknown)}")
        return cls(**data)


def _fib(k):
    a, b = 1, 1
    for _ in range(k - 1):
        a, b = b, a + b
    return b


def _inv(x):
    if abs(x) < _EPS:
        raise GainUndefined("gain denominator vanishes")
    return 1.0 / x


def ideal_gain(spec: ConverterSpec, d) -> float:
    """V_out / V_in in continuous conduction (magnitude for inverting types)."""
    t, n = spec.topology, spec.turns
    d = float(d)
    if t in ("boost", "interleaved_boost_2ph"):
        return _inv(1.0 - d)
    if t == "quadratic_boost":
        return _inv((1.0 - d) ** 2)
    if t in ("buck_boost", "cuk", "zeta"):
        return d * _inv(1.0 - d)
    if t == "bidirectional_buck_boost":
        return _inv(1.0 - d) if spec.mode == "boost" else d
    if t == "sepic":
        # V_out = V_i * D / (1 - D) - (V_f + V_switch)
        drop = spec.v_f + spec.v_switch
        if abs(d) < _EPS:
            raise GainUndefined("gain denominator vanishes")
        v_in = (spec.v_out + drop) * (1.0 - d) / d
        return spec.v_out * _inv(v_in)
    if t == "flyback":
        return n * d * _inv(1.0 - d)
    if t in ("forward", "half_bridge"):
        return n * d
    if t in ("push_pull", "full_bridge"):
        return 2.0 * n * d
    if t == "multilevel_boost":
        return spec.levels * _inv(1.0 - d)
    if t == "high_step_up_boost":
        return 1.0 + n * _inv(1.0 - d)
    if t == "interleaved_sc_hybrid":
        return _inv(1.0 - d) + spec.sc_gain
    if t == "fibonacci_sc":
        return float(_fib(spec.fib_stages))
    if t == "resonant":
        return n * spec.tank_gain
    raise UsageError(t)


def _check_duty(spec, d):
    if not spec.d_min - 1e-12 <= d <= spec.d_max + 1e-12:
        raise UsageError(f"duty {d} outside [{spec.d_min}, {spec.d_max}]")


def unclamped_voltage(spec: ConverterSpec, d) -> float:
    if not spec.actuatable:
        raise NonActuatable(f"{spec.topology} gain does not depend on duty")
    _check_duty(spec, d)
    g = ideal_gain(spec, d)
    if g < _EPS:
        raise GainUndefined(f"gain {g} at duty {d}")
    return spec.v_out / g


def pv_voltage_for_duty(spec: ConverterSpec, d, v_oc=math.inf) -> float:
    """PV voltage imposed by duty ``d``, clamped to [0, v_oc]."""
    return min(max(unclamped_voltage(spec, d), 0.0), v_oc)


def delivered_power(p_pv, spec: ConverterSpec) -> float:
    if p_pv < 0:
        raise UsageError("p_pv must be >= 0")
    return p_pv * spec.efficiency


def voltage_slope(spec: ConverterSpec, d, h=1e-7) -> float:
    """dV_pv/dD (before clamping) by central difference."""
    lo = max(d - h, spec.d_min)
    hi = min(d + h, spec.d_max)
    return (unclamped_voltage(spec, hi) - unclamped_voltage(spec, lo)) / (hi - lo)


def direction(spec: ConverterSpec) -> int:
    """+1 if raising duty raises V_pv, -1 if it lowers it."""
    mid = 0.5 * (spec.d_min + spec.d_max)
    return 1 if voltage_slope(spec, mid) > 0 else -1


def duty_for_voltage(spec: ConverterSpec, v) -> float:
    """Duty whose unclamped PV voltage is ``v``; saturates at the duty limits."""
    f_lo = unclamped_voltage(spec, spec.d_min) - v
    f_hi = unclamped_voltage(spec, spec.d_max) - v
    if f_lo * f_hi > 0:
        return spec.d_min if abs(f_lo) < abs(f_hi) else spec.d_max
    return brentq(lambda d: unclamped_voltage(spec, d) - v, spec.d_min, spec.d_max,
                  xtol=1e-15, rtol=1e-15)
