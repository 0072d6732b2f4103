"""Closed-loop quasi-static simulation of array + converter + MPPT controller."""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import converter as conv
from .array import ArrayNode, Device
from .calibration import model_mpp
from .device import STC, OperatingPoint
from .errors import MpptBenchError, NonActuatable, SimulationError, UsageError
from .mppt import ControlContext, Controller, Measurement, MpptTunables, make_controller
from .oracle import mpp_oracle
from .scenarios import ScenarioProfiles

G_QUANTUM = 0.1  # W/m^2
T_QUANTUM = 0.01  # degC
LOG_COLUMNS = ("t_s", "duty", "v_pv_V", "i_pv_A", "p_pv_W", "p_max_W", "mode")


@dataclass(frozen=True)
class SimConfig:
    dt_mppt: float = 2e-6
    duration: float | None = None  # None: the profile length
    sensing: str = "pv"  # pv | load
    record_decimation: int = 1
    adc_bits: int | None = None  # optional measurement quantiser
    adc_v_full_scale: float | None = None
    adc_i_full_scale: float | None = None

    def __post_init__(self):
        if not self.dt_mppt > 0:
            raise UsageError("dt_mppt must be > 0")
        if self.duration is not None and not self.duration >= self.dt_mppt:
            raise UsageError("duration must be >= dt_mppt")
        if self.sensing not in ("pv", "load"):
            raise UsageError("sensing must be 'pv' or 'load'")
        if self.record_decimation < 1:
            raise UsageError("record_decimation must be >= 1")
        if self.adc_bits is not None and self.adc_bits < 1:
            raise UsageError("adc_bits must be >= 1")

    @property
    def seedless(self):
        return True


@functools.lru_cache(maxsize=1 << 16)
def oracle(node: ArrayNode) -> OperatingPoint:
    """Global MPP of a node, memoised on the (hashable) node itself.

    A lone device has a unimodal P-V curve, so the root of its analytic slope
    is the global maximum; composite arrays use the sweep oracle.
    """
    if isinstance(node, Device):
        return model_mpp(node.params, node.env)
    return mpp_oracle(node.current_at, node.v_oc)


def quantize_env(g, t):
    gq = round(round(g / G_QUANTUM) * G_QUANTUM, 1)
    tq = None if t is None else round(round(t / T_QUANTUM) * T_QUANTUM, 2)
    return gq, tq


def stc_node(node: ArrayNode) -> ArrayNode:
    """Same topology with every module at STC (the 'rated' array)."""
    return node.with_environment(STC)


def control_context(node: ArrayNode, spec: conv.ConverterSpec, load_side=False) -> ControlContext:
    rated = oracle(stc_node(node))
    d_mp = conv.duty_for_voltage(spec, rated.voltage)
    return ControlContext(
        d_min=spec.d_min,
        d_max=spec.d_max,
        direction=conv.direction(spec),
        v_mp_rated=rated.voltage,
        p_rated=rated.power,
        dv_dd=abs(conv.voltage_slope(spec, d_mp)),
        load_side=load_side,
    )


def default_d_init(node: ArrayNode, spec: conv.ConverterSpec) -> float:
    return conv.duty_for_voltage(spec, 0.95 * stc_node(node).v_oc)


class _Plant:
    """Array state for one quantised environment, with an exact current memo."""

    __slots__ = ("node", "v_oc", "p_max", "memo", "scalar")

    def __init__(self, node):
        self.node = node
        self.v_oc = node.v_oc
        self.p_max = oracle(node).power
        self.memo = {}
        self.scalar = isinstance(node, Device)

    def current(self, v):
        if self.scalar:
            return self.node.current_at(v)
        i = self.memo.get(v)
        if i is None:
            i = self.memo[v] = self.node.current_at(v)
        return i


@dataclass
class RunLog:
    t: np.ndarray
    duty: np.ndarray
    v_pv: np.ndarray
    i_pv: np.ndarray
    p_pv: np.ndarray
    p_max: np.ndarray
    mode: list
    meta: dict = field(default_factory=dict)
    op_paths: list = field(default_factory=list)  # distinct per-step op profiles seen

    def __len__(self):
        return len(self.t)

    def rows(self):
        for k in range(len(self.t)):
            yield (self.t[k], self.duty[k], self.v_pv[k], self.i_pv[k], self.p_pv[k], self.p_max[k], self.mode[k])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in self.rows():
            w.writerow([repr(float(x)) for x in row[:6]] + [row[6]])
        return buf.getvalue()

    def to_json(self):
        data = {
            "meta": self.meta,
            "columns": list(LOG_COLUMNS),
            "samples": {
                "t_s": self.t.tolist(),
                "duty": self.duty.tolist(),
                "v_pv_V": self.v_pv.tolist(),
                "i_pv_A": self.i_pv.tolist(),
                "p_pv_W": self.p_pv.tolist(),
                "p_max_W": self.p_max.tolist(),
                "mode": list(self.mode),
            },
        }
        return json.dumps(data, sort_keys=True, indent=1)

    def window(self, t0, t1):
        """Boolean mask of samples with t0 <= t <= t1."""
        return (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)


def _adc(x, bits, full_scale):
    if bits is None or not full_scale:
        return x
    q = full_scale / ((1 << bits) - 1)
    return min(max(round(x / q), 0), (1 << bits) - 1) * q


def run(array: ArrayNode, profiles: ScenarioProfiles, spec: conv.ConverterSpec,
        algorithm="adaptive_gd", cfg: SimConfig = SimConfig(),
        tunables: MpptTunables = MpptTunables(), meta=None) -> RunLog:
    """Simulate ``algorithm`` driving ``array`` through ``spec`` under ``profiles``.

    ``algorithm`` is a key of :data:`mppt.ALGORITHMS` or a ready Controller.

    Per controller period: sample the profiles at t = k * dt, quantise the
    environment, impose V_pv from the current duty, solve the array current,
    log the sample and let the controller pick the next duty.
    """
    if not spec.actuatable:
        raise NonActuatable(f"{spec.topology} cannot be regulated by duty cycle")
    duration = profiles.duration if cfg.duration is None else cfg.duration
    if duration > profiles.duration + 1e-12:
        raise UsageError(f"duration {duration} exceeds profile length {profiles.duration}")
    dt = cfg.dt_mppt
    n_steps = int(math.floor(duration / dt + 1e-9))
    load_side = cfg.sensing == "load"
    ctx = control_context(array, spec, load_side)
    d_init = tunables.d_init if tunables.d_init is not None else default_d_init(array, spec)
    if isinstance(algorithm, Controller):
        ctrl, algorithm = algorithm, algorithm.key
        d_init = ctrl.state.d
    else:
        ctrl = make_controller(algorithm, ctx, tunables, d_init)

    irr, temp = profiles.irradiance, profiles.temperature
    plants = {}
    v_out, eff = spec.v_out, spec.efficiency
    lag = 1.0 - math.exp(-dt / spec.tau) if spec.tau > 0 else None
    bits = cfg.adc_bits
    v_fs = cfg.adc_v_full_scale or (v_out if load_side else stc_node(array).v_oc)
    i_fs = cfg.adc_i_full_scale or (stc_node(array).i_sc * 1.05)
    dec = cfg.record_decimation

    cols = [[] for _ in range(6)]
    modes = []
    paths = {}
    v_state = None
    for k in range(n_steps):
        t = round(k * dt, 12)
        try:
            g = irr.sample(t) if irr is not None else 1000.0
            tc = temp.sample(t) if temp is not None else None
            key = quantize_env(g, tc)
            plant = plants.get(key)
            if plant is None:
                plant = plants[key] = _Plant(array.scaled(key[0] / 1000.0, key[1]))
            d = ctrl.state.d
            v = min(max(conv.unclamped_voltage(spec, d), 0.0), plant.v_oc)
            if lag is not None:
                v_state = v if v_state is None else v_state + lag * (v - v_state)
                v = min(v_state, plant.v_oc)
            i = plant.current(v)
            p = v * i
            if load_side:
                mv, mi = v_out, p * eff / v_out
            else:
                mv, mi = v, i
            if bits is not None:
                mv, mi = _adc(mv, bits, v_fs), _adc(mi, bits, i_fs)
            out = ctrl.step(Measurement(mv, mi, t))
        except MpptBenchError as exc:
            raise SimulationError(k, exc) from exc
        except (ArithmeticError, ValueError) as exc:
            raise SimulationError(k, exc) from exc
        sig = tuple(sorted(out.op_counts.items()))
        paths[sig] = paths.get(sig, 0) + 1
        if k % dec == 0:
            for col, x in zip(cols, (t, d, v, i, p, plant.p_max)):
                col.append(x)
            modes.append(ctrl.state.mode.value)

    info = {
        "algorithm": algorithm,
        "scenario": profiles.name,
        "converter": spec.topology,
        "sensing": cfg.sensing,
        "dt_mppt": dt,
        "dt_record": dt * dec,
        "n_steps": n_steps,
        "d_init": d_init,
        "p_rated_W": ctx.p_rated,
        "v_mp_rated_V": ctx.v_mp_rated,
    }
    if meta:
        info.update(meta)
    return RunLog(*(np.array(c, dtype=float) for c in cols), modes, info,
                  [dict(sig) for sig in sorted(paths)])


def oracle_power_series(array: ArrayNode, profiles: ScenarioProfiles, cfg: SimConfig = SimConfig()):
    """(t, p_max) arrays on the controller grid, using the memoised oracle."""
    duration = profiles.duration if cfg.duration is None else cfg.duration
    n = int(math.floor(duration / cfg.dt_mppt + 1e-9))
    ts = np.array([round(k * cfg.dt_mppt, 12) for k in range(n)])
    cache = {}
    out = np.empty(n)
    for k, t in enumerate(ts):
        g = profiles.irradiance.sample(t) if profiles.irradiance is not None else 1000.0
        tc = profiles.temperature.sample(t) if profiles.temperature is not None else None
        key = quantize_env(g, tc)
        if key not in cache:
            cache[key] = oracle(array.scaled(key[0] / 1000.0, key[1])).power
        out[k] = cache[key]
    return ts, out
