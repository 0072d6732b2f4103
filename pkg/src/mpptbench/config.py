"""YAML run and bench configuration.

A run file looks like::

    scenario: ThreePeaks:profile1   # ARRAY, PROFILE, ARRAY:PROFILE or a trace CSV
    algorithm: adaptive_gd
    converter: boost                # topology key, or a mapping of ConverterSpec fields
    sim: {dt_mppt: 2.0e-6, sensing: pv}
    tunables: {beta: 0.004}
    cell: null                      # optional CellParams mapping (SI units)
    trace_resample_dt: null
    cost_weights: {}

A bench file replaces ``scenario``/``algorithm``/``converter`` with the lists
``scenarios``, ``algorithms`` and ``converters`` and may set ``workers``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

import yaml

from . import scenarios as sc
from .array import SCENARIOS, ArrayNode, build_scenario
from .converter import ConverterSpec
from .costing import CostModel
from .device import CellParams
from .errors import ConfigError, UnknownAlgorithm, UnknownScenario
from .mppt import ALGORITHMS, MpptTunables
from .sim import SimConfig

_COMMON = {"sim", "tunables", "cell", "trace_resample_dt", "cost_weights"}
RUN_KEYS = _COMMON | {"scenario", "algorithm", "converter"}
BENCH_KEYS = _COMMON | {"scenarios", "algorithms", "converters", "workers"}


@dataclass(frozen=True)
class Workload:
    """An array bound to its drive profiles, under a printable label."""

    label: str
    array: ArrayNode
    profiles: sc.ScenarioProfiles


def _array_name(text):
    for name in SCENARIOS:
        if name.lower() == text.lower():
            return name
    return None


def _profiles(text, resample_dt=None):
    if text in sc.profile_names():
        return sc.named(text)
    if text.lower().endswith(".csv") or os.path.isfile(text):
        stem = os.path.splitext(os.path.basename(text))[0]
        return sc.ScenarioProfiles(stem, irradiance=sc.load_trace(text, resample_dt))
    raise UnknownScenario(f"unknown profile {text!r}; choose from {', '.join(sc.profile_names())} or a CSV trace")


def resolve_scenario(text, cell: CellParams = None, resample_dt=None) -> Workload:
    """Turn ``ARRAY``, ``PROFILE``, ``ARRAY:PROFILE`` or a trace path into a Workload.

    A bare array runs under the constant 1000 W/m^2 profile; a bare profile or
    trace drives the single STC cell.
    """
    text = str(text).strip()
    if ":" in text and not os.path.exists(text):
        a, p = text.split(":", 1)
        name = _array_name(a)
        if name is None:
            raise UnknownScenario(f"unknown array scenario {a!r}; choose from {', '.join(SCENARIOS)}")
        prof = _profiles(p, resample_dt)
        return Workload(f"{name}:{prof.name}", build_scenario(name, cell), prof)
    name = _array_name(text)
    if name is not None:
        return Workload(name, build_scenario(name, cell), sc.named("constant"))
    if text not in sc.profile_names() and not (text.lower().endswith(".csv") or os.path.isfile(text)):
        raise UnknownScenario(f"unknown scenario {text!r}; arrays: {', '.join(SCENARIOS)}; "
                              f"profiles: {', '.join(sc.profile_names())}; or a CSV trace")
    prof = _profiles(text, resample_dt)
    return Workload(prof.name, build_scenario("STC", cell), prof)


def _mapping(data, what):
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a mapping")
    return data


def _build(cls, data, what):
    data = _mapping(data, what)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {what}: {exc}") from exc


def converter_from(value) -> ConverterSpec:
    if isinstance(value, str):
        return ConverterSpec(value)
    return _build(ConverterSpec, value, "converter")


@dataclass(frozen=True)
class Common:
    sim: SimConfig = SimConfig()
    tunables: MpptTunables = MpptTunables()
    cell: Optional[CellParams] = None
    trace_resample_dt: Optional[float] = None
    cost: CostModel = field(default_factory=CostModel)


def _common(data) -> Common:
    cell = data.get("cell")
    try:
        cell = None if cell is None else CellParams.from_dict(_mapping(cell, "cell"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad cell: {exc}") from exc
    return Common(
        sim=_build(SimConfig, data.get("sim"), "sim"),
        tunables=_build(MpptTunables, data.get("tunables"), "tunables"),
        cell=cell,
        trace_resample_dt=data.get("trace_resample_dt"),
        cost=CostModel(_mapping(data.get("cost_weights"), "cost_weights")),
    )


def _check_keys(data, allowed, what):
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown {what} config keys: {unknown}")


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "profile1"
    algorithm: str = "adaptive_gd"
    converter: ConverterSpec = ConverterSpec()
    common: Common = Common()

    def workload(self):
        return resolve_scenario(self.scenario, self.common.cell, self.common.trace_resample_dt)

    @classmethod
    def from_mapping(cls, data):
        data = _mapping(data, "run config")
        _check_keys(data, RUN_KEYS, "run")
        algo = data.get("algorithm", "adaptive_gd")
        if algo not in ALGORITHMS:
            raise UnknownAlgorithm(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
        return cls(
            scenario=str(data.get("scenario", "profile1")),
            algorithm=algo,
            converter=converter_from(data.get("converter", "interleaved_boost_2ph")),
            common=_common(data),
        )


@dataclass(frozen=True)
class BenchConfig:
    """Algorithm x scenario x converter matrix; every cell runs once."""

    algorithms: Tuple[str, ...] = ("po", "adaptive_gd")
    scenarios: Tuple[str, ...] = ("profile1",)
    converters: Tuple[ConverterSpec, ...] = (ConverterSpec(),)
    common: Common = Common()
    workers: Optional[int] = None

    def __post_init__(self):
        for name, seq in (("algorithms", self.algorithms), ("scenarios", self.scenarios),
                          ("converters", self.converters)):
            if not seq:
                raise ConfigError(f"bench {name} must be a nonempty list")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise UnknownAlgorithm(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")

    @classmethod
    def from_mapping(cls, data):
        data = _mapping(data, "bench config")
        _check_keys(data, BENCH_KEYS, "bench")

        def _list(key, default):
            v = data.get(key, default)
            if isinstance(v, (str, dict)):
                v = [v]
            if not isinstance(v, (list, tuple)):
                raise ConfigError(f"{key} must be a list")
            return tuple(v)

        workers = data.get("workers")
        if workers is not None and (not isinstance(workers, int) or workers < 1):
            raise ConfigError("workers must be a positive integer")
        return cls(
            algorithms=tuple(str(a) for a in _list("algorithms", cls.algorithms)),
            scenarios=tuple(str(s) for s in _list("scenarios", cls.scenarios)),
            converters=tuple(converter_from(c) for c in _list("converters", ["interleaved_boost_2ph"])),
            common=_common(data),
            workers=workers,
        )

    def validate_scenarios(self):
        for s in self.scenarios:
            resolve_scenario(s, self.common.cell, self.common.trace_resample_dt)


def read_yaml(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return {} if data is None else data


def load_run(path) -> RunConfig:
    return RunConfig.from_mapping(read_yaml(path))


def load_bench(path) -> BenchConfig:
    return BenchConfig.from_mapping(read_yaml(path))
