"""Benchmark matrix: every (algorithm, scenario, converter) cell run once.

Cells run in a process pool whose width comes from the config, then the
``MPPTBENCH_THREADS`` environment variable, then the CPU count. Results are
merged in (algorithm, scenario, converter) order whatever the completion order.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor

from . import metrics, sim
from .config import BenchConfig, Common, resolve_scenario
from .converter import ConverterSpec
from .costing import FomInputs, cost, count_algorithm, fom
from .errors import MpptBenchError, UsageError

BENCH_COLUMNS = ("algorithm", "scenario", "converter", "sensing", "eta_pct", "t_track_s",
                 "osc_pct", "x_comp", "fom", "error")
THREADS_ENV = "MPPTBENCH_THREADS"


def pool_width(requested=None, n_cells=None):
    width = requested
    if width is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                width = int(env)
            except ValueError:
                raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
            if width < 1:
                raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    if width is None:
        width = os.cpu_count() or 1
    return max(1, min(width, n_cells or width))


def worst_tracking_time(log, report):
    """Slowest settling over lit events (startup included); None if any never settles."""
    worst = 0.0
    for ev, dur in report.tracking_times:
        k = min(int(log.t.searchsorted(ev - 1e-12)), len(log) - 1)
        if log.p_max[k] < metrics.DARK_W:
            continue
        if dur is None:
            return None
        worst = max(worst, dur)
    return worst


def run_cell(algorithm: str, scenario: str, spec: ConverterSpec, common: Common) -> dict:
    row = dict.fromkeys(BENCH_COLUMNS, "")
    row.update(algorithm=algorithm, scenario=scenario, converter=spec.topology, sensing=common.sim.sensing)
    x = cost(count_algorithm(algorithm, common.cost), common.cost)
    row["x_comp"] = x
    try:
        wl = resolve_scenario(scenario, common.cell, common.trace_resample_dt)
        log = sim.run(wl.array, wl.profiles, spec, algorithm, common.sim, common.tunables)
        rep = metrics.report(log, wl.profiles.events())
    except MpptBenchError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row["eta_pct"] = rep.eta_mppt
    t = worst_tracking_time(log, rep)
    row["t_track_s"] = "" if t is None else t
    row["osc_pct"] = "" if rep.ss_oscillation is None else rep.ss_oscillation
    if t and rep.ss_oscillation is not None and rep.eta_mppt > 0:
        row["fom"] = fom(FomInputs(min(rep.eta_mppt, 100.0), t, x, rep.ss_oscillation))
    return row


def _cell(args):
    return run_cell(*args)


def cells(cfg: BenchConfig):
    return [(a, s, c, cfg.common)
            for a in sorted(cfg.algorithms)
            for s in sorted(cfg.scenarios)
            for c in sorted(cfg.converters, key=lambda c: c.topology)]


def run_bench(cfg: BenchConfig, workers=None):
    """Rows of the long-form result table, one per cell, in deterministic order."""
    cfg.validate_scenarios()
    jobs = cells(cfg)
    width = pool_width(workers if workers is not None else cfg.workers, len(jobs))
    if width == 1:
        return [_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=width) as pool:
        return list(pool.map(_cell, jobs))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in BENCH_COLUMNS])
    return buf.getvalue()


def rows_to_json(rows):
    clean = [{c: (None if r[c] == "" else r[c]) for c in BENCH_COLUMNS} for r in rows]
    return json.dumps({"columns": list(BENCH_COLUMNS), "rows": clean}, sort_keys=True, indent=1)
