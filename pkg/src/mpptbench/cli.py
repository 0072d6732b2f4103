"""``mpptbench`` command line.

Exit codes: 0 success, 1 simulation or numeric failure, 2 usage, config or
parse failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace

from . import __version__, metrics, plotting, sim
from . import scenarios as sc
from .array import tabulate
from .bench import rows_to_csv, rows_to_json, run_bench
from .config import BenchConfig, RunConfig, converter_from, load_bench, load_run, read_yaml, resolve_scenario
from .costing import (AUDIT_TOL, CostModel, audit_table, cost, count_algorithm, path_profiles,
                      published_table_text)
from .errors import ConfigError, MpptBenchError, ParseError
from .mppt import ALGORITHMS
from .sim import oracle


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _slug(text):
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in text)


def cmd_curve(args):
    wl = resolve_scenario(args.scenario)
    table = tabulate(wl.array, args.points)
    gm = oracle(wl.array)
    out = _outdir(args.out)
    stem = os.path.join(out, _slug(wl.label) + "_curve")
    _write(stem + ".csv", table.to_csv())
    n_peaks = plotting.curve_svg(table, stem + ".svg", title=wl.label)
    print(json.dumps({
        "scenario": wl.label,
        "local_maxima": n_peaks,
        "gmpp_voltage_V": gm.voltage,
        "gmpp_power_W": gm.power,
        "files": [stem + ".csv", stem + ".svg"],
    }, sort_keys=True, indent=1))
    return 0


def cmd_mpp(args):
    wl = resolve_scenario(args.scenario)
    node = wl.array
    if args.irradiance is not None or args.temperature is not None:
        node = node.scaled((args.irradiance if args.irradiance is not None else 1000.0) / 1000.0,
                           args.temperature)
    op = oracle(node)
    print(json.dumps({"scenario": wl.label, "voltage_V": op.voltage, "current_A": op.current,
                      "power_W": op.power, "v_oc_V": node.v_oc}, sort_keys=True, indent=1))
    return 0


def _run_config(args):
    cfg = load_run(args.config) if args.config else RunConfig()
    if args.scenario:
        cfg = replace(cfg, scenario=args.scenario)
    if args.algorithm:
        cfg = replace(cfg, algorithm=args.algorithm)
    if args.converter:
        cfg = replace(cfg, converter=converter_from(args.converter))
    sim_changes = {k: v for k, v in (("sensing", args.sensing), ("duration", args.duration),
                                     ("dt_mppt", args.dt), ("record_decimation", args.decimation))
                   if v is not None}
    if sim_changes:
        cfg = replace(cfg, common=replace(cfg.common, sim=replace(cfg.common.sim, **sim_changes)))
    return cfg


def cmd_simulate(args):
    cfg = _run_config(args)
    wl = cfg.workload()
    log = sim.run(wl.array, wl.profiles, cfg.converter, cfg.algorithm, cfg.common.sim,
                  cfg.common.tunables, meta={"scenario": wl.label})
    rep = metrics.report(log, wl.profiles.events())
    out = _outdir(args.out)
    stem = os.path.join(out, _slug(f"{cfg.algorithm}_{wl.label}_{cfg.converter.topology}"))
    _write(stem + "_log.csv", log.to_csv())
    _write(stem + "_log.json", log.to_json())
    _write(stem + "_metrics.json", rep.to_json())
    if not args.no_plot:
        plotting.run_svg(log, stem + ".svg", title=f"{cfg.algorithm} / {wl.label}")
    print(rep.to_json())
    return 0


def cmd_bench(args):
    cfg = load_bench(args.config) if args.config else BenchConfig()
    rows = run_bench(cfg, workers=args.workers)
    out = _outdir(args.out)
    _write(os.path.join(out, "bench.csv"), rows_to_csv(rows))
    _write(os.path.join(out, "bench.json"), rows_to_json(rows))
    if not args.no_plot:
        plotting.heatmap_svg(rows, os.path.join(out, "bench_eta.svg"), "eta_pct", "MPPT efficiency (%)")
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} cells, {failed} failed -> {out}")
    return 0


def _weights(path):
    if not path:
        return CostModel()
    data = read_yaml(path)
    if not isinstance(data, dict):
        raise ConfigError("weights file must be a mapping of op kind to X")
    return CostModel(data.get("cost_weights", data))


def cmd_cost(args):
    model = _weights(args.weights)
    keys = args.algorithms or list(ALGORITHMS)
    out = {}
    for k in keys:
        worst = count_algorithm(k, model)
        entry = {"worst_case_X": cost(worst, model), "worst_case_ops": worst}
        if args.paths:
            entry["paths"] = {name: {"X": cost(p, model), "ops": p} for name, p in path_profiles(k).items()}
        out[k] = entry
    print(json.dumps(out, sort_keys=True, indent=1))
    return 0


def cmd_fom_audit(args):
    if args.csv:
        try:
            with open(args.csv, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(f"cannot read {args.csv}: {exc.strerror or exc}") from exc
    else:
        text = published_table_text()
    report = audit_table(text, args.tol)
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=1)
    if args.out:
        _write(args.out, payload)
    print(payload if not args.out else
          f"{report.n_consistent}/{len(report.rows)} rows consistent; flagged: "
          + (", ".join(r.ref + " / " + r.algorithm for r in report.flagged) or "none"))
    return 0


def cmd_profiles(args):
    if args.action == "list":
        for name in sc.profile_names():
            p = sc.named(name)
            print(f"{name}\t{p.duration:g} s\t{len(p.events())} events")
        return 0
    if not args.name:
        raise ConfigError("profiles dump needs a profile name")
    p = sc.named(args.name)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "t_start_s", "t_end_s", "kind", "start_value", "end_value"])
    for prof in (p.irradiance, p.temperature):
        if prof is None:
            continue
        for row in prof.to_rows():
            w.writerow([prof.quantity, repr(row[0]), repr(row[1]), row[2], repr(row[3]), repr(row[4])])
    if args.out:
        _write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="mpptbench", description="PV MPPT simulation and benchmarking.")
    ap.add_argument("--version", action="version", version=f"mpptbench {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curve", help="tabulate and plot a scenario's I-V and P-V curves")
    p.add_argument("scenario", help="STC, TwoPeaks, ThreePeaks, Moderate, Strong or TCT")
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("mpp", help="global maximum power point of a scenario")
    p.add_argument("scenario")
    p.add_argument("--irradiance", type=float, help="scale every module by G/1000")
    p.add_argument("--temperature", type=float, help="module temperature, degC")
    p.set_defaults(func=cmd_mpp)

    p = sub.add_parser("simulate", help="closed-loop run from a YAML config")
    p.add_argument("config", nargs="?", help="run config (YAML); flags override it")
    p.add_argument("--scenario")
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--converter", help="topology key")
    p.add_argument("--sensing", choices=("pv", "load"))
    p.add_argument("--duration", type=float)
    p.add_argument("--dt", type=float, help="controller period, s")
    p.add_argument("--decimation", type=int, help="log every n-th step")
    p.add_argument("--out", default=".")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="algorithm x scenario x converter matrix")
    p.add_argument("config", nargs="?", help="bench config (YAML)")
    p.add_argument("--workers", type=int, help="pool width (default: config, then MPPTBENCH_THREADS, then CPUs)")
    p.add_argument("--out", default=".")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("cost", help="worst-case per-iteration cost in X")
    p.add_argument("algorithms", nargs="*", metavar="ALGORITHM", help=", ".join(ALGORITHMS))
    p.add_argument("--weights", help="YAML mapping of op kind to X")
    p.add_argument("--paths", action="store_true", help="list every path, not just the worst")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("fom-audit", help="recompute the figure of merit of a comparison table")
    p.add_argument("csv", nargs="?", help="audit CSV (default: the shipped published table)")
    p.add_argument("--tol", type=float, default=AUDIT_TOL)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_fom_audit)

    p = sub.add_parser("profiles", help="built-in irradiance/temperature profiles")
    p.add_argument("action", choices=("list", "dump"))
    p.add_argument("name", nargs="?")
    p.add_argument("--out")
    p.set_defaults(func=cmd_profiles)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MpptBenchError as exc:
        print(f"mpptbench: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mpptbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
