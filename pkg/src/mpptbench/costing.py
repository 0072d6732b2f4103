"""Normalised hardware cost of controller iterations and the figure of merit.

Costs are in X, where 1 X is one 10-bit addition. An algorithm's cost is its
worst-case path through one controller iteration.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Dict, List, Optional

from .errors import ParseError, UnknownAlgorithm, UnknownOpKind, UsageError

DEFAULT_WEIGHTS = {
    "add": 1.0,
    "sub": 1.0,
    "mul": 9.0,
    "div": 35.0,
    "shift": 0.2,
    "bitand_or": 0.1,
    "eq": 0.5,
    "gt": 1.5,
    "branch": 2.0,
    "lut": 2.0,
    "ram": 3.0,
    "exp": 30.0,
    "log": 30.0,
}

AUDIT_TOL = 0.005
AUDIT_COLUMNS = ("ref", "algorithm", "eta_pct", "osc_pct", "power_w", "t_track_s", "x_comp", "fom_published")


@dataclass(frozen=True)
class CostModel:
    weights: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        w = dict(DEFAULT_WEIGHTS)
        for k, v in self.weights.items():
            if k not in DEFAULT_WEIGHTS:
                raise UnknownOpKind(f"unknown op kind {k!r}")
            if not v > 0:
                raise UsageError(f"weight of {k} must be > 0")
            w[k] = float(v)
        if w["add"] != 1.0 or w["sub"] != 1.0:
            raise UsageError("add and sub define the unit and must weigh 1")
        object.__setattr__(self, "weights", w)


def cost(profile, model: CostModel = None) -> float:
    weights = DEFAULT_WEIGHTS if model is None else model.weights
    total = 0.0
    for kind, n in profile.items():
        if kind not in weights:
            raise UnknownOpKind(f"unknown op kind {kind!r}")
        total += n * weights[kind]
    return total


# Per-iteration op counts of every path through each controller, read off
# the branch structure in mppt.py. Keys name the path. The GD threshold
# alpha_ss * P is a shift because the default alpha_ss is a power of two.
PATHS = {
    "po": {
        "first": {"branch": 3, "mul": 1, "add": 1, "ram": 2},
        "track": {"branch": 5, "mul": 1, "sub": 2, "gt": 1, "bitand_or": 1, "add": 1, "ram": 2},
    },
    "hc": {
        "first": {"branch": 3, "mul": 1, "add": 1, "ram": 1},
        "track": {"branch": 4, "mul": 1, "sub": 1, "add": 1, "ram": 1},
    },
    "ic": {
        "first": {"branch": 3, "add": 1, "ram": 2},
        "dv_zero_hold": {"branch": 5, "sub": 2, "add": 1, "ram": 2},
        "dv_zero_move": {"branch": 6, "sub": 2, "add": 1, "ram": 2},
        "v_zero": {"branch": 5, "sub": 2, "add": 1, "ram": 2},
        "conductance_hold": {"branch": 6, "sub": 2, "div": 2, "add": 2, "mul": 1, "ram": 2},
        "conductance_move": {"branch": 7, "sub": 2, "div": 2, "add": 2, "mul": 1, "ram": 2},
    },
    "adaptive_gd": {
        "first": {"branch": 3, "mul": 1, "add": 1, "ram": 3},
        "frozen_hold": {"branch": 2, "mul": 1, "sub": 4, "shift": 1, "gt": 1, "bitand_or": 1,
                        "ram": 3},
        "dark_probe": {"branch": 4, "mul": 1, "sub": 2, "shift": 1, "add": 1, "ram": 3},
        "wake_dark_probe": {"branch": 5, "mul": 1, "sub": 4, "shift": 1, "gt": 1, "bitand_or": 1,
                            "add": 1, "ram": 3},
        "probe": {"branch": 5, "mul": 1, "sub": 2, "shift": 1, "add": 1, "ram": 3},
        "wake_probe": {"branch": 6, "mul": 1, "sub": 4, "shift": 1, "gt": 1, "bitand_or": 1,
                       "add": 1, "ram": 3},
        "gradient_after_probe": {"branch": 8, "mul": 2, "sub": 2, "shift": 1, "div": 1, "add": 1,
                                 "ram": 3},
        "wake_gradient": {"branch": 9, "mul": 2, "sub": 4, "shift": 1, "gt": 1, "bitand_or": 1,
                          "div": 1, "add": 1, "ram": 3},
        "freeze": {"branch": 5, "mul": 3, "sub": 3, "shift": 1, "gt": 1, "bitand_or": 1, "div": 1,
                   "ram": 4},
        "gradient": {"branch": 9, "mul": 3, "sub": 3, "shift": 1, "gt": 1, "bitand_or": 1, "div": 1,
                     "add": 1, "ram": 3},
    },
}
PATHS["adaptive_gd_init"] = {
    **{k: dict(v) for k, v in PATHS["adaptive_gd"].items()},
    "scan_dwell": {"branch": 2, "mul": 1, "add": 1},
    "scan_next": {"branch": 4, "mul": 2, "add": 3},
    "scan_next_best": {"branch": 4, "mul": 2, "add": 3, "ram": 2},
    "scan_done": {"branch": 4, "mul": 1, "add": 2},
    "scan_done_best": {"branch": 4, "mul": 1, "add": 2, "ram": 2},
}


def _worst(paths, model=None):
    return max(paths.values(), key=lambda p: (cost(p, model), sorted(p.items())))


def count_algorithm(key, model: CostModel = None) -> Dict[str, int]:
    """Worst-case per-iteration OpProfile of an algorithm."""
    if key not in PATHS:
        raise UnknownAlgorithm(f"unknown algorithm {key!r}")
    return dict(_worst(PATHS[key], model))


def path_profiles(key) -> Dict[str, Dict[str, int]]:
    if key not in PATHS:
        raise UnknownAlgorithm(f"unknown algorithm {key!r}")
    return {k: dict(v) for k, v in PATHS[key].items()}


@dataclass(frozen=True)
class FomInputs:
    eta: float
    t_track: float
    x_comp: float
    dp_ss: float

    def __post_init__(self):
        if not 0 < self.eta <= 100:
            raise UsageError("eta must lie in (0, 100]")
        if not self.t_track > 0:
            raise UsageError("t_track must be > 0")
        if not self.x_comp > 0:
            raise UsageError("x_comp must be > 0")
        if not self.dp_ss >= 0:
            raise UsageError("dp_ss must be >= 0")


def fom(inp: FomInputs) -> float:
    """eta / (T * X * (1 + dP/100)), in %/(s X)."""
    return inp.eta / (inp.t_track * inp.x_comp * (1.0 + inp.dp_ss / 100.0))


def implied_t_track(eta, x_comp, dp_ss, fom_value):
    return eta / (fom_value * x_comp * (1.0 + dp_ss / 100.0))


_NUM = r"[0-9]+(?:[.,][0-9]+)?(?:[eE][-+]?[0-9]+)?"


def _number(text, column, lineno):
    s = text.strip()
    if not re.fullmatch(_NUM, s):
        raise ParseError(f"line {lineno}: bad {column} value {text!r}")
    return float(s.replace(",", "."))


def _candidates(text, column, lineno):
    """Values a tracking-time cell may stand for: '< a' -> [a], 'a-b' -> [a, b]."""
    s = text.strip()
    if re.fullmatch(_NUM, s):
        return [_number(s, column, lineno)], "value"
    m = re.fullmatch(r"<\s*(" + _NUM + ")", s)
    if m:
        return [_number(m.group(1), column, lineno)], "upper_bound"
    m = re.fullmatch(r"(" + _NUM + r")\s*-\s*(" + _NUM + ")", s)
    if m:
        return [_number(m.group(1), column, lineno), _number(m.group(2), column, lineno)], "range"
    raise ParseError(f"line {lineno}: bad {column} value {text!r}")


@dataclass
class AuditRow:
    ref: str
    algorithm: str
    fom_published: float
    fom_recomputed: float
    t_used: float
    t_kind: str
    rel_error: float
    consistent: bool
    implied_t_track: float


@dataclass
class AuditReport:
    rows: List[AuditRow]
    tolerance: float = AUDIT_TOL

    @property
    def flagged(self):
        return [r for r in self.rows if not r.consistent]

    @property
    def n_consistent(self):
        return sum(r.consistent for r in self.rows)

    def to_dict(self):
        return {
            "tolerance": self.tolerance,
            "n_rows": len(self.rows),
            "n_consistent": self.n_consistent,
            "flagged": [r.ref + " / " + r.algorithm for r in self.flagged],
            "rows": [asdict(r) for r in self.rows],
        }


def parse_table(text) -> List[dict]:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty audit table")
    if tuple(c.strip() for c in rows[0]) != AUDIT_COLUMNS:
        raise ParseError("audit header must be " + ",".join(AUDIT_COLUMNS))
    if len(rows) < 2:
        raise ParseError("audit table has no data rows")
    out = []
    for n, r in enumerate(rows[1:], start=2):
        if len(r) != len(AUDIT_COLUMNS):
            raise ParseError(f"line {n}: expected {len(AUDIT_COLUMNS)} columns, got {len(r)}")
        rec = dict(zip(AUDIT_COLUMNS, r))
        ts, kind = _candidates(rec["t_track_s"], "t_track_s", n)
        out.append({
            "ref": rec["ref"].strip(),
            "algorithm": rec["algorithm"].strip(),
            "eta": _number(rec["eta_pct"], "eta_pct", n),
            "dp_ss": _number(rec["osc_pct"], "osc_pct", n),
            "power": rec["power_w"].strip(),
            "t_candidates": ts,
            "t_kind": kind,
            "x_comp": _number(rec["x_comp"], "x_comp", n),
            "fom_published": _number(rec["fom_published"], "fom_published", n),
        })
    return out


def audit_table(text, tol=AUDIT_TOL) -> AuditReport:
    """Recompute the figure of merit per row and flag relative deviations above ``tol``.

    For a range of tracking times each endpoint is tried and the closest
    match is reported.
    """
    out = []
    for rec in parse_table(text):
        best = None
        for t in rec["t_candidates"]:
            val = fom(FomInputs(rec["eta"], t, rec["x_comp"], rec["dp_ss"]))
            err = abs(val - rec["fom_published"]) / rec["fom_published"]
            if best is None or err < best[2]:
                best = (t, val, err)
        t, val, err = best
        out.append(AuditRow(
            ref=rec["ref"],
            algorithm=rec["algorithm"],
            fom_published=rec["fom_published"],
            fom_recomputed=val,
            t_used=t,
            t_kind=rec["t_kind"],
            rel_error=err,
            consistent=err <= tol,
            implied_t_track=implied_t_track(rec["eta"], rec["x_comp"], rec["dp_ss"], rec["fom_published"]),
        ))
    return AuditReport(out, tol)


def published_table_text():
    """The shipped transcription of the published comparison table."""
    return resources.files("mpptbench").joinpath("data/published_fom.csv").read_text(encoding="utf-8")


def rows_from_inputs(inputs, refs=None):
    """CSV text in the audit schema for FomInputs scored by :func:`fom` itself."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AUDIT_COLUMNS)
    for k, inp in enumerate(inputs):
        ref = refs[k] if refs else f"row{k}"
        w.writerow([ref, ref, repr(inp.eta), repr(inp.dp_ss), "", repr(inp.t_track),
                    repr(inp.x_comp), repr(fom(inp))])
    return buf.getvalue()
