"""Fit single-diode parameters to datasheet terminal values.

Deterministic: a fixed grid over (ideality, R_s, R_sh) followed by a bounded
least-squares polish from the best grid node. I_s always follows from the
open-circuit condition at STC, so it is not a free parameter.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, least_squares

from .device import (
    ALPHA_MAX,
    ALPHA_MIN,
    STC,
    CellParams,
    Environment,
    OperatingPoint,
    analytic_slope,
    open_circuit_voltage,
    T_STC,
    thermal_voltage,
    short_circuit_current,
    solve_current,
)
from .errors import CalibrationFailure, UsageError

FIT_TOL = 0.01
_IDEALITY_PULL = 1e-4

# Terminal data of the reference cell at STC (SI units).
REFERENCE_DATASHEET = {
    "v_mp": 0.65035,
    "i_mp": 0.1435,
    "v_oc": 0.7214,
    "i_sc": 0.1574,
    "p_max": 0.0933,
}
REFERENCE_AREA_CM2 = 3.915
SCALED_AREA_CM2 = 10.49

# Temperature coefficients are not part of the datasheet; these are typical
# crystalline-silicon heterojunction values expressed relative to I_sc / V_oc.
REL_K_I = 4.0e-4  # 1/degC
REL_K_V = -2.5e-3  # 1/degC


@dataclass(frozen=True)
class Terminals:
    v_mp: float
    i_mp: float
    v_oc: float
    i_sc: float
    p_max: float

    def as_dict(self):
        return {"v_mp": self.v_mp, "i_mp": self.i_mp, "v_oc": self.v_oc,
                "i_sc": self.i_sc, "p_max": self.p_max}


def model_mpp(p: CellParams, env: Environment = STC) -> OperatingPoint:
    """Exact MPP of one device: root of dP/dV on (0, V_oc).

    A single device has a unimodal P-V curve, so the root is unique.
    """
    v_oc = open_circuit_voltage(p, env)
    if v_oc <= 0:
        return OperatingPoint(0.0, 0.0, 0.0)

    def slope(v):
        return analytic_slope(p, env, OperatingPoint.at(v, solve_current(p, env, v)))

    v = brentq(slope, 1e-9 * v_oc, v_oc, xtol=1e-15, rtol=1e-15)
    return OperatingPoint.at(v, solve_current(p, env, v))


def model_terminals(p: CellParams, env: Environment = STC) -> Terminals:
    mpp = model_mpp(p, env)
    return Terminals(mpp.voltage, mpp.current, open_circuit_voltage(p, env),
                     short_circuit_current(p, env), mpp.power)


def _params(ds, alpha, r_s, r_sh, k_i, k_v, n):
    """CellParams whose modelled V_oc and I_sc equal the datasheet exactly.

    The reference values fed to the photocurrent/saturation-current laws are
    solved for, since a finite shunt pulls the terminal values below them.
    """
    nvt = alpha * n * thermal_voltage(T_STC)
    i_sc, v_oc = ds["i_sc"], ds["v_oc"]
    isc_ref = i_sc * (1.0 + r_s / r_sh)
    for _ in range(50):
        # V_oc condition fixes I_s for a given photocurrent; I_sc condition
        # then fixes the photocurrent. I_s is tiny, so this settles at once.
        i_s = (isc_ref - v_oc / r_sh) / math.expm1(v_oc / nvt)
        nxt = i_sc + i_s * math.expm1(i_sc * r_s / nvt) + i_sc * r_s / r_sh
        if abs(nxt - isc_ref) < 1e-16:
            break
        isc_ref = nxt
    if not i_s > 0:
        raise CalibrationFailure("shunt too small for the open-circuit voltage")
    voc_ref = nvt * math.log1p(isc_ref / i_s)
    return CellParams(isc_stc=isc_ref, voc_stc=voc_ref, i_s=i_s,
                      alpha_ideality=alpha, r_s=r_s, r_sh=r_sh, k_i=k_i, k_v=k_v,
                      n_series_cells=n)


def _residuals(p, ds):
    t = model_terminals(p)
    return np.array([
        t.v_oc / ds["v_oc"] - 1.0,
        t.i_sc / ds["i_sc"] - 1.0,
        t.v_mp / ds["v_mp"] - 1.0,
        t.i_mp / ds["i_mp"] - 1.0,
    ])


def calibrate(datasheet, k_i=None, k_v=None, n_series_cells=1) -> CellParams:
    """Return CellParams reproducing the datasheet's V_oc, I_sc, V_mp, I_mp within 1%.

    ``datasheet`` needs keys v_mp, i_mp, v_oc, i_sc (p_max is checked, not fitted).
    Raises CalibrationFailure carrying the best residual if no fit gets there.
    """
    ds = {k: float(datasheet[k]) for k in ("v_mp", "i_mp", "v_oc", "i_sc")}
    if not 0 < ds["v_mp"] < ds["v_oc"] or not 0 < ds["i_mp"] < ds["i_sc"]:
        raise UsageError("datasheet needs 0 < v_mp < v_oc and 0 < i_mp < i_sc")
    k_i = REL_K_I * ds["i_sc"] if k_i is None else float(k_i)
    k_v = REL_K_V * ds["v_oc"] if k_v is None else float(k_v)
    r_char = ds["v_oc"] / ds["i_sc"]

    def build(x):
        alpha, rs_rel, log_rsh_rel = (float(v) for v in x)
        return _params(ds, alpha, rs_rel * r_char, r_char * 10.0 ** log_rsh_rel,
                       k_i, k_v, n_series_cells)

    def cost(x):
        try:
            return _residuals(build(x), ds)
        except (ArithmeticError, ValueError, CalibrationFailure):
            return np.full(4, 1e3)

    best_x, best_norm = None, math.inf
    grid = itertools.product(np.linspace(ALPHA_MIN, ALPHA_MAX, 16),
                             (0.0, 0.005, 0.01, 0.02, 0.04, 0.08),
                             (1.0, 1.5, 2.0, 2.5, 3.0, 4.0))
    for x in grid:
        r = cost(x)
        norm = float(np.max(np.abs(r)))
        if norm < best_norm:
            best_x, best_norm = np.array(x, dtype=float), norm

    # V_mp and I_mp leave a one-parameter family of exact fits; the weak pull
    # towards unit ideality selects the most physical member.
    def polish(x):
        return np.append(cost(x)[2:], _IDEALITY_PULL * (x[0] - 1.0))

    fit = least_squares(polish, best_x, bounds=([ALPHA_MIN, 0.0, 0.5], [ALPHA_MAX, 0.3, 6.0]),
                        x_scale=[0.1, 0.01, 0.5], xtol=1e-14, ftol=1e-14, gtol=1e-14,
                        method="trf")
    fit_norm = float(np.max(np.abs(cost(fit.x))))
    if fit_norm < best_norm:
        best_x, best_norm = fit.x, fit_norm
    if best_norm > FIT_TOL:
        raise CalibrationFailure(
            f"best fit misses datasheet by {best_norm:.3%}", best_residual=best_norm)
    return build(best_x)


@functools.lru_cache(maxsize=None)
def reference_cell(area_cm2=REFERENCE_AREA_CM2) -> CellParams:
    """Calibrated reference cell; ``area_cm2`` scales it (10.49 cm^2 gives ~250 mW)."""
    return calibrate(reference_datasheet(area_cm2))


def reference_datasheet(area_cm2=REFERENCE_AREA_CM2):
    """Reference datasheet with currents scaled to ``area_cm2``."""
    f = area_cm2 / REFERENCE_AREA_CM2
    ds = dict(REFERENCE_DATASHEET)
    for key in ("i_mp", "i_sc", "p_max"):
        ds[key] *= f
    return ds
