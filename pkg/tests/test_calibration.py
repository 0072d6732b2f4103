import time

import numpy as np
import pytest

from mpptbench import device as dv
from mpptbench.array import Device
from mpptbench.calibration import (SCALED_AREA_CM2, REFERENCE_DATASHEET, calibrate, model_mpp, model_terminals,
                                   reference_cell, reference_datasheet)
from mpptbench.errors import CalibrationFailure, UsageError
from mpptbench.oracle import mpp_oracle


def test_table_iii_fit():
    t0 = time.perf_counter()
    p = calibrate(REFERENCE_DATASHEET)
    assert time.perf_counter() - t0 < 5.0
    node = Device(p)
    op = mpp_oracle(node.current_at, node.v_oc)
    assert op.power == pytest.approx(0.0933, abs=1.0e-3)
    assert op.voltage == pytest.approx(0.65035, abs=6.5e-3)
    assert dv.short_circuit_current(p, dv.STC) == pytest.approx(0.1574, abs=1.5e-3)
    assert dv.open_circuit_voltage(p, dv.STC) == pytest.approx(0.7214, abs=1.8e-3)


def test_fit_within_one_percent_of_each_terminal():
    t = model_terminals(reference_cell())
    for key in ("v_mp", "i_mp", "v_oc", "i_sc"):
        assert getattr(t, key) == pytest.approx(REFERENCE_DATASHEET[key], rel=0.01)


def test_calibration_is_deterministic():
    assert calibrate(REFERENCE_DATASHEET) == calibrate(REFERENCE_DATASHEET)


def test_calibration_fixed_point():
    p1 = calibrate(REFERENCE_DATASHEET)
    p2 = calibrate(model_terminals(p1).as_dict())
    t1, t2 = model_terminals(p1), model_terminals(p2)
    for key in ("v_mp", "i_mp", "v_oc", "i_sc", "p_max"):
        assert getattr(t2, key) == pytest.approx(getattr(t1, key), rel=1e-3)


def test_scaled_device_gives_250_mw():
    p = reference_cell(SCALED_AREA_CM2)
    assert model_mpp(p).power == pytest.approx(0.250, rel=0.03)
    assert reference_datasheet(SCALED_AREA_CM2)["i_sc"] == pytest.approx(0.1574 * 10.49 / 3.915)


def test_model_mpp_agrees_with_sweep_oracle(cell):
    node = Device(cell)
    exact = model_mpp(cell)
    swept = mpp_oracle(node.current_at, node.v_oc)
    assert swept.power == pytest.approx(exact.power, rel=1e-9)
    assert swept.voltage == pytest.approx(exact.voltage, abs=2e-6)


def test_bad_datasheet_rejected():
    with pytest.raises(UsageError):
        calibrate({"v_mp": 0.8, "i_mp": 0.1, "v_oc": 0.7, "i_sc": 0.15})


def test_unreachable_datasheet_reports_residual():
    # A fill factor near 1 is beyond any single-diode fit.
    with pytest.raises(CalibrationFailure) as info:
        calibrate({"v_mp": 0.715, "i_mp": 0.156, "v_oc": 0.72, "i_sc": 0.157})
    assert info.value.best_residual is not None and info.value.best_residual > 0.01


def test_temperature_coefficients_signs(cell):
    assert cell.k_i > 0 and cell.k_v < 0
    assert np.isfinite(cell.i_s)
