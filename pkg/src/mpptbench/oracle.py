"""Brute-force global MPP oracle: dense sweep plus golden-section polish."""

from __future__ import annotations

import math

import numpy as np

from .device import OperatingPoint

SWEEP_POINTS = 2001
V_TOL = 1e-6

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, a, b, tol=V_TOL):
    """Maximise ``f`` on [a, b] assuming it is unimodal there; returns (x, f(x))."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def mpp_oracle(curve, v_max, n_points=SWEEP_POINTS, tol=V_TOL):
    """Global maximiser of P(V) = V * curve(V) on [0, v_max].

    ``curve`` maps an array of voltages to an array of currents. The sweep
    picks the best sample; golden section then refines inside the two
    neighbouring cells. The result is never worse than the best sample.
    """
    v = np.linspace(0.0, float(v_max), n_points)
    p = v * np.asarray(curve(v), dtype=float)
    k = int(np.argmax(p))
    best = OperatingPoint(float(v[k]), float(p[k] / v[k]) if v[k] > 0 else float(curve(v[:1])[0]), float(p[k]))
    if best.power <= 0.0:
        return OperatingPoint(0.0, float(curve(v[:1])[0]), 0.0)
    lo, hi = v[max(k - 1, 0)], v[min(k + 1, n_points - 1)]

    def power(x):
        return x * float(curve(np.array([x]))[0])

    x, px = golden_max(power, float(lo), float(hi), tol)
    if px >= best.power:
        return OperatingPoint(x, px / x, px)
    return best
