"""MPPT controllers behind one stepwise contract.

Each controller receives one :class:`Measurement` per period and returns the
next duty command together with the operations it executed on that path.
Duty moves are expressed through the converter's direction sign, so the same
code drives maps where raising duty lowers V_pv (boost family) or raises it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import UnknownAlgorithm, UsageError

ALGORITHMS = ("po", "adaptive_gd", "adaptive_gd_init", "ic", "hc")


class Mode(str, Enum):
    INITIALIZING = "Initializing"
    TRACKING = "Tracking"
    FROZEN = "Frozen"


@dataclass(frozen=True)
class Measurement:
    v: float
    i: float
    t: float


@dataclass(frozen=True)
class MpptTunables:
    beta: float = 0.004
    alpha_ss: float = 2.0 ** -7  # a power of two makes the threshold a shift
    d_init: float | None = None  # None: duty putting V_pv at 0.95 * rated V_oc
    d_step_fixed: float = 0.01
    d_step_min: float = 1e-4
    d_step_max: float = 0.05
    init_scan_points: int = 16
    init_dwell: int = 3
    eps_v: float = 1e-6
    eps_ic: float = 0.01

    def __post_init__(self):
        if not self.beta > 0:
            raise UsageError("beta must be > 0")
        if not 0 < self.alpha_ss <= 0.1:
            raise UsageError("alpha_ss must lie in (0, 0.1]")
        if not 0 < self.d_step_min <= self.d_step_max < 1:
            raise UsageError("need 0 < d_step_min <= d_step_max < 1")
        if not 0 < self.d_step_fixed < 1:
            raise UsageError("d_step_fixed must lie in (0, 1)")
        if self.init_scan_points < 8:
            raise UsageError("init_scan_points must be >= 8")
        if self.init_dwell < 1:
            raise UsageError("init_dwell must be >= 1")


@dataclass(frozen=True)
class ControlContext:
    """What a controller knows about its plant, fixed at design time.

    ``direction`` is the sign of dV_pv/dD. ``v_mp_rated``/``p_rated`` come from
    the unshaded array at STC and normalise the gradient step.
    ``dv_dd`` is |dV_pv/dD| at the rated MPP, used to estimate voltage moves
    when only load-side quantities are sensed.
    """

    d_min: float
    d_max: float
    direction: int
    v_mp_rated: float
    p_rated: float
    dv_dd: float = 1.0
    load_side: bool = False


@dataclass
class MpptState:
    d: float
    p_prev: float = 0.0
    v_prev: float = 0.0
    i_prev: float = 0.0
    d_prev: float = 0.0
    dp_prev: float = 0.0
    mode: Mode = Mode.TRACKING
    best_d: float = 0.0
    best_p: float = -math.inf
    scan_index: int = 0
    dwell: int = 0
    primed: bool = False  # a previous measurement exists
    probed: bool = False  # last move was a minimum probe, not a gradient step
    last_dd: float = 0.0  # signed duty move of the previous step
    p_freeze: float = 0.0


@dataclass(frozen=True)
class ControllerStep:
    d_next: float
    op_counts: dict


class _Ops(dict):
    """Tally of executed operations for one iteration.

    Convention: every ``if`` on a comparison is one ``branch`` (comparator and
    multiplexer together); a second comparison folded into the same condition
    adds a ``gt`` and a ``bitand_or``; dispatch on the controller's state
    register is one ``branch``; each persistent register write is one ``ram``;
    multiplication by a power-of-two constant is a ``shift``; sign and
    magnitude handling is free.
    """

    def __call__(self, kind, n=1):
        self[kind] = self.get(kind, 0) + n


def _is_pow2(x):
    m, _ = math.frexp(x)
    return m == 0.5


class Controller:
    key = ""

    def __init__(self, ctx: ControlContext, tun: MpptTunables = MpptTunables(), d_init=None):
        self.ctx = ctx
        self.tun = tun
        d0 = tun.d_init if d_init is None else d_init
        if d0 is None:
            d0 = 0.5 * (ctx.d_min + ctx.d_max)
        self.state = MpptState(d=min(max(d0, ctx.d_min), ctx.d_max))

    @property
    def mode(self):
        return self.state.mode

    def _saturate(self, d, ops):
        ops("branch", 2)
        return min(max(d, self.ctx.d_min), self.ctx.d_max)

    def _toward_lower_v(self, step):
        return -self.ctx.direction * step

    def _measure(self, m, ops):
        ops("mul")
        return m.v * m.i

    def _commit(self, d_next, ops):
        s = self.state
        s.last_dd = d_next - s.d
        s.d_prev = s.d
        s.d = d_next
        return ControllerStep(d_next, dict(ops))

    def _first(self, ops, n_regs):
        """First sample: nothing to compare with, so step towards lower V."""
        self.state.primed = True
        ops("ram", n_regs)
        step = self.tun.d_step_fixed
        ops("add")
        return self._commit(self._saturate(self.state.d + self._toward_lower_v(step), ops), ops)

    def step(self, m: Measurement) -> ControllerStep:
        raise NotImplementedError


class PerturbObserve(Controller):
    """Conventional fixed-step P&O on the signs of dP and dV."""

    key = "po"

    def step(self, m):
        s, ops = self.state, _Ops()
        ops("branch")
        if not s.primed:
            s.p_prev, s.v_prev = self._measure(m, ops), m.v
            return self._first(ops, 2)
        p = self._measure(m, ops)
        dp = p - s.p_prev
        dv = m.v - s.v_prev
        ops("sub", 2)
        # Voltage direction of the last move; a clamped or unsensed voltage
        # falls back to the commanded duty direction.
        ops("branch")
        if dv != 0:
            up = dv > 0
        else:
            up = (s.last_dd * self.ctx.direction) > 0
        ops("gt")
        ops("branch")
        if not dp > 0:
            up = not up
        ops("bitand_or")
        step = self.tun.d_step_fixed * (self.ctx.direction if up else -self.ctx.direction)
        ops("add")
        d = self._saturate(s.d + step, ops)
        s.p_prev, s.v_prev = p, m.v
        ops("ram", 2)
        return self._commit(d, ops)


class HillClimb(Controller):
    """Fixed-step hill climbing directly on duty."""

    key = "hc"

    def step(self, m):
        s, ops = self.state, _Ops()
        ops("branch")
        if not s.primed:
            s.p_prev = self._measure(m, ops)
            return self._first(ops, 1)
        p = self._measure(m, ops)
        dp = p - s.p_prev
        ops("sub")
        sign = math.copysign(1.0, s.last_dd) if s.last_dd != 0 else -self.ctx.direction
        ops("branch")
        if not dp > 0:
            sign = -sign
        ops("add")
        d = self._saturate(s.d + sign * self.tun.d_step_fixed, ops)
        s.p_prev = p
        ops("ram")
        return self._commit(d, ops)


class IncrementalConductance(Controller):
    """Fixed-step incremental conductance: dI/dV against -I/V."""

    key = "ic"

    def step(self, m):
        s, ops = self.state, _Ops()
        c = self.ctx.direction
        step = self.tun.d_step_fixed
        ops("branch")
        if not s.primed:
            s.v_prev, s.i_prev = m.v, m.i
            return self._first(ops, 2)
        dv = m.v - s.v_prev
        di = m.i - s.i_prev
        ops("sub", 2)
        ops("branch")
        if dv == 0:
            ops("branch")
            if di == 0:
                move = 0.0
            else:
                ops("branch")
                move = c * step if di > 0 else -c * step
        else:
            ops("branch")
            if m.v == 0:
                move = c * step
            else:
                g = m.i / m.v
                x = di / dv + g
                ops("div", 2)
                ops("add")
                tol = self.tun.eps_ic * g
                ops("shift" if _is_pow2(self.tun.eps_ic) else "mul")
                ops("branch")
                if abs(x) < tol:
                    move = 0.0
                else:
                    ops("branch")
                    move = c * step if x > 0 else -c * step
        ops("add")
        d = self._saturate(s.d + move, ops)
        s.v_prev, s.i_prev = m.v, m.i
        ops("ram", 2)
        return self._commit(d, ops)


class AdaptiveGradient(Controller):
    """Adaptive-step gradient P&O with steady-state freeze.

    The step is proportional to the estimated dP/dV, normalised by the rated
    P/V ratio, and clamped to [d_step_min, d_step_max]. The duty is held
    (Frozen) once consecutive power changes differ by less than alpha_ss * P
    while the relative slope is below alpha_ss as well; it wakes as soon as
    that difference grows or P drifts from its frozen value by the same
    fraction. With ``init_scan`` a coarse duty scan picks the starting duty.
    """

    key = "adaptive_gd"

    def __init__(self, ctx, tun=MpptTunables(), d_init=None, init_scan=False):
        super().__init__(ctx, tun, d_init)
        self.gain = tun.beta * ctx.v_mp_rated / ctx.p_rated
        if ctx.load_side:
            # Only the rail is sensed, so dV is direction * dv_dd * dD. Folding
            # the constant into the gains lets dD stand in for dV directly.
            self._k_step = self.gain / ctx.dv_dd
            self._k_slope = ctx.v_mp_rated / ctx.dv_dd
            self._eps = tun.eps_v / ctx.dv_dd
        else:
            self._k_step = ctx.direction * self.gain
            self._k_slope = ctx.v_mp_rated
            self._eps = tun.eps_v
        self._alpha_op = "shift" if _is_pow2(tun.alpha_ss) else "mul"
        if init_scan:
            self.key = "adaptive_gd_init"
            self.state.mode = Mode.INITIALIZING
            self.state.d = self._grid(0)

    def _grid(self, k):
        n = self.tun.init_scan_points
        return self.ctx.d_min + (self.ctx.d_max - self.ctx.d_min) * k / (n - 1)

    def _scan(self, m, ops):
        s = self.state
        p = self._measure(m, ops)
        s.dwell += 1
        ops("add")
        ops("branch")
        if s.dwell < self.tun.init_dwell:
            return self._commit(s.d, ops)
        s.dwell = 0
        ops("branch")
        if p > s.best_p:  # ties keep the first point seen
            s.best_p, s.best_d = p, s.d
            ops("ram", 2)
        s.scan_index += 1
        ops("add")
        ops("branch")
        if s.scan_index >= self.tun.init_scan_points:
            s.mode = Mode.TRACKING
            s.primed = False
            return self._commit(s.best_d, ops)
        ops("mul")
        ops("add")
        return self._commit(self._grid(s.scan_index), ops)

    def _probe(self, lower_v, ops):
        s = self.state
        if lower_v or not s.last_dd:
            step = self._toward_lower_v(self.tun.d_step_min)
        else:
            step = math.copysign(self.tun.d_step_min, s.last_dd)
        ops("add")
        s.probed = True
        return self._saturate(s.d + step, ops)

    def step(self, m):
        s, ops, tun = self.state, _Ops(), self.tun
        ops("branch")  # dispatch on the state register
        if s.mode is Mode.INITIALIZING:
            return self._scan(m, ops)
        p = self._measure(m, ops)
        if not s.primed:
            s.primed = True
            s.p_prev, s.v_prev, s.dp_prev = p, m.v, 0.0
            ops("ram", 3)
            return self._commit(self._probe(True, ops), ops)

        dp = p - s.p_prev
        ops("sub")
        dv = (s.d - s.d_prev) if self.ctx.load_side else (m.v - s.v_prev)
        ops("sub")
        tol = tun.alpha_ss * p
        ops(self._alpha_op)

        if s.mode is Mode.FROZEN:
            # Still awake: leave as soon as the power moves.
            ops("sub", 2)
            ops("branch")
            ops("gt")
            ops("bitand_or")
            if abs(dp - s.dp_prev) < tol and abs(p - s.p_freeze) < tol:
                s.p_prev, s.v_prev, s.dp_prev = p, m.v, dp
                ops("ram", 3)
                return self._commit(s.d, ops)
            s.mode = Mode.TRACKING
            s.probed = True

        ops("branch")
        if not p > 0:
            # Zero power in light means V_pv >= V_oc: only lower V can help.
            d = self._probe(True, ops)
        else:
            ops("branch")
            if abs(dv) <= self._eps:
                d = self._probe(False, ops)
            else:
                g = dp / dv
                ops("div")
                step = self._k_step * g
                ops("mul")
                # Steady-state test, skipped right after a probe (a forced
                # minimum step says nothing about the distance to the MPP).
                # The relative-slope guard keeps a steady climb along a flat
                # or linear stretch from passing for the optimum.
                ops("branch")
                if not s.probed:
                    ops("sub")
                    ops("mul")
                    ops("branch")
                    ops("gt")
                    ops("bitand_or")
                    if abs(dp - s.dp_prev) < tol and abs(g) * self._k_slope < tol:
                        s.mode = Mode.FROZEN
                        s.p_freeze = p
                        s.p_prev, s.v_prev, s.dp_prev = p, m.v, dp
                        ops("ram", 4)
                        return self._commit(s.d, ops)
                s.probed = False
                mag = abs(step)
                ops("branch", 2)
                if mag > tun.d_step_max:
                    step = math.copysign(tun.d_step_max, step)
                elif mag < tun.d_step_min:
                    step = math.copysign(tun.d_step_min, step) if step else \
                        math.copysign(tun.d_step_min, s.last_dd or -self.ctx.direction)
                ops("add")
                d = self._saturate(s.d + step, ops)
        s.p_prev, s.v_prev, s.dp_prev = p, m.v, dp
        ops("ram", 3)
        return self._commit(d, ops)


def make_controller(key, ctx: ControlContext, tun: MpptTunables = MpptTunables(), d_init=None):
    if key == "po":
        return PerturbObserve(ctx, tun, d_init)
    if key == "hc":
        return HillClimb(ctx, tun, d_init)
    if key == "ic":
        return IncrementalConductance(ctx, tun, d_init)
    if key == "adaptive_gd":
        return AdaptiveGradient(ctx, tun, d_init)
    if key == "adaptive_gd_init":
        return AdaptiveGradient(ctx, tun, d_init, init_scan=True)
    raise UnknownAlgorithm(f"unknown algorithm {key!r}; choose from {', '.join(ALGORITHMS)}")
