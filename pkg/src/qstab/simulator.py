"""Closed-loop hybrid simulation of the quantized and ternary loops.

Between switches the input is constant and the smooth flow is advanced by the
compiled RK4 kernel; guard crossings are localized by bisection and handed to
the automaton in ``quantizer``.  Runtime monitors are evaluated afterwards on
every stored sample, vectorized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .lyapunov import classify, w_from_parts, wdot
from .plants import PlantModel
from .quantizer import (
    QuantizerConfig,
    QuantizerRangeError,
    hysteresis_init,
    hysteresis_step,
    krasowskii_mask,
    node_interval,
    ternary_init,
    ternary_interval,
    ternary_step,
)
from .synthesis import SynthesisResult

CHUNK = 1 << 16
MONITOR_TOL = 0.05  # relative slack on the quantitative decrease margins
SIGMA_TOL = 1e-3
RATE_WINDOW = 0.25  # final fraction of the horizon used as the limsup proxy


class HypothesisViolation(ValueError):
    """Initial condition outside the operating set ``W <= c^2+d^2+1``."""


class SimulationAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    old_value: float
    new_value: float
    trigger: str


@dataclass(frozen=True)
class Guard:
    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False
    scale: float = 1.0


@dataclass(frozen=True)
class MonitorResult:
    name: str
    checked: int
    failed: int
    worst: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.failed == 0


@dataclass
class Trajectory:
    kind: str
    t: np.ndarray
    x: np.ndarray
    zeta: np.ndarray
    u: np.ndarray
    W: np.ndarray
    events: list
    mu: np.ndarray
    horizon: float
    step: float
    t_tol: float
    bits_per_switch: int
    entered_sigma_at: float | None = None
    rav_final: float = 0.0
    rav_series: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    jumps: int = 0
    monitors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.monitors)

    def monitor(self, name: str) -> MonitorResult:
        for m in self.monitors:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def min_dwell(self) -> float:
        times = np.array([e.time for e in self.events])
        return float(np.diff(times).min()) if len(times) > 1 else math.inf

    @property
    def switching_ceased_at(self) -> float | None:
        """Last switch time if the final quarter of the run saw no switching."""
        if not self.events:
            return 0.0
        last = self.events[-1].time
        return last if last < (1 - RATE_WINDOW) * self.horizon else None


# --- controller adapters ------------------------------------------------------


class _HystereticLoop:
    kind = "hysteretic-quantized"

    def __init__(self, cfg: QuantizerConfig):
        self.cfg = cfg
        self.scale = cfg.kbar

    def init(self, zeta):
        return hysteresis_init(self.cfg.kbar * zeta, self.cfg)

    def step(self, state, zeta):
        return hysteresis_step(state, self.cfg.kbar * zeta, self.cfg)

    def interval(self, state):
        return node_interval(state, self.cfg)

    @staticmethod
    def u(state):
        return -state.value

    @staticmethod
    def label(state):
        return state.label


class _TernaryLoop:
    kind = "ternary"
    scale = 1.0

    def __init__(self, eta: float, kbar: float):
        self.eta = eta
        self.kbar = kbar

    def init(self, zeta):
        return ternary_init(zeta, self.eta, self.kbar)

    def step(self, state, zeta):
        return ternary_step(state, zeta, self.kbar)

    @staticmethod
    def interval(state):
        return ternary_interval(state)

    @staticmethod
    def u(state):
        return state.output

    @staticmethod
    def label(state):
        return {0.0: "0"}.get(state.output, "-k" if state.output < 0 else "+k")


# --- integration ----------------------------------------------------------------


def _state_vector(plant: PlantModel, x0, zeta0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(-1)
    if x0.shape[0] != plant.dim_x:
        raise ValueError(f"x0 must have {plant.dim_x} components")
    return np.concatenate([x0, [float(zeta0)]])


def _mu_vector(plant: PlantModel, mu) -> np.ndarray:
    mu = np.atleast_1d(np.asarray(mu, dtype=float)).reshape(-1) if plant.dim_mu else np.zeros(0)
    if mu.shape[0] != plant.dim_mu:
        raise ValueError(f"mu must have {plant.dim_mu} components")
    box = plant.param_box
    if np.any(mu < box[:, 0]) or np.any(mu > box[:, 1]):
        raise ValueError("mu outside the parameter box")
    return mu


def integrate_between_events(plant: PlantModel, guard: Guard | None, x, zeta, mu, u, horizon,
                             step, t0=0.0, n_bisect=20):
    """Advance with constant ``u`` until ``t0 + horizon`` or the first guard exit.

    Returns ``(t, states, crossing_time)``; ``states`` rows are ``(x, zeta)``,
    the first row is the initial point, and ``crossing_time`` is None when no
    guard was reached.  The crossing is localized to ``step * 2**-n_bisect``.
    """
    spec = plant.lyapunov
    guard = guard or Guard(-math.inf, math.inf)
    y = _state_vector(plant, x, zeta)
    mu = _mu_vector(plant, mu)
    coefs, exps, owner = plant.kernel_table()
    ts, ys = [np.array([t0])], [y[None, :]]
    t, t_end = float(t0), float(t0 + horizon)
    while True:
        tb = np.empty(CHUNK)
        yb = np.empty((CHUNK, len(y)))
        cnt, status = _kernel.advance(y, t, t_end, step, mu, float(u), guard.lo, guard.hi,
                                      guard.lo_closed, guard.hi_closed, guard.scale, n_bisect,
                                      spec.c + 1, spec.d + 1, coefs, exps, owner, tb, yb)
        ts.append(tb[:cnt])
        ys.append(yb[:cnt])
        if cnt:
            t, y = float(tb[cnt - 1]), yb[cnt - 1].copy()
        if status == _kernel.LEFT_DOMAIN:
            raise SimulationAborted(f"trajectory left the domain of W at t = {t:.6g}")
        if status == _kernel.GUARD_CROSSED:
            return np.concatenate(ts), np.vstack(ys), t
        if status == _kernel.REACHED_END:
            return np.concatenate(ts), np.vstack(ys), None


def _simulate(plant: PlantModel, loop, x0, zeta0, mu, horizon, step, n_bisect=20, max_events=10**6):
    spec = plant.lyapunov
    y = _state_vector(plant, x0, zeta0)
    mu = _mu_vector(plant, mu)
    W0 = w_from_parts(spec.V(y[None, :-1]), y[-1:], spec.c, spec.d)[0]
    if not W0 <= spec.outer:
        raise HypothesisViolation(f"initial W = {W0:.6g} exceeds c^2+d^2+1 = {spec.outer:.6g}")
    n = plant.dim_x
    coefs, exps, owner = plant.kernel_table()
    try:
        state = loop.init(y[n])
    except QuantizerRangeError as exc:
        raise HypothesisViolation(str(exc)) from exc
    u = loop.u(state)
    ts, ys, us = [np.array([0.0])], [y[None, :]], [np.array([u])]
    events: list[SwitchEvent] = []
    jumps = 0
    t = 0.0
    tb = np.empty(CHUNK)
    yb = np.empty((CHUNK, n + 1))
    while True:
        lo, hi, lc, hc = loop.interval(state)
        cnt, status = _kernel.advance(y, t, float(horizon), step, mu, float(u), lo, hi, lc, hc,
                                      loop.scale, n_bisect, spec.c + 1, spec.d + 1,
                                      coefs, exps, owner, tb, yb)
        seg_u = np.full(cnt, u)
        if cnt:
            t, y = float(tb[cnt - 1]), yb[cnt - 1].copy()
        if status == _kernel.LEFT_DOMAIN:
            raise SimulationAborted(f"trajectory left the domain of W at t = {t:.6g}")
        if status == _kernel.GUARD_CROSSED:
            try:
                new = loop.step(state, y[n])
            except QuantizerRangeError as exc:
                raise SimulationAborted(f"t = {t:.6g}: {exc}") from exc
            jumps += bool(getattr(new, "jumped", False))
            new_u = loop.u(new)
            if new_u == u:
                raise SimulationAborted(f"guard crossed at t = {t:.6g} without a change of input")
            events.append(SwitchEvent(t, u, new_u, f"{loop.label(state)}->{loop.label(new)}"))
            state, u = new, new_u
            seg_u[-1] = u
            if len(events) > max_events:
                raise SimulationAborted("switching count exceeded max_events (Zeno-like behavior)")
        ts.append(tb[:cnt].copy())
        ys.append(yb[:cnt].copy())
        us.append(seg_u)
        if status == _kernel.REACHED_END:
            break
    Y = np.vstack(ys)
    return np.concatenate(ts), Y[:, :n], Y[:, n], np.concatenate(us), events, mu, jumps


# --- rates ----------------------------------------------------------------------


def rate_at(times, event_times, bits: int) -> np.ndarray:
    """``R_av[0, t] = (1 + #switches in (0, t]) * bits / t``; the initial value counts once."""
    times = np.asarray(times, dtype=float)
    counts = 1 + np.searchsorted(np.asarray(event_times, dtype=float), times, side="right")
    return counts * bits / times


def measure_rate(traj: Trajectory, bits_per_switch: int, window: float = RATE_WINDOW, n_grid: int = 200):
    """``(rav_final, rav_series)``; ``rav_final`` is the max of ``R_av[0, t]`` over the final window."""
    T = traj.horizon
    ev = np.array([e.time for e in traj.events])
    grid = np.linspace(T / n_grid, T, n_grid)
    times = np.unique(np.concatenate([grid, ev[ev > 0]]))
    series = np.column_stack([times, rate_at(times, ev, bits_per_switch)])
    t_w = (1 - window) * T
    cand = np.concatenate([[t_w, T], ev[(ev >= t_w) & (ev <= T)]])
    rav_final = float(rate_at(cand, ev, bits_per_switch).max())
    return rav_final, series


# --- monitors ------------------------------------------------------------------


def _result(name, mask, values, bound) -> MonitorResult:
    """Count samples in ``mask`` whose value exceeds ``bound``."""
    vals = values[mask]
    failed = int(np.count_nonzero(~(vals <= bound))) if vals.size else 0
    worst = float(vals.max()) if vals.size else -math.inf
    return MonitorResult(name, int(vals.size), failed, worst, float(bound))


def monitor_proposition1(x, zeta, u, mu, synth: SynthesisResult, plant: PlantModel, tol=MONITOR_TOL):
    """Decrease checks for the quantized loop on samples in S.

    Returns monitors for ``Wdot < 0`` on S, ``Wdot <= -w_bar eta`` on the
    quantized part of S~, and ``Wdot <= -(1/2) d/(d+1) kbar b0 eta^2`` on the
    deadzone part of S~; the two margins are relaxed by ``tol``.
    """
    spec = plant.lyapunov
    tag = classify(x, zeta, synth.eta, spec)
    in_s = np.atleast_1d(tag.in_s)
    tilde = np.atleast_1d(tag.in_stilde)
    wd = np.atleast_1d(wdot(x, zeta, mu, u, plant, spec))
    cfg = synth.quantizer()
    r = np.abs(cfg.kbar * np.atleast_1d(zeta))
    quantized = (r > cfg.deadzone) & (r <= cfg.u0)
    dead = r <= cfg.deadzone
    hat_bound = -synth.bounds.w_bar * synth.eta * (1 - tol)
    dz_bound = -0.5 * spec.d / (spec.d + 1) * synth.kbar * synth.b0 * synth.eta**2 * (1 - tol)
    decrease = _result("wdot_negative_on_S", in_s, wd, 0.0)
    # strict inequality
    decrease = MonitorResult(decrease.name, decrease.checked,
                             int(np.count_nonzero(~(wd[in_s] < 0))), decrease.worst, 0.0)
    return [
        decrease,
        _result("wdot_margin_quantized_Stilde", tilde & quantized, wd, hat_bound),
        _result("wdot_margin_deadzone_Stilde", tilde & dead, wd, dz_bound),
    ]


def monitor_proposition2(x, zeta, u, mu, synth: SynthesisResult, plant: PlantModel, tol=MONITOR_TOL):
    spec = plant.lyapunov
    tag = classify(x, zeta, synth.eta, spec)
    in_s = np.atleast_1d(tag.in_s)
    wd = np.atleast_1d(wdot(x, zeta, mu, u, plant, spec))
    decrease = MonitorResult("wdot_negative_on_S", int(in_s.sum()),
                             int(np.count_nonzero(~(wd[in_s] < 0))),
                             float(wd[in_s].max()) if in_s.any() else -math.inf, 0.0)
    big = in_s & (np.abs(np.atleast_1d(zeta)) >= synth.eta)
    return [decrease,
            _result("wdot_margin_large_zeta", big, wd, -synth.bounds.w_bar * synth.eta * (1 - tol))]


def _common_monitors(traj: Trajectory, sigma: float, rate_bound: float, dwell_bound: float | None):
    out = []
    if traj.entered_sigma_at is None:
        out.append(MonitorResult("practical_stability", 1, 1, math.inf, sigma))
    else:
        after = traj.t >= traj.entered_sigma_at
        out.append(_result("practical_stability", after, traj.W, sigma * (1 + SIGMA_TOL)))
    out.append(MonitorResult("average_rate", 1, int(not traj.rav_final <= rate_bound),
                             traj.rav_final, rate_bound))
    if dwell_bound is not None:
        md = traj.min_dwell
        out.append(MonitorResult("dwell_time", max(len(traj.events) - 1, 0),
                                 int(not md >= dwell_bound), -md, -dwell_bound))
    out.append(MonitorResult("single_guard_steps", len(traj.events), traj.jumps, traj.jumps, 0))
    return out


def _finish(kind, plant, t, x, zeta, u, events, mu, jumps, horizon, step, n_bisect, bits):
    spec = plant.lyapunov
    W = w_from_parts(spec.V(x), zeta, spec.c, spec.d)
    idx = np.nonzero(W <= spec.sigma)[0]
    traj = Trajectory(kind, t, x, zeta, u, W, events, mu, float(horizon), step,
                      step * 2.0**-n_bisect, bits, jumps=jumps,
                      entered_sigma_at=float(t[idx[0]]) if len(idx) else None)
    traj.rav_final, traj.rav_series = measure_rate(traj, bits)
    return traj


def run_quantized(plant: PlantModel, synth: SynthesisResult, x0, zeta0, mu, horizon,
                  step=None, n_bisect=20) -> Trajectory:
    """Simulate ``zetadot = q - b psi_m(kbar zeta)`` with the hysteretic quantizer."""
    cfg = synth.quantizer()
    step = synth.dt_min / 20 if step is None else step
    t, x, zeta, u, events, mu, jumps = _simulate(plant, _HystereticLoop(cfg), x0, zeta0, mu,
                                                 horizon, step, n_bisect)
    bits = 4 * synth.j + 1
    traj = _finish("hysteretic-quantized", plant, t, x, zeta, u, events, mu, jumps, horizon,
                   step, n_bisect, bits)
    mons = monitor_proposition1(x, zeta, u, mu, synth, plant)
    member = krasowskii_mask(-u, zeta, cfg, rtol=1e-12)
    mons.append(MonitorResult("krasowskii_membership", len(u), int(np.count_nonzero(~member)), 0.0, 0.0))
    rmax = float(np.abs(cfg.kbar * zeta).max())
    mons.append(MonitorResult("quantizer_range", len(u), int(not rmax <= cfg.r_max), rmax, cfg.r_max))
    mons += _common_monitors(traj, plant.lyapunov.sigma, synth.rate_bound_quantized,
                             synth.dt_min - 2 * traj.t_tol)
    traj.monitors = mons
    return traj


def run_ternary(plant: PlantModel, synth: SynthesisResult, x0, zeta0, mu, horizon,
                step=None, n_bisect=20, kbar=None) -> Trajectory:
    """Simulate the three-valued loop; ``kbar`` defaults to ``(d+1)/d * w_bar / b0``."""
    kbar = synth.kbar_ternary if kbar is None else kbar
    if kbar < synth.kbar_ternary * (1 - 1e-12):
        raise ValueError("ternary gain below (d+1)/d * w_bar / b0")
    step = synth.dt_min_ternary / 20 if step is None else step
    t, x, zeta, u, events, mu, jumps = _simulate(plant, _TernaryLoop(synth.eta, kbar), x0, zeta0,
                                                 mu, horizon, step, n_bisect)
    traj = _finish("ternary", plant, t, x, zeta, u, events, mu, jumps, horizon, step, n_bisect, 3)
    mons = monitor_proposition2(x, zeta, u, mu, synth, plant)
    mons += _common_monitors(traj, plant.lyapunov.sigma, synth.rate_bound_ternary, None)
    traj.monitors = mons
    return traj


def boundary_points(plant: PlantModel, count: int = 9, level: float | None = None) -> list:
    """``count`` initial conditions on ``W = level`` (default ``c^2+d^2+1``), spread in angle.

    The split between the V-part and the zeta-part of W follows
    ``cos^2``/``sin^2`` of evenly spaced angles; for ``dim_x > 1`` the x-part is
    placed along the first coordinate axis rotated toward the others.
    """
    spec = plant.lyapunov
    L = spec.outer if level is None else level
    pts = []
    for k in range(count):
        th = 2 * math.pi * (k + 0.5) / count
        a = math.cos(th) ** 2
        A, B = a * L, (1 - a) * L
        Vt = A * (spec.c + 1) / (spec.c + A)
        z2 = B * (spec.d + 1) / (spec.d + B)
        zeta = math.copysign(math.sqrt(z2), math.sin(th))
        direction = np.zeros(plant.dim_x)
        direction[0] = math.copysign(1.0, math.cos(th))
        if plant.dim_x > 1:
            direction[1:] = math.sin(3 * th)
        direction /= np.linalg.norm(direction)
        # V is a form of degree 2 along rays for the built-in plants; solve V(s d) = Vt otherwise
        s_lo, s_hi = 0.0, 1.0
        while spec.V(s_hi * direction) < Vt:
            s_hi *= 2
        for _ in range(200):
            mid = 0.5 * (s_lo + s_hi)
            s_lo, s_hi = (mid, s_hi) if spec.V(mid * direction) < Vt else (s_lo, mid)
        x = s_lo * direction
        # guard against landing a hair outside by rounding
        while w_from_parts(spec.V(x), zeta, spec.c, spec.d) > spec.outer:
            x = x * (1 - 1e-15)
        pts.append((x, zeta))
    return pts
