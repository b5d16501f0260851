"""Logarithmic quantizer, its hysteretic multi-valued variant, and the ternary controller.

All functions are pure: state objects are frozen and every step returns a new
one.  Interval conventions follow the quantizer definition verbatim: the lower
end of a level interval is strict and the upper end inclusive, mirrored for
negative arguments.  Comparisons are exact; no epsilon is applied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class QuantizerRangeError(ValueError):
    """Argument beyond ``u0/(1-delta)``, where the quantizer is undefined."""


@dataclass(frozen=True)
class QuantizerConfig:
    delta: float
    u0: float
    j: int
    kbar: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.u0 > 0.0:
            raise ValueError(f"u0 must be positive, got {self.u0}")
        if int(self.j) != self.j or self.j < 0:
            raise ValueError(f"j must be a nonnegative integer, got {self.j}")
        if not self.kbar > 0.0:
            raise ValueError(f"kbar must be positive, got {self.kbar}")
        object.__setattr__(self, "j", int(self.j))

    @cached_property
    def rho(self) -> float:
        return (1.0 - self.delta) / (1.0 + self.delta)

    @cached_property
    def levels(self) -> np.ndarray:
        """``u_i = rho**i * u0`` for ``i = 0..j``."""
        return self.u0 * self.rho ** np.arange(self.j + 1)

    @cached_property
    def level_bounds(self) -> np.ndarray:
        """Descending breakpoints ``b`` with level ``i`` active on ``(b[i+1], b[i]]``.

        ``b[0] = u0/(1-delta)`` and ``b[i+1] = u_i/(1+delta)``; one shared
        array keeps adjacent intervals gap-free in floating point.
        """
        u = self.levels
        return np.concatenate([[self.u0 / (1.0 - self.delta)], u / (1.0 + self.delta)])

    @property
    def r_max(self) -> float:
        return float(self.level_bounds[0])

    @property
    def deadzone(self) -> float:
        return float(self.level_bounds[-1])

    def half_bounds(self, i: int) -> tuple[float, float]:
        u = float(self.levels[i])
        d = self.delta
        return u / (1.0 + d) ** 2, u / ((1.0 + d) * (1.0 - d))

    def scaled(self) -> "QuantizerConfig":
        """The partial-state quantizer with levels ``rho**i * u0 / kbar``."""
        return QuantizerConfig(self.delta, self.u0 / self.kbar, self.j, self.kbar)


def _check_range(r: float, cfg: QuantizerConfig) -> None:
    if not abs(r) <= cfg.r_max:
        raise QuantizerRangeError(
            f"|r| = {abs(r):.6g} exceeds u0/(1-delta) = {cfg.r_max:.6g}; u0 is too small for this state"
        )


def _level_index(a: float, cfg: QuantizerConfig) -> int | None:
    """Index ``i`` with ``a`` in ``(b[i+1], b[i]]``, or None inside the deadzone (a >= 0)."""
    b = cfg.level_bounds
    for i in range(cfg.j + 1):
        if b[i + 1] < a <= b[i]:
            return i
    return None


def psi(r: float, cfg: QuantizerConfig) -> float:
    """Static logarithmic quantizer."""
    _check_range(r, cfg)
    if r < 0:
        return -psi(-r, cfg)
    i = _level_index(r, cfg)
    return 0.0 if i is None else float(cfg.levels[i])


def psi_bar_equivalence_check(zeta: float, cfg: QuantizerConfig, rtol: float = 1e-12) -> bool:
    """Whether ``kbar * psi_bar(zeta)`` agrees with ``psi(kbar * zeta)``."""
    lhs = cfg.kbar * psi(zeta, cfg.scaled())
    rhs = psi(cfg.kbar * zeta, cfg)
    return abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs))


# --- hysteretic quantizer -------------------------------------------------

LEVEL, HALF, ZERO = "level", "half", "zero"


@dataclass(frozen=True)
class HysteresisState:
    """A node of the transition graph.

    ``kind`` is ``"level"`` (output ``sign*u_i``), ``"half"`` (output
    ``sign*u_i/(1+delta)``) or ``"zero"``.  ``jumped`` is set when the last
    step could not be explained by a single guard crossing and the node was
    re-initialized from the static quantizer instead.
    """

    kind: str
    sign: int
    index: int
    value: float
    jumped: bool = field(default=False, compare=False)

    @property
    def label(self) -> str:
        if self.kind == ZERO:
            return "Zero"
        side = "Plus" if self.sign > 0 else "Minus"
        return f"{side}{'Level' if self.kind == LEVEL else 'Half'}({self.index})"


def _node(kind: str, sign: int, index: int, cfg: QuantizerConfig) -> HysteresisState:
    if kind == ZERO:
        return HysteresisState(ZERO, 0, -1, 0.0)
    u = float(cfg.levels[index])
    value = u if kind == LEVEL else u / (1.0 + cfg.delta)
    return HysteresisState(kind, sign, index, sign * value)


def node_interval(state: HysteresisState, cfg: QuantizerConfig) -> tuple[float, float, bool, bool]:
    """Validity interval ``(lo, hi, lo_closed, hi_closed)`` of a node in the variable ``r``."""
    if state.kind == ZERO:
        a = cfg.deadzone
        return -a, a, True, True
    if state.kind == LEVEL:
        lo, hi = float(cfg.level_bounds[state.index + 1]), float(cfg.level_bounds[state.index])
    else:
        lo, hi = cfg.half_bounds(state.index)
    if state.sign > 0:
        return lo, hi, False, True
    return -hi, -lo, True, False


def in_interval(r: float, interval: tuple[float, float, bool, bool]) -> bool:
    lo, hi, lo_closed, hi_closed = interval
    above = r > lo or (lo_closed and r == lo)
    below = r < hi or (hi_closed and r == hi)
    return above and below


def _chain(cfg: QuantizerConfig) -> list[tuple[str, int, int]]:
    """All nodes ordered by output value, from ``-u0`` up to ``+u0``."""
    neg = []
    for i in range(cfg.j + 1):
        neg += [(LEVEL, -1, i), (HALF, -1, i)]
    pos = [(k, 1, i) for (k, _, i) in reversed(neg)]
    return neg + [(ZERO, 0, -1)] + pos


def hysteresis_init(r: float, cfg: QuantizerConfig) -> HysteresisState:
    """Initial node: the one whose output equals the static quantizer at ``r``."""
    _check_range(r, cfg)
    i = _level_index(abs(r), cfg)
    if i is None:
        return _node(ZERO, 0, -1, cfg)
    return _node(LEVEL, 1 if r > 0 else -1, i, cfg)


def hysteresis_step(state: HysteresisState, r: float, cfg: QuantizerConfig) -> HysteresisState:
    """Follow at most one edge of the transition graph for the sampled input ``r``."""
    _check_range(r, cfg)
    interval = node_interval(state, cfg)
    if in_interval(r, interval):
        return state if not state.jumped else _node(state.kind, state.sign, state.index, cfg)
    chain = _chain(cfg)
    pos = chain.index((state.kind, state.sign, state.index))
    pos += 1 if r > interval[1] or r == interval[1] else -1
    if 0 <= pos < len(chain):
        nxt = _node(*chain[pos], cfg)
        if in_interval(r, node_interval(nxt, cfg)):
            return nxt
    # more than one guard crossed between samples
    fresh = hysteresis_init(r, cfg)
    return HysteresisState(fresh.kind, fresh.sign, fresh.index, fresh.value, jumped=True)


def krasowskii_membership(v: float, zeta: float, cfg: QuantizerConfig, rtol: float = 0.0) -> bool:
    """Whether ``v`` belongs to the convexified quantizer set at ``kbar * zeta``.

    ``rtol`` widens both tests by a relative amount; zero gives the exact sets.
    """
    r = cfg.kbar * zeta
    _check_range(r, cfg)
    if abs(r) > cfg.deadzone:
        return abs(v - r) <= cfg.delta * abs(r) * (1.0 + rtol)
    top = (1.0 + cfg.delta) * r
    lo, hi = min(0.0, top), max(0.0, top)
    slack = rtol * abs(top)
    return lo - slack <= v <= hi + slack


# --- ternary controller ---------------------------------------------------


@dataclass(frozen=True)
class TernaryState:
    output: float
    eta: float


def ternary_init(zeta: float, eta: float, kbar: float) -> TernaryState:
    if not (eta > 0 and kbar > 0):
        raise ValueError("eta and kbar must be positive")
    if zeta >= eta:
        return TernaryState(-kbar, eta)
    if zeta <= -eta:
        return TernaryState(kbar, eta)
    return TernaryState(0.0, eta)


def ternary_interval(state: TernaryState) -> tuple[float, float, bool, bool]:
    """Region of ``zeta`` in which the current output is held."""
    eta = state.eta
    if state.output == 0.0:
        return -eta, eta, False, False
    if state.output < 0:
        return eta / 2, math.inf, False, False
    return -math.inf, -eta / 2, False, False


def ternary_step(state: TernaryState, zeta: float, kbar: float) -> TernaryState:
    eta = state.eta
    u = state.output
    to_minus = (u == 0.0 and zeta >= eta) or (u == -kbar and zeta > eta / 2)
    to_zero = (
        (u == -kbar and zeta <= eta / 2)
        or (u == kbar and zeta >= -eta / 2)
        or (u == 0.0 and abs(zeta) < eta)
    )
    to_plus = (u == 0.0 and zeta <= -eta) or (u == kbar and zeta < -eta / 2)
    if to_minus + to_zero + to_plus != 1:
        raise AssertionError(f"ternary law not exclusive at u={u}, zeta={zeta}")
    if to_minus:
        new = -kbar
    elif to_plus:
        new = kbar
    else:
        new = 0.0
    return state if new == u else TernaryState(new, eta)


def krasowskii_mask(v, zeta, cfg: QuantizerConfig, rtol: float = 0.0) -> np.ndarray:
    """Vectorized ``krasowskii_membership`` over arrays of ``(v, zeta)``."""
    v = np.asarray(v, dtype=float)
    r = cfg.kbar * np.asarray(zeta, dtype=float)
    if np.any(np.abs(r) > cfg.r_max):
        raise QuantizerRangeError("|kbar zeta| exceeds u0/(1-delta)")
    sector = np.abs(v - r) <= cfg.delta * np.abs(r) * (1.0 + rtol)
    top = (1.0 + cfg.delta) * r
    slack = rtol * np.abs(top)
    dead = (np.minimum(0.0, top) - slack <= v) & (v <= np.maximum(0.0, top) + slack)
    return np.where(np.abs(r) > cfg.deadzone, sector, dead)
