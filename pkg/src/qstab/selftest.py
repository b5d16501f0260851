"""Quick deterministic property checks that need no closed-loop simulation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lyapunov import eval_W, flow, wdot
from .plants import builtin_demo_plant
from .quantizer import QuantizerConfig, psi, psi_bar_equivalence_check
from .synthesis import BoundEstimates, compute_dwell_and_rates, compute_gains, per_level_dwell

FIXTURE = QuantizerConfig(delta=1 / 3, u0=1.0, j=2, kbar=2.0)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _zeta_samples(cfg: QuantizerConfig, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, n) * cfg.r_max / cfg.kbar


def check_quantizer(cfg: QuantizerConfig = FIXTURE, n: int = 2000, seed: int = 0,
                    sector_delta: float | None = None) -> list[Check]:
    """Odd symmetry, sector bound, deadzone and the scaled-quantizer identity.

    ``sector_delta`` overrides the delta used by the sector test, which lets a
    caller confirm the check actually bites.
    """
    dl = cfg.delta if sector_delta is None else sector_delta
    zs = _zeta_samples(cfg, n, seed)
    odd = sector = dead = equiv = 0
    for z in zs:
        r = cfg.kbar * z
        p = psi(r, cfg)
        odd += psi(-r, cfg) != -p
        if abs(r) > cfg.deadzone:
            sector += not abs(p - r) <= dl * abs(r)
        else:
            dead += p != 0.0
        equiv += not psi_bar_equivalence_check(z, cfg)
    return [
        Check("quantizer.odd_symmetry", odd == 0, f"{odd} violations / {n}"),
        Check("quantizer.sector_bound", sector == 0, f"{sector} violations / {n}"),
        Check("quantizer.deadzone", dead == 0, f"{dead} violations / {n}"),
        Check("quantizer.scaled_equivalence", equiv == 0, f"{equiv} violations / {n}"),
    ]


def check_gradient(n: int = 100, seed: int = 0, eps: float = 1e-6, rtol: float = 1e-6) -> list[Check]:
    """Central differences of W along the flow versus the closed-form derivative."""
    plant = builtin_demo_plant()
    spec = plant.lyapunov
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        while True:
            x = rng.uniform(-1, 1, plant.dim_x) * spec.x_extent
            z = rng.uniform(-1, 1) * spec.zeta_extent
            if eval_W(x, z, spec) <= 0.9 * spec.outer:
                break
        mu = rng.uniform(*plant.param_box[0], size=1)
        u = rng.uniform(-2, 2)
        dx, dz = flow(x, z, mu, u, plant, spec)
        dx, dz = dx[0], float(dz[0])
        num = (eval_W(x + eps * dx, z + eps * dz, spec) - eval_W(x - eps * dx, z - eps * dz, spec)) / (2 * eps)
        ana = float(wdot(x, z, mu, u, plant, spec))
        worst = max(worst, abs(num - ana) / max(abs(ana), 1e-12))
    return [Check("lyapunov.gradient_oracle", worst <= rtol, f"max relative error {worst:.2e}")]


def check_synthesis_identities() -> list[Check]:
    delta = 1 / 3
    b = BoundEstimates(w_bar=2.0, b_bar=1.0, zeta_bar=1.0, q_bar=1.0, sample_count=0)
    k_star, j_star, k0 = compute_gains(delta, b, 0.4, 1.0, 1.0, 1.0)
    dt, rate_q, rate_t = compute_dwell_and_rates(b, 10.0, delta, 2, 0.4)
    ub = per_level_dwell(b, 10.0, delta, 2)
    return [
        Check("synthesis.k0_identity", abs(k_star * (1 - delta) - k0) <= 4 * np.finfo(float).eps * k0,
              f"k*(1-delta) = {k_star * (1 - delta)!r}, k0 = {k0!r}"),
        Check("synthesis.hand_fixture",
              np.isclose(k_star, 15) and np.isclose(k0, 10) and j_star == 8
              and np.isclose(dt, 1 / 48) and np.isclose(rate_q, 432) and np.isclose(rate_t, 75),
              f"k*={k_star:.12g} k0={k0:.12g} j*={j_star} DT={dt:.12g} R={rate_q:.12g} Rt={rate_t:.12g}"),
        Check("synthesis.dwell_monotone", bool(np.all(np.diff(ub) < 0)) and np.isclose(ub[-1], dt, rtol=1e-12),
              f"per-level bounds {np.array2string(ub, precision=6)}"),
    ]


def run_selftest(seed: int = 0, sector_delta: float | None = None) -> list[Check]:
    return (check_quantizer(seed=seed, sector_delta=sector_delta)
            + check_gradient(seed=seed)
            + check_synthesis_identities())


def format_report(checks: list[Check]) -> str:
    lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:34s} {c.detail}" for c in checks]
    lines.append(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return "\n".join(lines)
