"""Acceptance gate: ten desk-scale criteria, each with its tolerance and time budget.

Every test prints one ``[PASS]``/``[FAIL]`` line through the terminal reporter,
so the lines show up in ``pytest -v`` output without ``-s``.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from qstab.lyapunov import eval_W, flow, wdot
from qstab.plants import builtin_demo_plant, chain_demo, normal_form_to_plant
from qstab.quantizer import QuantizerConfig, psi, psi_bar_equivalence_check
from qstab.simulator import (
    boundary_points,
    integrate_between_events,
    monitor_proposition1,
    run_quantized,
    run_ternary,
)
from qstab.synthesis import (
    BoundEstimates,
    GridPlan,
    compute_dwell_and_rates,
    compute_gains,
    per_level_dwell,
    synthesize,
)

MUS = (0.5, 1.0, 1.5)
HORIZON = 3.0
RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="module")
def report(request):
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(n: int, title: str, ok: bool, detail: str):
        RESULTS[n] = (ok, title)
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {title} | {detail}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)

    yield emit
    if tr is not None:
        tr.write_line("")
        tr.write_line(f"acceptance: {sum(ok for ok, _ in RESULTS.values())}/{len(RESULTS)} criteria passed")


def _digest(tr) -> dict:
    """Keep what the criteria need and drop the sample arrays."""
    return {
        "passed": tr.passed,
        "monitors": {m.name: m for m in tr.monitors},
        "entered": tr.entered_sigma_at,
        "min_dwell": tr.min_dwell,
        "rav": tr.rav_final,
        "t_tol": tr.t_tol,
        "events": len(tr.events),
        "ceased": tr.switching_ceased_at,
        "rav_series": tr.rav_series,
        "horizon": tr.horizon,
    }


@pytest.fixture(scope="module")
def demo_setup():
    plant = builtin_demo_plant()
    synth = synthesize(plant, 1 / 3, GridPlan())
    # compile the kernel outside the timed sweeps
    run_quantized(plant, synth, [0.0], 0.0, [1.0], 1e-3)
    return plant, synth


@pytest.fixture(scope="module")
def quantized_sweep(demo_setup):
    plant, synth = demo_setup
    t0 = time.perf_counter()
    runs = [_digest(run_quantized(plant, synth, x0, z0, [mu], HORIZON))
            for x0, z0 in boundary_points(plant, 9) for mu in MUS]
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def zero_q_runs():
    plant = builtin_demo_plant(q_zero=True)
    synth = synthesize(plant, 1 / 3, GridPlan())
    t0 = time.perf_counter()
    runs = [_digest(run_quantized(plant, synth, x0, z0, [1.0], 4.0)) for x0, z0 in boundary_points(plant, 9)]
    return runs, time.perf_counter() - t0


# 1 ------------------------------------------------------------------------------


def test_criterion_01_quantizer_algebra(report):
    t0 = time.perf_counter()
    cfg = QuantizerConfig(delta=1 / 3, u0=1.0, j=2, kbar=2.0)
    zs = np.linspace(-1.0, 1.0, 10_000) * cfg.r_max / cfg.kbar
    odd = sector = dead = equiv = 0
    for z in zs:
        r = cfg.kbar * z
        p = psi(r, cfg)
        odd += psi(-r, cfg) != -p
        if abs(r) > cfg.deadzone:
            sector += not abs(p - r) <= cfg.delta * abs(r)
        else:
            dead += p != 0.0
        equiv += not psi_bar_equivalence_check(z, cfg, rtol=1e-12)
    dt = time.perf_counter() - t0
    ok = odd == sector == dead == equiv == 0 and dt < 1.0
    report(1, "quantizer algebra", ok,
           f"odd {odd}, sector {sector}, deadzone {dead}, equivalence {equiv} violations / 1e4; {dt:.2f}s < 1s")
    assert ok


# 2 ------------------------------------------------------------------------------


def test_criterion_02_synthesis_identities(report):
    t0 = time.perf_counter()
    delta = 1 / 3
    b = BoundEstimates(w_bar=2.0, b_bar=1.0, zeta_bar=1.0, q_bar=1.0, sample_count=0)
    k_star, j_star, k0 = compute_gains(delta, b, 0.4, 1.0, 1.0, 1.0)
    dt_m, rate_q, rate_t = compute_dwell_and_rates(b, 10.0, delta, 2, 0.4)
    # independent exact arithmetic
    F = Fraction
    ref_k0 = F(2) * F(2) / F(2, 5)
    ref_ks = ref_k0 / (1 - F(1, 3))
    ref_dt = 1 / (F(1) / F(1, 2) + 10) * F(1, 4)
    ref_rq = 9 / ref_dt
    ref_rt = 6 * (F(1) / F(2, 5) + 10)
    ref_j = math.ceil(math.log(F(1, 16) * F(2, 5) / 4) / math.log(0.5))
    identity = abs(k_star * (1 - delta) - k0) <= 2 * np.finfo(float).eps * k0
    close = lambda a, r: abs(a - float(r)) <= 4 * np.finfo(float).eps * float(r)  # noqa: E731
    exact = (close(k_star, ref_ks) and close(k0, ref_k0) and j_star == ref_j
             and close(dt_m, ref_dt) and close(rate_q, ref_rq) and close(rate_t, ref_rt))
    dt = time.perf_counter() - t0
    ok = identity and exact and (ref_ks, ref_k0, ref_j, ref_dt, ref_rq, ref_rt) == (15, 10, 8, F(1, 48), 432, 75)
    ok = ok and dt < 1.0
    report(2, "synthesis identities", ok,
           f"k*={k_star!r} k0={k0!r} j*={j_star} DT_m={dt_m!r} R={rate_q!r} R_t={rate_t!r}; {dt:.3f}s < 1s")
    assert ok


# 3 ------------------------------------------------------------------------------


def test_criterion_03_dwell_monotone(report):
    t0 = time.perf_counter()
    b = BoundEstimates(w_bar=2.0, b_bar=1.0, zeta_bar=1.0, q_bar=1.0, sample_count=0)
    ub = per_level_dwell(b, 10.0, 1 / 3, 2)
    dt_m, _, _ = compute_dwell_and_rates(b, 10.0, 1 / 3, 2, 0.4)
    dt = time.perf_counter() - t0
    ok = bool(np.all(np.diff(ub) < 0)) and abs(ub.min() - dt_m) <= 1e-12 and ub.argmin() == len(ub) - 1 and dt < 1
    report(3, "per-level dwell bounds decreasing, min = DT_m", ok,
           f"bounds {np.array2string(ub, precision=8)}; |min - DT_m| = {abs(ub.min() - dt_m):.1e}; {dt:.3f}s < 1s")
    assert ok


# 4 ------------------------------------------------------------------------------


def _sampled_margins(plant, synth, n=100_000, seed=0):
    """Decrease margins on a random grid, with the static quantizer output as input."""
    spec, cfg = plant.lyapunov, synth.quantizer()
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, plant.dim_x)) * np.asarray(spec.x_extent)
    z = np.concatenate([rng.uniform(-1, 1, n // 2) * cfg.deadzone / cfg.kbar,
                        rng.uniform(-1, 1, n - n // 2) * min(cfg.u0 / cfg.kbar, spec.zeta_extent)])
    keep = (spec.value(x) < spec.c + 1) & (z**2 < spec.d + 1)
    x, z = x[keep], z[keep]
    keep = eval_W(x, z, spec) <= spec.outer
    x, z = x[keep], z[keep]
    lo, hi = plant.param_box[:, 0], plant.param_box[:, 1]
    mu = rng.uniform(lo, hi, (len(z), plant.dim_mu))
    u = -np.array([psi(cfg.kbar * v, cfg) for v in z])
    return {m.name: m for m in monitor_proposition1(x, z, u, mu, synth, plant)}


def test_criterion_04_practical_stability(report, demo_setup, quantized_sweep):
    plant, synth = demo_setup
    runs, elapsed = quantized_sweep
    grid = _sampled_margins(plant, synth)
    cfg = synth.quantizer()
    names = ["practical_stability", "wdot_negative_on_S", "wdot_margin_quantized_Stilde",
             "wdot_margin_deadzone_Stilde", "single_guard_steps", "quantizer_range"]
    failures = {n: sum(r["monitors"][n].failed for r in runs) for n in names}
    checked = {n: sum(r["monitors"][n].checked for r in runs) for n in names}
    entered = all(r["entered"] is not None for r in runs)
    grid_failed = sum(m.failed for m in grid.values())
    # the deadzone branch needs S^ inside S~, i.e. a deadzone reaching |zeta| >= eta
    dead_empty = cfg.deadzone < cfg.kbar * synth.eta and not synth.hat_s_in_stilde
    dead_ok = checked["wdot_margin_deadzone_Stilde"] + grid["wdot_margin_deadzone_Stilde"].checked > 0 or dead_empty
    ok = (entered and not any(failures.values()) and not grid_failed and dead_ok
          and elapsed < 60 and len(runs) == 27)
    T = max(r["entered"] for r in runs) if entered else math.inf
    report(4, "semi-global practical stability, quantized loop (27 runs)", ok,
           f"max entry time {T:.3f}; trajectory samples in S {checked['wdot_negative_on_S']}, "
           f"S^ margin {checked['wdot_margin_quantized_Stilde']}; sampled grid S {grid['wdot_negative_on_S'].checked}, "
           f"S^ margin {grid['wdot_margin_quantized_Stilde'].checked} (worst {grid['wdot_margin_quantized_Stilde'].worst:.3g}"
           f" <= {grid['wdot_margin_quantized_Stilde'].bound:.3g}); deadzone branch empty "
           f"(kbar*eta {cfg.kbar * synth.eta:.3g} > deadzone {cfg.deadzone:.3g}); "
           f"failures {sum(failures.values()) + grid_failed}; {elapsed:.1f}s < 60s")
    assert ok


# 5 ------------------------------------------------------------------------------


def test_criterion_05_dwell_and_rate(report, demo_setup, quantized_sweep):
    _, synth = demo_setup
    runs, _ = quantized_sweep
    min_dwell = min(r["min_dwell"] for r in runs)
    max_rav = max(r["rav"] for r in runs)
    tol = max(r["t_tol"] for r in runs)
    ok = min_dwell >= synth.dt_min - 2 * tol and max_rav <= synth.rate_bound_quantized
    report(5, "dwell time and average data rate", ok,
           f"min dwell {min_dwell:.4e} >= DT_m {synth.dt_min:.4e}; "
           f"max R_av {max_rav:.1f} <= (4j+1)/DT_m {synth.rate_bound_quantized:.1f}")
    assert ok


# 6 ------------------------------------------------------------------------------


def test_criterion_06_zero_rate(report, zero_q_runs):
    runs, elapsed = zero_q_runs
    slopes, ceased = [], []
    for r in runs:
        ceased.append(r["ceased"])
        if r["ceased"] is None:
            slopes.append(math.nan)
            continue
        s = r["rav_series"]
        tail = s[s[:, 0] >= max(2 * r["ceased"], 0.5 * r["horizon"])]
        slopes.append(np.polyfit(np.log(tail[:, 0]), np.log(tail[:, 1]), 1)[0])
    ok = all(c is not None for c in ceased) and all(abs(s + 1) <= 0.05 for s in slopes) and elapsed < 10
    report(6, "q = 0: switching stops, R_av ~ c/T", ok,
           f"last switch at t <= {max(c if c is not None else math.inf for c in ceased):.4f}; tail exponents "
           f"[{min(slopes):.4f}, {max(slopes):.4f}]; {elapsed:.1f}s < 10s")
    assert ok


# 7 ------------------------------------------------------------------------------


def test_criterion_07_ternary(report, demo_setup):
    plant, synth = demo_setup
    run_ternary(plant, synth, [0.0], 0.0, [1.0], 1e-3)
    t0 = time.perf_counter()
    runs = [_digest(run_ternary(plant, synth, x0, z0, [mu], HORIZON))
            for x0, z0 in boundary_points(plant, 9) for mu in MUS]
    elapsed = time.perf_counter() - t0
    conv = all(r["entered"] is not None and r["monitors"]["practical_stability"].passed for r in runs)
    margin = sum(r["monitors"]["wdot_margin_large_zeta"].failed for r in runs)
    decrease = sum(r["monitors"]["wdot_negative_on_S"].failed for r in runs)
    max_rav = max(r["rav"] for r in runs)
    ok = conv and margin == 0 and decrease == 0 and max_rav <= synth.rate_bound_ternary and elapsed < 60
    report(7, "ternary controller (27 runs)", ok,
           f"kbar {synth.kbar_ternary:.3f}; margin failures {margin}; max R_av {max_rav:.2f} <= "
           f"6(q/eta + b k0) {synth.rate_bound_ternary:.1f}; {elapsed:.1f}s < 60s")
    assert ok


# 8 ------------------------------------------------------------------------------


def test_criterion_08_krasowskii(report, quantized_sweep, zero_q_runs):
    runs = quantized_sweep[0] + zero_q_runs[0]
    checked = sum(r["monitors"]["krasowskii_membership"].checked for r in runs)
    failed = sum(r["monitors"]["krasowskii_membership"].failed for r in runs)
    ok = failed == 0 and checked > 0
    report(8, "Krasowskii membership along quantized runs", ok, f"{failed} violations over {checked} samples")
    assert ok


# 9 ------------------------------------------------------------------------------


def _replay_original(nf, events, u0, y0, t_end, t_samples):
    """Integrate the original coordinates with the logged piecewise-constant input."""
    cuts = [0.0] + [e.time for e in events if e.time < t_end] + [t_end]
    inputs = [u0] + [e.new_value for e in events if e.time < t_end]
    y = np.asarray(y0, dtype=float)
    out = np.empty((len(t_samples), len(y)))
    for a, b, u in zip(cuts, cuts[1:], inputs):
        sel = (t_samples >= a) & (t_samples <= b)

        def rhs(t, s, u=u):
            zd, xid = nf.rhs(s[: nf.dim_z], s[nf.dim_z:], u)
            return np.concatenate([zd, xid])

        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=1e-13, atol=1e-15, dense_output=True)
        if np.any(sel):
            out[sel] = sol.sol(t_samples[sel]).T
        y = sol.y[:, -1]
    return out


def test_criterion_09_normal_form(report):
    t0 = time.perf_counter()
    nf = chain_demo()
    plant = normal_form_to_plant(nf)
    synth = synthesize(plant, 1 / 3, GridPlan())
    x0, z0 = boundary_points(plant, 3)[0]
    tr = run_quantized(plant, synth, x0, z0, np.zeros(0), 1.0)
    # same logged input, original coordinates
    zz, xi = nf.from_shifted(x0[None, :], np.array([z0]))
    idx = np.linspace(0, len(tr.t) - 1, 200).astype(int)
    ts = tr.t[idx]
    orig = _replay_original(nf, tr.events, tr.u[0], np.concatenate([zz[0], xi[0]]), 1.0, ts)
    x_o, zeta_o = nf.to_shifted(orig[:, : nf.dim_z], orig[:, nf.dim_z:])
    diff = max(np.abs(x_o - tr.x[idx]).max(), np.abs(zeta_o - tr.zeta[idx]).max())
    # step-doubling estimate of the fixed-step integrator error over the same input
    cuts = [0.0] + [e.time for e in tr.events] + [1.0]
    inputs = [tr.u[0]] + [e.new_value for e in tr.events]
    ya, yb = np.concatenate([x0, [z0]]), np.concatenate([x0, [z0]])
    for a, b, u in zip(cuts, cuts[1:], inputs):
        if b <= a:
            continue
        _, pa, _ = integrate_between_events(plant, None, ya[:-1], ya[-1], [], u, b - a, tr.step, t0=a)
        _, pb, _ = integrate_between_events(plant, None, yb[:-1], yb[-1], [], u, b - a, tr.step / 2, t0=a)
        ya, yb = pa[-1], pb[-1]
    est = float(np.abs(ya - yb).max()) * 16 / 15
    tol = 10 * max(est, 1e-12)  # floor at the reference solver's accuracy
    # convergence of the transformed plant from the operating-set boundary
    conv = []
    for x0, z0 in boundary_points(plant, 3):
        r = run_quantized(plant, synth, x0, z0, np.zeros(0), 3.0)
        conv.append(r.entered_sigma_at is not None and r.passed)
    elapsed = time.perf_counter() - t0
    ok = diff <= tol and all(conv) and elapsed < 10
    report(9, "normal-form round trip (r = 2 chain)", ok,
           f"max coordinate mismatch {diff:.2e} <= 10 x tolerance {tol:.2e} (step-doubling est {est:.1e}); "
           f"{sum(conv)}/3 runs converge; {elapsed:.1f}s < 10s")
    assert ok


# 10 -----------------------------------------------------------------------------


def test_criterion_10_gradient_oracle(report):
    t0 = time.perf_counter()
    plant = builtin_demo_plant()
    spec = plant.lyapunov
    rng = np.random.default_rng(2024)
    eps, worst, n = 1e-6, 0.0, 0
    while n < 100:
        x = rng.uniform(-1, 1, 1) * spec.x_extent[0]
        z = rng.uniform(-1, 1) * spec.zeta_extent
        if not eval_W(x, z, spec) < spec.outer:
            continue
        mu = rng.uniform(0.5, 1.5, 1)
        u = rng.uniform(-5, 5)
        dx, dz = flow(x, z, mu, u, plant, spec)
        fd = (eval_W(x + eps * dx[0], z + eps * dz[0], spec) - eval_W(x - eps * dx[0], z - eps * dz[0], spec)) / (2 * eps)
        ana = float(wdot(x, z, mu, u, plant, spec))
        worst = max(worst, abs(fd - ana) / abs(ana))
        n += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 1
    report(10, "Wdot vs central differences (100 points)", ok, f"max relative error {worst:.2e} <= 1e-6; {dt:.3f}s < 1s")
    assert ok
