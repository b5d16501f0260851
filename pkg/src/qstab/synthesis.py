"""Controller constants from sampled bounds over the operating set.

The maxima over compact sets that the constants require are estimated on a
scrambled Sobol sample of the box enclosing ``W <= c^2+d^2+1`` and inflated by a
safety factor.  Everything is deterministic given ``GridPlan.seed``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .lyapunov import coupling_w, w_from_parts
from .plants import PlantModel, sample_box, ulp_spot_check
from .quantizer import QuantizerConfig

log = logging.getLogger(__name__)


class SynthesisError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class GridPlan:
    n_samples: int = 2**16
    seed: int = 0
    safety_factor: float = 1.1
    eta_halvings: int = 20
    eta_margin: float = 0.01  # fraction of max |dV/dx F| required as strict decrease in U

    def __post_init__(self):
        if self.safety_factor < 1:
            raise ValueError("safety_factor must be >= 1")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")


@dataclass(frozen=True)
class BoundEstimates:
    w_bar: float
    b_bar: float
    zeta_bar: float
    q_bar: float
    sample_count: int
    safety_factor: float = 1.1


@dataclass(frozen=True)
class SynthesisResult:
    delta: float
    eta: float
    k_star: float
    j_star: int
    k0: float
    kbar: float
    j: int
    u0: float
    zeta_tilde: float
    dt_min: float
    rate_bound_quantized: float
    kbar_ternary: float
    dt_min_ternary: float
    rate_bound_ternary: float
    bounds: BoundEstimates
    b0: float
    c: float
    d: float
    sigma: float
    hat_s_in_stilde: bool
    grid: GridPlan = field(default_factory=GridPlan)
    trace: tuple = ()

    @property
    def rho(self) -> float:
        return (1 - self.delta) / (1 + self.delta)

    def quantizer(self):
        return QuantizerConfig(self.delta, self.u0, self.j, self.kbar)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trace"] = [list(t) for t in self.trace]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisResult":
        d = dict(d)
        d["bounds"] = BoundEstimates(**d["bounds"])
        d["grid"] = GridPlan(**d["grid"])
        d["trace"] = tuple(tuple(t) for t in d.get("trace", ()))
        return cls(**d)


def _omega_samples(plant: PlantModel, grid: GridPlan):
    spec = plant.lyapunov
    x, zeta, mu = sample_box(plant, grid.n_samples, grid.seed)
    W = w_from_parts(spec.V(x), zeta, spec.c, spec.d)
    keep = W <= spec.outer
    if not np.any(keep):
        raise SynthesisError("bounds", "no sample fell inside the operating set")
    return x[keep], zeta[keep], mu[keep], W[keep]


def estimate_bounds(plant: PlantModel, grid: GridPlan = GridPlan()) -> BoundEstimates:
    spec = plant.lyapunov
    x, zeta, mu, _ = _omega_samples(plant, grid)
    w = coupling_w(x, zeta, mu, plant, spec)
    b = plant.b(x, zeta, mu)
    if np.any(b < plant.b0):
        raise SynthesisError("bounds", f"b(x, zeta, mu) >= b0 = {plant.b0} violated (min {b.min():.6g})")
    q = plant.q(x, zeta, mu)
    s = grid.safety_factor
    return BoundEstimates(
        w_bar=float(np.abs(w).max() * s),
        b_bar=float(np.abs(b).max() * s),
        zeta_bar=float(np.abs(zeta).max() * s),
        q_bar=float(np.abs(q).max() * s),
        sample_count=int(len(zeta)),
        safety_factor=s,
    )


def decrease_terms(x, zeta, mu, plant: PlantModel) -> np.ndarray:
    """``c/(c+1) dV/dx F + w zeta``: the part of the bound on Wdot that does not involve u."""
    spec = plant.lyapunov
    gF = np.sum(spec.grad(x) * plant.F(x, mu), axis=1)
    return spec.c / (spec.c + 1) * gF + coupling_w(x, zeta, mu, plant, spec) * zeta


def estimate_eta(plant: PlantModel, bounds: BoundEstimates, grid: GridPlan = GridPlan()) -> float:
    """Largest ``eta = eta_0 / 2**k`` for which the zero-input bound is negative on ``{|zeta| < eta}``.

    Each rung resamples the slab ``|zeta| <= eta`` (plus the ``zeta = 0`` slice)
    so that thin slabs are not left empty.
    """
    spec = plant.lyapunov
    x_all, zeta_all, mu_all, _ = _omega_samples(plant, grid)
    gF = np.sum(spec.grad(x_all) * plant.F(x_all, mu_all), axis=1)
    margin = grid.eta_margin * float(np.abs(gF).max())
    S = w_from_parts(spec.V(x_all), zeta_all, spec.c, spec.d) >= spec.sigma
    eta0 = float(np.abs(zeta_all[S]).max()) if np.any(S) else bounds.zeta_bar / bounds.safety_factor

    x, zeta_u, mu = sample_box(plant, grid.n_samples, grid.seed)
    unit = zeta_u / spec.zeta_extent  # uniform on [-1, 1]
    V = spec.V(x)
    for k in range(grid.eta_halvings + 1):
        eta = eta0 / 2**k
        xs = np.vstack([x, x])
        zs = np.concatenate([eta * unit, np.zeros(len(unit))])
        ms = np.vstack([mu, mu])
        W = w_from_parts(np.concatenate([V, V]), zs, spec.c, spec.d)
        inS = (W >= spec.sigma) & (W <= spec.outer)
        if not np.any(inS):
            continue
        cond = decrease_terms(xs[inS], zs[inS], ms[inS], plant)
        if np.all(cond < 0) and np.all(cond <= -margin):
            return eta
    raise SynthesisError(
        "eta", "no neighborhood |zeta| < eta of S0 keeps the zero-input bound negative; "
        "the x-subsystem probably fails the uniform Lyapunov property"
    )


def compute_gains(delta, bounds: BoundEstimates, eta, b0, c, d) -> tuple[float, int, float]:
    """``(k_star, j_star, k0)``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if min(eta, b0, c, d, bounds.b_bar) <= 0:
        raise ValueError("eta, b0, c, d and b_bar must be positive")
    k0 = (d + 1) / d * bounds.w_bar / b0 / eta
    k_star = k0 / (1 - delta)
    arg = d**2 / (c**2 + d**2 + d + 1) ** 2 * eta / 4 * b0 / bounds.b_bar
    rho = (1 - delta) / (1 + delta)
    j_star = max(0, math.ceil(math.log(arg) / math.log(rho)))
    return k_star, j_star, k0


def per_level_dwell(bounds: BoundEstimates, k0, delta, j, zeta_scale=None) -> np.ndarray:
    """Lower bounds on the time spent at ``|u| = u_i``, ``i = 0..j``."""
    Z = bounds.zeta_bar if zeta_scale is None else zeta_scale
    rho = (1 - delta) / (1 + delta)
    i = np.arange(j + 1)
    return Z / (bounds.q_bar + k0 * bounds.b_bar * Z * rho ** (i - 1.0)) * rho**i * delta / (1 - delta)


def node_dwell_bounds(q_bar: float, b_bar: float, cfg: QuantizerConfig) -> dict:
    """Dwell lower bounds per automaton node from the actual interval geometry.

    Each bound is the shortest entry-to-exit distance of ``r = kbar zeta`` inside
    the node divided by the largest speed ``kbar (q_bar + b_bar |u|)``.  Unlike
    ``per_level_dwell`` this also covers the half nodes honestly: their shortest
    path is ``u_i delta/(1+delta)^2``, so for small ``q_bar`` they dwell only
    about ``(1-delta)`` times the level-``j`` bound.  ``"zero"`` is the
    same-side exit of the deadzone node.
    """
    d, k, u = cfg.delta, cfg.kbar, cfg.levels
    level = u * d / (1 - d * d) / (k * (q_bar + b_bar * u))
    half = u * d / (1 + d) ** 2 / (k * (q_bar + b_bar * u / (1 + d)))
    zero = math.inf if q_bar == 0 else u[-1] * d / (1 + d) ** 2 / (k * q_bar)
    return {"level": level, "half": half, "zero": zero,
            "min": float(min(level.min(), half.min(), zero))}


def compute_dwell_and_rates(bounds: BoundEstimates, k0, delta, j, eta, zeta_scale=None):
    """``(dt_min, (4j+1)/dt_min, 6 (q_bar/eta + b_bar k0))``."""
    if j < 1 and bounds.q_bar > 0:
        raise ValueError("the dwell-time bound needs j >= 1 when q_bar > 0")
    Z = bounds.zeta_bar if zeta_scale is None else zeta_scale
    rho = (1 - delta) / (1 + delta)
    q_term = 0.0 if bounds.q_bar == 0 else bounds.q_bar / (Z * rho ** (j - 1))
    dt_min = 1.0 / (q_term + k0 * bounds.b_bar) * delta / (1 + delta)
    return dt_min, (4 * j + 1) / dt_min, 6 * (bounds.q_bar / eta + bounds.b_bar * k0)


def synthesize(
    plant: PlantModel,
    delta: float,
    grid: GridPlan = GridPlan(),
    gain_margin: float = 1.0,
    level_margin: int = 0,
) -> SynthesisResult:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if gain_margin < 1:
        raise ValueError("gain_margin must be >= 1 (kbar >= k_star)")
    if level_margin < 0:
        raise ValueError("level_margin must be >= 0 (j >= j_star)")
    spec = plant.lyapunov
    if not ulp_spot_check(plant, seed=grid.seed):
        raise SynthesisError("ulp", "dV/dx F(x, mu) < 0 fails on sampled points of {V <= c+1}")
    bounds = estimate_bounds(plant, grid)
    eta = estimate_eta(plant, bounds, grid)
    k_star, j_star, k0 = compute_gains(delta, bounds, eta, plant.b0, spec.c, spec.d)
    kbar = gain_margin * k_star
    j = j_star + level_margin
    trace = [
        ("w_bar", "max |w| over Omega x P, times safety", bounds.w_bar),
        ("b_bar", "max |b| over Omega x P, times safety", bounds.b_bar),
        ("zeta_bar", "max |zeta| over Omega, times safety", bounds.zeta_bar),
        ("q_bar", "max |q| over Omega x P, times safety", bounds.q_bar),
        ("eta", "largest ladder rung with c/(c+1) dV/dx F + w zeta < -margin on U", eta),
        ("k0", f"(d+1)/d * w_bar/b0 / eta  [d={spec.d}, b0={plant.b0}]", k0),
        ("k_star", f"k0 / (1 - delta)  [delta={delta}]", k_star),
        ("j_star", f"ceil(log(d^2/(c^2+d^2+d+1)^2 * eta/4 * b0/b_bar) / log(rho))  [c={spec.c}]", j_star),
        ("kbar", f"gain_margin * k_star  [gain_margin={gain_margin}]", kbar),
    ]
    if j < 1 and bounds.q_bar > 0:
        log.warning("j = 0 leaves the dwell bound undefined; using j = 1")
        trace.append(("j_flag", "j raised from 0 to 1 so that rho**(j-1) is defined", 1))
        j = 1
    trace.append(("j", f"j_star + level_margin  [level_margin={level_margin}]", j))

    x, zeta, mu, W = _omega_samples(plant, grid)
    in_s = W >= spec.sigma
    tilde = in_s & (np.abs(zeta) >= eta)
    if not np.any(tilde):
        raise SynthesisError("u0", "no sample of S with |zeta| >= eta")
    zeta_tilde = float(np.abs(zeta[tilde]).max() * grid.safety_factor)
    u0 = (1 + delta) * kbar * zeta_tilde
    trace.append(("u0", "(1+delta) * kbar * max |zeta| over S~ (times safety)", u0))
    r_max = u0 / (1 - delta)
    if np.abs(kbar * zeta).max() > r_max:
        raise SynthesisError("u0", "|kbar zeta| exceeds u0/(1-delta) somewhere in the operating set")

    # the dwell estimate substitutes u_i = rho^i (1+delta) kbar Z, so it must use
    # the same Z as u0 and the gain actually applied
    k_eff = kbar * (1 - delta)
    dt_min, rate_q, _ = compute_dwell_and_rates(bounds, k_eff, delta, j, eta, zeta_scale=zeta_tilde)
    trace.append(("dt_min", "delta/(1+delta) / (q_bar/(Z rho^(j-1)) + kbar(1-delta) b_bar), Z = u0/((1+delta) kbar)", dt_min))
    trace.append(("rate_bound_quantized", "(4j+1) / dt_min", rate_q))
    node_min = node_dwell_bounds(bounds.q_bar, bounds.b_bar, QuantizerConfig(delta, u0, j, kbar))["min"]
    trace.append(("dt_node_min", "min over automaton nodes of shortest path / largest speed (diagnostic)", node_min))
    if node_min < dt_min:
        log.info("node-geometry dwell bound %.3g is below dt_min %.3g", node_min, dt_min)

    kbar_t = (spec.d + 1) / spec.d * bounds.w_bar / plant.b0
    dt_t = (eta / 2) / (bounds.q_bar + bounds.b_bar * kbar_t)
    rate_t = 6 * (bounds.q_bar / eta + bounds.b_bar * k0)
    trace.append(("kbar_ternary", "(d+1)/d * w_bar / b0", kbar_t))
    trace.append(("dt_min_ternary", "(eta/2) / (q_bar + b_bar kbar_ternary)", dt_t))
    trace.append(("rate_bound_ternary", "6 (q_bar/eta + b_bar k0)", rate_t))

    uj = u0 * ((1 - delta) / (1 + delta)) ** j
    hat = in_s & (np.abs(kbar * zeta) > uj / (1 + delta)) & (np.abs(kbar * zeta) <= u0)
    hat_in_tilde = bool(np.all(np.abs(zeta[hat]) >= eta))
    if not hat_in_tilde:
        log.info("S^ is not contained in S~; the U branch of the decrease argument applies")

    return SynthesisResult(
        delta=delta, eta=eta, k_star=k_star, j_star=j_star, k0=k0, kbar=kbar, j=j, u0=u0,
        zeta_tilde=zeta_tilde, dt_min=dt_min, rate_bound_quantized=rate_q,
        kbar_ternary=kbar_t, dt_min_ternary=dt_t, rate_bound_ternary=rate_t,
        bounds=bounds, b0=plant.b0, c=spec.c, d=spec.d, sigma=spec.sigma,
        hat_s_in_stilde=hat_in_tilde, grid=grid, trace=tuple(trace),
    )
