"""Uncertain plants of the form

    xdot    = F(x, mu) + G(x, mu) zeta
    zetadot = q(x, zeta, mu) + b(x, zeta, mu) u

with every map a polynomial over the variables ``x0..x{n-1}, zeta, mu0..mu{p-1}``,
plus the relative-degree normal form and its conversion to this shape.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import sympy as sp
from scipy.stats import qmc

from .lyapunov import LyapunovSpec, w_from_parts
from .polynomial import Poly, pack, terms_mapping


def variable_names(dim_x: int, dim_mu: int) -> list[str]:
    return [f"x{i}" for i in range(dim_x)] + ["zeta"] + [f"mu{i}" for i in range(dim_mu)]


@dataclass(frozen=True, eq=False)
class PlantModel:
    dim_x: int
    f_polys: tuple[Poly, ...]
    g_polys: tuple[Poly, ...]
    q_poly: Poly
    b_poly: Poly
    b0: float
    param_box: np.ndarray
    lyapunov: LyapunovSpec
    name: str = "plant"

    def __post_init__(self):
        box = np.asarray(self.param_box, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "param_box", box)
        nv = self.dim_x + 1 + self.dim_mu
        polys = [*self.f_polys, *self.g_polys, self.q_poly, self.b_poly]
        if len(self.f_polys) != self.dim_x or len(self.g_polys) != self.dim_x:
            raise ValueError("F and G need one component per x coordinate")
        if any(p.nvars != nv for p in polys):
            raise ValueError(f"plant polynomials must be over {variable_names(self.dim_x, self.dim_mu)}")
        if any(p.depends_on(self.dim_x) for p in (*self.f_polys, *self.g_polys)):
            raise ValueError("F and G may not depend on zeta")
        if not self.b0 > 0:
            raise ValueError("b0 must be positive")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("parameter box bounds out of order")
        if self.lyapunov.n != self.dim_x:
            raise ValueError("V must be a function of x only")
        mus = self.mu_sweep()
        F0 = self.F(np.zeros((len(mus), self.dim_x)), mus)
        if np.any(F0 != 0):
            raise ValueError("F(0, mu) must vanish: the origin has to be an equilibrium of xdot = F")

    @property
    def dim_mu(self) -> int:
        return np.asarray(self.param_box).reshape(-1, 2).shape[0]

    @property
    def names(self) -> list[str]:
        return variable_names(self.dim_x, self.dim_mu)

    def variables(self, x, zeta, mu) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x = x.reshape(-1, 1) if (self.dim_x == 1 and x.ndim <= 1) else np.atleast_2d(x)
        N = x.shape[0]
        z = np.broadcast_to(np.asarray(zeta, dtype=float), (N,))
        m = np.asarray(mu, dtype=float).reshape(-1, self.dim_mu) if self.dim_mu else np.zeros((1, 0))
        m = np.broadcast_to(m, (N, self.dim_mu))
        return np.column_stack([x, z, m])

    def F(self, x, mu) -> np.ndarray:
        v = self.variables(x, 0.0, mu)
        return np.column_stack([p(v) for p in self.f_polys])

    def G(self, x, mu) -> np.ndarray:
        v = self.variables(x, 0.0, mu)
        return np.column_stack([p(v) for p in self.g_polys])

    def q(self, x, zeta, mu) -> np.ndarray:
        return self.q_poly(self.variables(x, zeta, mu))

    def b(self, x, zeta, mu) -> np.ndarray:
        return self.b_poly(self.variables(x, zeta, mu))

    def mu_sweep(self) -> np.ndarray:
        """Box corners followed by the center; shape ``(2**p + 1, p)``."""
        box = self.param_box
        if len(box) == 0:
            return np.zeros((1, 0))
        corners = np.array(list(itertools.product(*box)), dtype=float)
        return np.vstack([corners, box.mean(axis=1)])

    def kernel_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Term table ``[F_0..F_{n-1}, G_0..G_{n-1}, q, b, V]`` for the compiled integrator."""
        nv = self.dim_x + 1 + self.dim_mu
        V = self.lyapunov.V.embed(list(range(self.dim_x)), nv)
        return pack([*self.f_polys, *self.g_polys, self.q_poly, self.b_poly, V])

    def with_q(self, q_poly: Poly, name: str | None = None) -> "PlantModel":
        return PlantModel(self.dim_x, self.f_polys, self.g_polys, q_poly, self.b_poly, self.b0,
                          self.param_box, self.lyapunov, name or self.name)

    def with_lyapunov(self, spec: LyapunovSpec) -> "PlantModel":
        return PlantModel(self.dim_x, self.f_polys, self.g_polys, self.q_poly, self.b_poly, self.b0,
                          self.param_box, spec, self.name)


def sample_box(plant: PlantModel, n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scrambled Sobol points in the box enclosing the domain of W, times the parameter box.

    The first ``n`` points for a given seed are a prefix of the first ``2n``,
    so refining a grid only ever adds points.
    """
    spec = plant.lyapunov
    dim = plant.dim_x + 1 + plant.dim_mu
    u = qmc.Sobol(dim, scramble=True, seed=seed).random(n)
    ext = np.asarray(spec.x_extent)
    x = (2 * u[:, : plant.dim_x] - 1) * ext
    zeta = (2 * u[:, plant.dim_x] - 1) * spec.zeta_extent
    box = plant.param_box
    mu = box[:, 0] + u[:, plant.dim_x + 1:] * (box[:, 1] - box[:, 0])
    return x, zeta, mu


def ulp_spot_check(plant: PlantModel, n: int = 4096, seed: int = 0) -> bool:
    """Sampled check that ``dV/dx F(x, mu) < 0`` on ``{V <= c+1}`` minus the origin."""
    spec = plant.lyapunov
    x, _, mu = sample_box(plant, n, seed)
    V = spec.V(x)
    keep = (V <= spec.c + 1) & np.any(x != 0, axis=1)
    x, mu = x[keep], mu[keep]
    vals = np.sum(spec.grad(x) * plant.F(x, mu), axis=1)
    return bool(np.all(vals < 0))


def builtin_demo_plant(sigma: float = 0.05, q_zero: bool = False) -> PlantModel:
    """``xdot = -x + zeta``, ``zetadot = mu zeta + u`` with ``mu in [0.5, 1.5]``, ``V = x^2``."""
    names = variable_names(1, 1)
    F = Poly.from_terms([[-1.0, {"x0": 1}]], names)
    G = Poly.from_terms([[1.0, {}]], names)
    q = Poly.zero(3) if q_zero else Poly.from_terms([[1.0, {"mu0": 1, "zeta": 1}]], names)
    b = Poly.constant(1.0, 3)
    spec = LyapunovSpec(Poly.from_terms([[1.0, {"x0": 2}]], ["x0"]), c=1.0, d=1.0, sigma=sigma)
    name = "demo_q0" if q_zero else "demo"
    return PlantModel(1, (F,), (G,), q, b, 1.0, np.array([[0.5, 1.5]]), spec, name)


# --- relative-degree normal form -------------------------------------------


def routh_hurwitz(coeffs: Sequence[float]) -> bool:
    """Routh test for ``coeffs[0] s^m + ... + coeffs[m]``: all roots in the open left half plane."""
    c = np.asarray(coeffs, dtype=float)
    if c[0] < 0:
        c = -c
    m = len(c) - 1
    if m == 0:
        return True
    if np.any(c <= 0):
        return False
    rows = [c[0::2].copy(), c[1::2].copy()]
    width = len(rows[0])
    rows = [np.pad(r, (0, width - len(r))) for r in rows]
    for _ in range(m - 1):
        a, b = rows[-2], rows[-1]
        if b[0] == 0:
            return False
        nxt = np.zeros(width)
        nxt[:-1] = (b[0] * a[1:] - a[0] * b[1:]) / b[0]
        rows.append(nxt)
    return bool(all(r[0] > 0 for r in rows))


@dataclass(frozen=True, eq=False)
class NormalFormPlant:
    """``zdot = f(z, xi1)``, ``xi_i' = xi_{i+1}``, ``xi_r' = qbar(z, xi) + bbar(z, xi) u``.

    ``f`` components are polynomials over ``z0.., xi1``; ``q_bar`` and ``b_bar``
    over ``z0.., xi1..xi_r``.  ``a`` is the row vector of the auxiliary law
    ``xi_r = -a xi`` on ``xi = (xi1..xi_{r-1})``.
    """

    dim_z: int
    r: int
    f: tuple[Poly, ...]
    q_bar: Poly
    b_bar: Poly
    a: tuple[float, ...]
    b0: float = 1.0
    lyapunov: LyapunovSpec | None = field(default=None)
    name: str = "normal_form"

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("relative degree must be >= 1")
        if len(self.a) != self.r - 1:
            raise ValueError(f"a must have length r-1 = {self.r - 1}")
        if len(self.f) != self.dim_z:
            raise ValueError("f needs one component per z coordinate")
        if any(p.nvars != self.dim_z + 1 for p in self.f):
            raise ValueError("f must be a polynomial over (z, xi1)")
        if any(p.nvars != self.dim_z + self.r for p in (self.q_bar, self.b_bar)):
            raise ValueError("q_bar and b_bar must be polynomials over (z, xi1..xi_r)")
        if self.r >= 2 and not routh_hurwitz([1.0, *reversed(self.a)]):
            raise ValueError(f"a = {list(self.a)} does not make the xi-chain Hurwitz")

    @property
    def dim_x(self) -> int:
        return self.dim_z + self.r - 1

    def chain_matrix(self) -> np.ndarray:
        """Companion matrix of ``xi' = A xi`` under ``xi_r = -a xi``."""
        m = self.r - 1
        A = np.zeros((m, m))
        A[np.arange(m - 1), np.arange(1, m)] = 1.0
        if m:
            A[-1, :] = -np.asarray(self.a)
        return A

    def to_shifted(self, z, xi):
        """Original coordinates ``(z, xi1..xi_r)`` to ``(x, zeta)``; batched over rows."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        head = xi[:, : self.r - 1]
        zeta = xi[:, -1] + head @ np.asarray(self.a, dtype=float)
        return np.column_stack([z, head]), zeta

    def from_shifted(self, x, zeta):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
        head = x[:, self.dim_z:]
        xi_r = zeta - head @ np.asarray(self.a, dtype=float)
        return x[:, : self.dim_z], np.column_stack([head, xi_r])

    def rhs(self, z, xi, u):
        """Right-hand side in original coordinates (single point)."""
        z = np.asarray(z, dtype=float).reshape(-1)
        xi = np.asarray(xi, dtype=float).reshape(-1)
        zf = np.concatenate([z, xi[:1]])
        zd = np.array([p(zf) for p in self.f])
        full = np.concatenate([z, xi])
        xid = np.concatenate([xi[1:], [self.q_bar(full) + self.b_bar(full) * u]])
        return zd, xid


def _default_lyapunov(F: Sequence[Poly], n: int, c=1.0, d=1.0, sigma=0.05) -> LyapunovSpec:
    """Quadratic V from the Lyapunov equation of the linear part of F."""
    A = np.zeros((n, n))
    for i, p in enumerate(F):
        for coef, row in zip(p.coefs, p.exps):
            if row[:n].sum() == 1 and row[n:].sum() == 0:
                A[i, int(np.argmax(row[:n]))] += coef
    P = scipy.linalg.solve_continuous_lyapunov(A.T, -np.eye(n))
    P = (P + P.T) / 2
    names = [f"x{i}" for i in range(n)]
    terms = [[P[i, i], {names[i]: 2}] for i in range(n)]
    terms += [[2 * P[i, k], {names[i]: 1, names[k]: 1}] for i in range(n) for k in range(i + 1, n)]
    return LyapunovSpec(Poly.from_terms(terms, names), c=c, d=d, sigma=sigma)


def normal_form_to_plant(nf: NormalFormPlant) -> PlantModel:
    m, r = nf.dim_z, nf.r
    n = nf.dim_x
    z = sp.symbols(f"z0:{m}") if m else ()
    xi = sp.symbols(f"xi1:{r + 1}")
    zeta = sp.Symbol("zeta")
    xs = sp.symbols(f"x0:{n}") if n else ()
    gens = (*xs, zeta)
    a = [sp.nsimplify(v) if float(v).is_integer() else sp.Float(v) for v in nf.a]

    # xi_r = zeta - a xi in terms of the new coordinates x = (z, xi1..xi_{r-1})
    head = list(xs[m:])
    shift = sum((ai * s for ai, s in zip(a, head)), sp.Integer(0))
    subs = {**dict(zip(z, xs[:m])), **dict(zip(xi[: r - 1], head)), xi[r - 1]: zeta - shift}
    qbar = nf.q_bar.to_sympy([*z, *xi]).subs(subs, simultaneous=True)
    bbar = nf.b_bar.to_sympy([*z, *xi]).subs(subs, simultaneous=True)

    if r == 1:
        F, G = [], []
        for p in nf.f:
            e = p.to_sympy([*z, xi[0]]).subs(dict(zip(z, xs)), simultaneous=True)
            e = sp.expand(e.subs(xi[0], zeta))
            g = sp.diff(e, zeta)
            if sp.diff(g, zeta) != 0:
                raise ValueError("with relative degree one, f must be affine in xi1")
            F.append(sp.expand(e.subs(zeta, 0)))
            G.append(g)
        q = qbar
    else:
        F = [p.to_sympy([*z, xi[0]]).subs({**dict(zip(z, xs[:m])), xi[0]: head[0]}, simultaneous=True)
             for p in nf.f]
        chain = head[1:] + [-shift]
        F += chain
        G = [sp.Integer(0)] * (n - 1) + [sp.Integer(1)]
        # zeta' = a xi' + xi_r', with xi_{r-1}' = xi_r = zeta - a xi
        xidot = head[1:] + [zeta - shift]
        q = qbar + sum((ai * d for ai, d in zip(a, xidot)), sp.Integer(0))

    conv = [Poly.from_sympy(e, gens) for e in (*F, *G, q, bbar)]
    spec = nf.lyapunov or _default_lyapunov(conv[:n], n)
    return PlantModel(n, tuple(conv[:n]), tuple(conv[n: 2 * n]), conv[2 * n], conv[2 * n + 1],
                      nf.b0, np.zeros((0, 2)), spec, nf.name)


def chain_demo(sigma: float = 0.05) -> NormalFormPlant:
    """``zdot = -z + xi1``, ``xi1' = xi2``, ``xi2' = u`` with ``a = [1]``."""
    f = (Poly.from_terms([[-1.0, {"z0": 1}], [1.0, {"xi1": 1}]], ["z0", "xi1"]),)
    q_bar = Poly.zero(3)
    b_bar = Poly.constant(1.0, 3)
    nf = NormalFormPlant(1, 2, f, q_bar, b_bar, (1.0,), b0=1.0, name="chain2")
    F = normal_form_to_plant(nf)
    spec = _default_lyapunov(F.f_polys, F.dim_x, sigma=sigma)
    return NormalFormPlant(1, 2, f, q_bar, b_bar, (1.0,), b0=1.0, lyapunov=spec, name="chain2")


def cube_radii(nf: NormalFormPlant, plant: PlantModel, n: int = 4096, seed: int = 0) -> tuple[float, float]:
    """``(R, eps)`` in original coordinates.

    ``R`` is the largest half-side of an origin-centered cube mapped into the
    operating set ``W <= c^2+d^2+1``; ``eps`` is the smallest half-side of a cube
    containing the sampled target set ``W <= sigma``.
    """
    spec = plant.lyapunov
    dim = nf.dim_z + nf.r
    u = 2 * qmc.Sobol(dim, scramble=True, seed=seed).random(n) - 1
    # push samples to the cube surface, plus the vertices
    surf = u / np.max(np.abs(u), axis=1, keepdims=True)
    verts = np.array(list(itertools.product([-1.0, 1.0], repeat=dim)))
    surf = np.vstack([surf, verts])

    def inside(R):
        pts = R * surf
        x, zeta = nf.to_shifted(pts[:, : nf.dim_z], pts[:, nf.dim_z:])
        W = w_from_parts(spec.V(x), zeta, spec.c, spec.d)
        return bool(np.all(W <= spec.outer))

    lo, hi = 0.0, float(max(spec.x_extent) + spec.zeta_extent) * 4
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if inside(mid) else (lo, mid)
    R = lo

    x, zeta, _ = sample_box(plant, 4 * n, seed)
    W = w_from_parts(spec.V(x), zeta, spec.c, spec.d)
    keep = W <= spec.sigma
    zz, xi = nf.from_shifted(x[keep], zeta[keep])
    eps = float(np.max(np.abs(np.column_stack([zz, xi])))) if np.any(keep) else 0.0
    return R, eps


# --- declarative descriptions ------------------------------------------------


def plant_from_description(desc: dict, c: float = 1.0, d: float = 1.0, sigma: float = 0.05) -> PlantModel:
    """Build a plant from a config mapping.

    Either ``{"builtin": "demo" | "demo_q0" | "chain2"}``, a ``normal_form``
    block, or explicit ``dim_x``, ``param_box``, ``b0``, ``F``, ``G``, ``q``,
    ``b``, ``V`` term lists.  Terms are ``[coef, {variable: exponent}]``.
    """
    if "builtin" in desc:
        name = desc["builtin"]
        if name in ("demo", "demo_q0"):
            p = builtin_demo_plant(sigma=sigma, q_zero=name == "demo_q0")
            return p.with_lyapunov(LyapunovSpec(p.lyapunov.V, c=c, d=d, sigma=sigma))
        if name == "chain2":
            p = normal_form_to_plant(chain_demo(sigma=sigma))
            s = p.lyapunov
            return p.with_lyapunov(LyapunovSpec(s.V, c=c, d=d, sigma=sigma))
        raise ValueError(f"unknown builtin plant {name!r}")
    if "normal_form" in desc:
        nf = normal_form_from_description(desc["normal_form"], c, d, sigma)
        return normal_form_to_plant(nf)
    n = int(desc["dim_x"])
    box = np.asarray(desc.get("param_box", []), dtype=float).reshape(-1, 2)
    names = variable_names(n, len(box))
    xnames = names[:n]
    F = tuple(Poly.from_terms(terms_mapping(t), names) for t in desc["F"])
    G = tuple(Poly.from_terms(terms_mapping(t), names) for t in desc["G"])
    q = Poly.from_terms(terms_mapping(desc.get("q", [])), names)
    b = Poly.from_terms(terms_mapping(desc["b"]), names)
    V = Poly.from_terms(terms_mapping(desc["V"]), xnames)
    spec = LyapunovSpec(V, c=c, d=d, sigma=sigma, x_extent=desc.get("x_extent"))
    return PlantModel(n, F, G, q, b, float(desc["b0"]), box, spec, desc.get("name", "plant"))


def normal_form_from_description(desc: dict, c=1.0, d=1.0, sigma=0.05) -> NormalFormPlant:
    m, r = int(desc["dim_z"]), int(desc["r"])
    znames = [f"z{i}" for i in range(m)]
    f = tuple(Poly.from_terms(terms_mapping(t), znames + ["xi1"]) for t in desc["f"])
    full = znames + [f"xi{i}" for i in range(1, r + 1)]
    q_bar = Poly.from_terms(terms_mapping(desc.get("q_bar", [])), full)
    b_bar = Poly.from_terms(terms_mapping(desc["b_bar"]), full)
    spec = None
    if "V" in desc:
        xn = [f"x{i}" for i in range(m + r - 1)]
        spec = LyapunovSpec(Poly.from_terms(terms_mapping(desc["V"]), xn), c=c, d=d, sigma=sigma,
                            x_extent=desc.get("x_extent"))
    nf = NormalFormPlant(m, r, f, q_bar, b_bar, tuple(float(v) for v in desc.get("a", [])),
                         float(desc.get("b0", 1.0)), spec, desc.get("name", "normal_form"))
    if spec is None:
        plant = normal_form_to_plant(nf)
        spec = _default_lyapunov(plant.f_polys, plant.dim_x, c=c, d=d, sigma=sigma)
        nf = NormalFormPlant(m, r, f, q_bar, b_bar, nf.a, nf.b0, spec, nf.name)
    return nf


def plant_to_description(plant: PlantModel) -> dict:
    names = plant.names
    return {
        "name": plant.name,
        "dim_x": plant.dim_x,
        "param_box": plant.param_box.tolist(),
        "b0": plant.b0,
        "F": [p.to_terms(names) for p in plant.f_polys],
        "G": [p.to_terms(names) for p in plant.g_polys],
        "q": plant.q_poly.to_terms(names),
        "b": plant.b_poly.to_terms(names),
        "V": plant.lyapunov.V.to_terms(names[: plant.dim_x]),
        "x_extent": list(plant.lyapunov.x_extent),
    }
