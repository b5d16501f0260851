"""Composite Lyapunov function W(x, zeta) and the sets built from its sublevels.

    W(x, zeta) = c V(x) / (c + 1 - V(x)) + d zeta^2 / (d + 1 - zeta^2)

Every function here is vectorized: ``x`` may be a single point of shape
``(n,)`` or a batch ``(N, n)``; scalars in, scalars out.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .polynomial import Poly


class DomainError(ValueError):
    """Point outside ``{V < c+1} x {zeta^2 < d+1}``, where W is undefined."""


@dataclass(frozen=True, eq=False)
class LyapunovSpec:
    V: Poly
    c: float = 1.0
    d: float = 1.0
    sigma: float = 0.05
    x_extent: tuple | None = None  # half-widths of a box containing {V <= c+1}

    def __post_init__(self):
        if self.c < 1 or self.d < 1:
            raise ValueError("c and d must be >= 1")
        if not 0 < self.sigma < self.outer:
            raise ValueError(f"sigma must lie in (0, c^2+d^2+1 = {self.outer})")
        if abs(self.V(np.zeros(self.V.nvars))) > 0:
            raise ValueError("V(0) must be 0")
        if self.x_extent is None:
            P = self.V.quadratic_form()
            if P is None:
                raise ValueError("x_extent is required when V is not a quadratic form")
            if np.any(np.linalg.eigvalsh(P) <= 0):
                raise ValueError("quadratic V must be positive definite")
            ext = np.sqrt((self.c + 1) * np.diag(np.linalg.inv(P)))
            object.__setattr__(self, "x_extent", tuple(float(e) for e in ext))
        else:
            object.__setattr__(self, "x_extent", tuple(float(e) for e in self.x_extent))

    @property
    def n(self) -> int:
        return self.V.nvars

    @property
    def outer(self) -> float:
        return self.c**2 + self.d**2 + 1

    @property
    def zeta_extent(self) -> float:
        return float(np.sqrt(self.d + 1))

    @cached_property
    def _grad_polys(self) -> tuple[Poly, ...]:
        return tuple(self.V.diff(i) for i in range(self.n))

    def value(self, x) -> np.ndarray:
        return self.V(_points(x, self.n))

    def grad(self, x) -> np.ndarray:
        pts = _points(x, self.n)
        return np.stack([g(pts) for g in self._grad_polys], axis=-1)


@dataclass(frozen=True)
class RegionTag:
    """Set membership flags; each field is a bool or a boolean array."""

    inside_sigma: np.ndarray
    in_s: np.ndarray
    in_u: np.ndarray
    in_stilde: np.ndarray
    outside: np.ndarray
    omega_minus: np.ndarray
    omega_zero: np.ndarray
    omega_plus: np.ndarray


def _points(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if n == 1 and x.ndim <= 1:
        return x.reshape(-1, 1)
    return np.atleast_2d(x)


def _squeeze(a: np.ndarray, like) -> np.ndarray | float:
    return float(a[0]) if np.ndim(like) == 0 else a


def w_from_parts(V, zeta, c: float, d: float) -> np.ndarray:
    """W from precomputed V values; ``inf`` outside the domain."""
    V = np.asarray(V, dtype=float)
    z2 = np.asarray(zeta, dtype=float) ** 2
    ok = (V < c + 1) & (z2 < d + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        W = c * V / (c + 1 - V) + d * z2 / (d + 1 - z2)
    return np.where(ok, W, np.inf)


def eval_W(x, zeta, spec: LyapunovSpec):
    V = spec.value(x)
    z = np.broadcast_to(np.asarray(zeta, dtype=float), V.shape)
    W = w_from_parts(V, z, spec.c, spec.d)
    if not np.all(np.isfinite(W)):
        raise DomainError("W evaluated outside {V < c+1} x {zeta^2 < d+1}")
    return _squeeze(W, zeta)


def classify(x, zeta, eta: float, spec: LyapunovSpec) -> RegionTag:
    if not eta > 0:
        raise ValueError("eta must be positive")
    W = np.asarray(eval_W(x, zeta, spec))
    az = np.abs(np.asarray(zeta, dtype=float))
    z = np.asarray(zeta, dtype=float)
    in_omega = W <= spec.outer
    in_s = (W >= spec.sigma) & in_omega
    in_u = in_s & (az < eta)
    return RegionTag(
        inside_sigma=W < spec.sigma,
        in_s=in_s,
        in_u=in_u,
        in_stilde=in_s & ~in_u,
        outside=~in_omega,
        omega_minus=in_omega & (z >= eta),
        omega_zero=in_omega & (az < eta),
        omega_plus=in_omega & (z <= -eta),
    )


def _plant_terms(x, zeta, mu, plant, spec: LyapunovSpec):
    pts = _points(x, spec.n)
    z = np.broadcast_to(np.asarray(zeta, dtype=float), (pts.shape[0],)).copy()
    V = spec.V(pts)
    if np.any(V >= spec.c + 1) or np.any(z**2 >= spec.d + 1):
        raise DomainError("point outside the domain of W")
    dV = spec.grad(pts)
    F = plant.F(pts, mu)
    G = plant.G(pts, mu)
    q = plant.q(pts, z, mu)
    b = plant.b(pts, z, mu)
    kx = spec.c * (spec.c + 1) / (spec.c + 1 - V) ** 2
    kz = spec.d * (spec.d + 1) / (spec.d + 1 - z**2) ** 2
    return pts, z, dV, F, G, q, b, kx, kz


def coupling_w(x, zeta, mu, plant, spec: LyapunovSpec):
    _, _, dV, _, G, q, _, kx, kz = _plant_terms(x, zeta, mu, plant, spec)
    w = kx * np.sum(dV * G, axis=-1) + 2 * kz * q
    return _squeeze(w, zeta)


def wdot(x, zeta, mu, u, plant, spec: LyapunovSpec):
    """Exact derivative of W along ``xdot = F + G zeta``, ``zetadot = q + b u``.

    ``u`` is the applied input (for the quantized loop ``u = -psi(kbar zeta)``).
    """
    _, z, dV, F, G, q, b, kx, kz = _plant_terms(x, zeta, mu, plant, spec)
    xdot = F + G * z[:, None]
    zdot = q + b * np.asarray(u, dtype=float)
    out = kx * np.sum(dV * xdot, axis=-1) + 2 * kz * z * zdot
    return _squeeze(out, zeta)


def flow(x, zeta, mu, u, plant, spec: LyapunovSpec):
    """Closed-loop vector field ``(xdot, zetadot)`` for a fixed input value."""
    pts = _points(x, spec.n)
    z = np.broadcast_to(np.asarray(zeta, dtype=float), (pts.shape[0],))
    xdot = plant.F(pts, mu) + plant.G(pts, mu) * z[:, None]
    zdot = plant.q(pts, z, mu) + plant.b(pts, z, mu) * np.asarray(u, dtype=float)
    return xdot, zdot
