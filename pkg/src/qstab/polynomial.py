"""Sparse multivariate polynomials over named variables.

Plants, Lyapunov functions and the compiled simulation kernel all share this
representation: a coefficient vector plus an integer exponent matrix, one row
per monomial.  Evaluation is vectorized over the leading axis of the input.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import sympy as sp


@dataclass(frozen=True, eq=False)
class Poly:
    coefs: np.ndarray  # (T,)
    exps: np.ndarray  # (T, nvars) nonnegative int
    nvars: int

    def __post_init__(self):
        coefs = np.asarray(self.coefs, dtype=float).reshape(-1)
        exps = np.asarray(self.exps, dtype=np.int64).reshape(len(coefs), self.nvars)
        if np.any(exps < 0):
            raise ValueError("negative exponent in polynomial term")
        object.__setattr__(self, "coefs", coefs)
        object.__setattr__(self, "exps", exps)

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(np.zeros(0), np.zeros((0, nvars), dtype=np.int64), nvars)

    @classmethod
    def constant(cls, value: float, nvars: int) -> "Poly":
        return cls(np.array([float(value)]), np.zeros((1, nvars), dtype=np.int64), nvars)

    @classmethod
    def from_terms(cls, terms: Sequence, names: Sequence[str]) -> "Poly":
        """Build from ``[[coef, {name: exponent, ...}], ...]``.

        Unknown variable names raise ``ValueError`` so that typos in a config
        file do not silently drop a dependency.
        """
        index = {n: i for i, n in enumerate(names)}
        coefs, rows = [], []
        for term in terms:
            coef, powers = term
            row = [0] * len(names)
            for name, e in dict(powers or {}).items():
                if name not in index:
                    raise ValueError(f"unknown variable {name!r}; expected one of {list(names)}")
                if int(e) != e or e < 0:
                    raise ValueError(f"exponent of {name!r} must be a nonnegative integer")
                row[index[name]] += int(e)
            coefs.append(float(coef))
            rows.append(row)
        if not coefs:
            return cls.zero(len(names))
        return cls(np.array(coefs), np.array(rows, dtype=np.int64), len(names)).simplified()

    def to_terms(self, names: Sequence[str]) -> list:
        out = []
        for c, row in zip(self.coefs, self.exps):
            powers = {names[i]: int(e) for i, e in enumerate(row) if e}
            out.append([float(c), powers])
        return out

    @classmethod
    def from_sympy(cls, expr, symbols: Sequence[sp.Symbol]) -> "Poly":
        expr = sp.expand(expr)
        if expr == 0:
            return cls.zero(len(symbols))
        p = sp.Poly(expr, *symbols)
        coefs, rows = [], []
        for monom, coef in p.terms():
            coefs.append(float(coef))
            rows.append(list(monom))
        return cls(np.array(coefs), np.array(rows, dtype=np.int64), len(symbols)).simplified()

    def to_sympy(self, symbols: Sequence[sp.Symbol]):
        expr = sp.Integer(0)
        for c, row in zip(self.coefs, self.exps):
            term = sp.Float(c) if c != int(c) else sp.Integer(int(c))
            for s, e in zip(symbols, row):
                if e:
                    term = term * s ** int(e)
            expr += term
        return expr

    def simplified(self) -> "Poly":
        """Merge duplicate monomials and drop zero coefficients."""
        if len(self.coefs) == 0:
            return self
        merged: dict[tuple, float] = {}
        for c, row in zip(self.coefs, self.exps):
            key = tuple(int(e) for e in row)
            merged[key] = merged.get(key, 0.0) + float(c)
        items = [(k, c) for k, c in sorted(merged.items()) if c != 0.0]
        if not items:
            return Poly.zero(self.nvars)
        return Poly(
            np.array([c for _, c in items]),
            np.array([k for k, _ in items], dtype=np.int64),
            self.nvars,
        )

    @property
    def is_zero(self) -> bool:
        return len(self.coefs) == 0

    def degree_in(self, var: int) -> int:
        return int(self.exps[:, var].max()) if len(self.coefs) else 0

    def depends_on(self, var: int) -> bool:
        return bool(len(self.coefs)) and bool(np.any(self.exps[:, var] > 0))

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        scalar = v.ndim == 1
        v2 = np.atleast_2d(v)
        if v2.shape[-1] != self.nvars:
            raise ValueError(f"expected {self.nvars} variables, got {v2.shape[-1]}")
        out = np.zeros(v2.shape[0])
        for c, row in zip(self.coefs, self.exps):
            term = np.full(v2.shape[0], c)
            for i in np.nonzero(row)[0]:
                term = term * v2[:, i] ** row[i]
            out += term
        return out[0] if scalar else out

    def diff(self, var: int) -> "Poly":
        keep = self.exps[:, var] > 0
        if not np.any(keep):
            return Poly.zero(self.nvars)
        exps = self.exps[keep].copy()
        coefs = self.coefs[keep] * exps[:, var]
        exps[:, var] -= 1
        return Poly(coefs, exps, self.nvars).simplified()

    def embed(self, mapping: Sequence[int], nvars: int) -> "Poly":
        """Re-index variables: old variable ``k`` becomes new variable ``mapping[k]``."""
        exps = np.zeros((len(self.coefs), nvars), dtype=np.int64)
        for k, target in enumerate(mapping):
            exps[:, target] += self.exps[:, k]
        return Poly(self.coefs.copy(), exps, nvars).simplified()

    def quadratic_form(self) -> np.ndarray | None:
        """Symmetric ``P`` with ``self(x) == x^T P x`` if the polynomial is a pure quadratic form."""
        if self.is_zero or np.any(self.exps.sum(axis=1) != 2):
            return None
        P = np.zeros((self.nvars, self.nvars))
        for c, row in zip(self.coefs, self.exps):
            idx = np.nonzero(row)[0]
            if len(idx) == 1:
                P[idx[0], idx[0]] += c
            else:
                P[idx[0], idx[1]] += c / 2
                P[idx[1], idx[0]] += c / 2
        return P


def pack(polys: Sequence[Poly]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten several polynomials into one term table for the compiled kernel.

    Returns ``(coefs, exps, owner)`` where ``owner[k]`` is the index of the
    polynomial term ``k`` belongs to.
    """
    nvars = {p.nvars for p in polys}
    if len(nvars) != 1:
        raise ValueError("all packed polynomials must share one variable list")
    (nv,) = nvars
    coefs = np.concatenate([p.coefs for p in polys]) if polys else np.zeros(0)
    exps = np.concatenate([p.exps for p in polys]).astype(np.int64) if polys else np.zeros((0, nv), np.int64)
    owner = np.concatenate([np.full(len(p.coefs), k, dtype=np.int64) for k, p in enumerate(polys)])
    return coefs, exps.reshape(-1, nv), owner


def terms_mapping(terms: Mapping | Sequence) -> list:
    """Accept either a term list or a bare number (constant polynomial) from configs."""
    if isinstance(terms, (int, float)):
        return [[float(terms), {}]]
    return list(terms)
