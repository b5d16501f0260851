"""Declarative experiment configuration (YAML)."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .synthesis import GridPlan

KINDS = ("static-quantized", "hysteretic-quantized", "ternary")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LyapunovConstants:
    c: float = 1.0
    d: float = 1.0
    sigma: float = 0.05


@dataclass(frozen=True)
class ControllerSpec:
    kind: str = "hysteretic-quantized"
    delta: float | None = 1 / 3
    gain_margin: float = 1.0
    level_margin: int = 0
    kbar: float | None = None  # ternary gain override
    step: float | None = None  # integrator step override


@dataclass(frozen=True)
class SweepSpec:
    """Initial conditions and parameters to run.

    ``boundary_points`` places that many starts on ``W = c^2+d^2+1``; explicit
    ``points`` (``[[x...], zeta]``) are appended.  ``mu`` lists parameter vectors.
    """

    boundary_points: int = 9
    points: tuple = ()
    mu: tuple = ((0.5,), (1.0,), (1.5,))


@dataclass(frozen=True)
class ExperimentConfig:
    plant: dict = field(default_factory=lambda: {"builtin": "demo"})
    lyapunov: LyapunovConstants = LyapunovConstants()
    controller: ControllerSpec = ControllerSpec()
    grid: GridPlan = GridPlan()
    sweep: SweepSpec = SweepSpec()
    horizon: float = 3.0
    out: str = "runs"

    def __post_init__(self):
        c = self.controller
        if c.kind not in KINDS:
            raise ConfigError(f"controller.kind must be one of {KINDS}, got {c.kind!r}")
        if c.kind != "ternary":
            if c.delta is None:
                raise ConfigError("controller.delta is required for quantized controllers")
            if not 0 < c.delta < 1:
                raise ConfigError(f"controller.delta must lie in the open interval (0, 1), got {c.delta}")
        if c.gain_margin < 1 or c.level_margin < 0:
            raise ConfigError("gain_margin must be >= 1 and level_margin >= 0")
        lp = self.lyapunov
        if lp.c < 1 or lp.d < 1:
            raise ConfigError("lyapunov.c and lyapunov.d must be >= 1")
        if not 0 < lp.sigma < lp.c**2 + lp.d**2 + 1:
            raise ConfigError("lyapunov.sigma must lie in (0, c^2+d^2+1)")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not isinstance(self.plant, dict) or not self.plant:
            raise ConfigError("plant must be a mapping")

    # --- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["plant"] = copy.deepcopy(self.plant)
        d["sweep"]["points"] = [[list(x), z] for x, z in self.sweep.points]
        d["sweep"]["mu"] = [list(m) for m in self.sweep.mu]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw or {})
        unknown = set(raw) - {"plant", "lyapunov", "controller", "grid", "sweep", "horizon", "out"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        lp = raw.get("lyapunov", {})
        if "sigma" not in lp:
            raise ConfigError("lyapunov.sigma is required")
        try:
            sweep = dict(raw.get("sweep", {}))
            if "points" in sweep:
                sweep["points"] = tuple((tuple(float(v) for v in _as_list(x)), float(z))
                                        for x, z in sweep["points"])
            if "mu" in sweep:
                sweep["mu"] = tuple(tuple(float(v) for v in _as_list(m)) for m in sweep["mu"])
            return cls(
                plant=dict(raw.get("plant", {"builtin": "demo"})),
                lyapunov=LyapunovConstants(**lp),
                controller=ControllerSpec(**raw.get("controller", {})),
                grid=GridPlan(**raw.get("grid", {})),
                sweep=SweepSpec(**sweep),
                horizon=float(raw.get("horizon", 3.0)),
                out=str(raw.get("out", "runs")),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(raw)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    def synthesis_hash(self) -> str:
        """Digest of the fields that determine the synthesized constants."""
        d = self.to_dict()
        key = {k: d[k] for k in ("plant", "lyapunov", "grid")}
        key["controller"] = {k: d["controller"][k] for k in ("delta", "gain_margin", "level_margin")}
        blob = json.dumps(key, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _as_list(v):
    return v if isinstance(v, (list, tuple)) else [v]
