"""Run configuration with documented defaults."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
import json
from pathlib import Path


@dataclass(frozen=True)
class RunConfig:
    curve: str | dict = ""
    steps: int = 3
    seed: int = 0
    eta_cap: float = 0.1
    tangency: tuple = (0.0,)
    clearance: float = 1e-3
    retries: int = 64
    regular_threshold: float = 1e-4
    # base case: arc half-width (3 in the classical construction) and seed offset
    base_half_width: float = 5.0
    offset_gain: float = 1.5
    guard_scale: float = 1.75
    base_beta: float = 0.3
    arc_density: float = 40.0
    degrees: tuple = (8, 16, 32, 64)
    stages: int = 8
    max_stages: int = 64
    k_weight: float = 10.0
    fit_fraction: float = 0.05
    hull_cells: int = 401
    avoid_rho: float = 0.05
    tangency_radius: float = 0.1
    push_fraction: float = 0.25
    stability_trials: int = 4
    ball_samples: int = 2000
    escape_mode: str = "auto"
    out: str = "out"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if not 0 < self.eta_cap < 0.5:
            raise ValueError("eta_cap must lie in (0, 1/2)")
        if self.clearance <= 0:
            raise ValueError("clearance must be positive")
        if not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")

    def replace(self, **kw) -> "RunConfig":
        d = asdict(self)
        d.update(kw)
        return RunConfig(**d)

    def to_json(self) -> dict:
        d = asdict(self)
        d["tangency"] = list(self.tangency)
        d["degrees"] = list(self.degrees)
        return d

    @staticmethod
    def from_json(d: dict) -> "RunConfig":
        names = {f.name for f in fields(RunConfig)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("tangency", "degrees"):
            if key in d:
                d[key] = tuple(d[key])
        return RunConfig(**d)

    @staticmethod
    def load(path) -> "RunConfig":
        path = Path(path)
        d = json.loads(path.read_text())
        cfg = RunConfig.from_json(d)
        if isinstance(cfg.curve, str) and cfg.curve and not Path(cfg.curve).is_absolute():
            cfg = cfg.replace(curve=str((path.parent / cfg.curve).resolve()))
        return cfg
