"""Evaluation protocol parameters, loadable from a flat JSON file."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .efficiency import GPU_POLICIES
from .metrics import HDOptions, LevelWeights
from .ranking import MISSING_POLICIES
from .regions import DEFAULT_CLOSING_RADIUS, DEFAULT_THRESHOLD_HU

LUNG_SOURCES = ("external", "extract")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    weight_branch: float = 0.8
    weight_main: float = 0.2
    alpha: float = 0.05
    hd_surface: bool = True
    hd_pooled: bool = False
    lung_source: str = "external"
    threshold_hu: float = DEFAULT_THRESHOLD_HU
    closing_radius: int = DEFAULT_CLOSING_RADIUS
    missing_policy: str = "worst"
    gpu_policy: str = "mean_of_max"
    threads: int = 1

    def __post_init__(self):
        try:
            LevelWeights(self.weight_branch, self.weight_main)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        for name, value, allowed in (
            ("lung_source", self.lung_source, LUNG_SOURCES),
            ("missing_policy", self.missing_policy, MISSING_POLICIES),
            ("gpu_policy", self.gpu_policy, GPU_POLICIES),
        ):
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.closing_radius < 0:
            raise ConfigError("closing_radius must be >= 0")

    @property
    def weights(self) -> LevelWeights:
        return LevelWeights(self.weight_branch, self.weight_main)

    @property
    def hd_options(self) -> HDOptions:
        return HDOptions(surface=self.hd_surface, pooled=self.hd_pooled)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **overrides) -> EvalConfig:
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return replace(self, **{k: v for k, v in overrides.items() if v is not None})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None = None, **overrides) -> EvalConfig:
    """Defaults, then the JSON file, then non-None ``overrides``."""
    base = EvalConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a flat JSON object")
        base = base.with_overrides(**data)
    return base.with_overrides(**overrides)
