"""Pipeline configuration: defaults, key=value files, and flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError


def _parse_int_tuple(text: str):
    return tuple(int(x) for x in text.split(","))


def _parse_float_tuple(text: str):
    return tuple(float(x) for x in text.split(","))


def _parse_tiers(text: str):
    tiers = []
    for part in text.split(","):
        k, pix, rel = part.split(":")
        tiers.append((int(k), float(pix), float(rel)))
    return tuple(tiers)


def _parse_bool(text: str):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "stage_counts": _parse_int_tuple,
    "interval_multipliers": _parse_float_tuple,
    "group_counts": _parse_int_tuple,
    "channels": _parse_int_tuple,
    "smoothing_radii": _parse_int_tuple,
    "fusion_tiers": _parse_tiers,
    "lambda_edge": float,
    "keep_fraction": float,
    "gamma": float,
    "conf_min": float,
    "mono_a": float,
    "mono_b": float,
    "mono_noise": float,
    "pair_count": int,
    "seed": int,
    "window": int,
    "enable_cvpe": _parse_bool,
    "enable_dynamic_sampling": _parse_bool,
    "enable_mono_fusion": _parse_bool,
    "scene": str,
    "out_dir": str,
}


@dataclass(frozen=True)
class PipelineConfig:
    """Full run configuration; defaults follow the reference operating point."""

    stage_counts: tuple = (8, 8, 4, 4)
    interval_multipliers: tuple = (0.5, 0.5, 0.5, 0.5)
    group_counts: tuple = (8, 8, 4, 4)
    channels: tuple = (16, 8, 8, 4)
    lambda_edge: float = 0.3
    keep_fraction: float = 0.8
    gamma: float = 0.1
    pair_count: int = 128
    seed: int = 0
    window: int = 8
    smoothing_radii: tuple = (1, 1, 1)
    fusion_tiers: tuple = ((2, 1.0, 0.01), (3, 2.0, 0.02))
    conf_min: float = 0.3
    mono_a: float = 1.0
    mono_b: float = 0.0
    mono_noise: float = 0.0
    enable_cvpe: bool = True
    enable_dynamic_sampling: bool = True
    enable_mono_fusion: bool = True
    scene: str = ""
    out_dir: str = "out"

    def __post_init__(self):
        for name in ("stage_counts", "interval_multipliers", "group_counts", "channels"):
            if len(getattr(self, name)) != 4:
                raise ConfigError(f"{name} must list 4 stages, got {getattr(self, name)}")
        if any(c < 2 for c in self.stage_counts):
            raise ConfigError(f"stage_counts entries must be >= 2: {self.stage_counts}")
        if any(m <= 0 for m in self.interval_multipliers):
            raise ConfigError("interval_multipliers must be positive")
        for c, g in zip(self.channels, self.group_counts):
            if g < 1 or c % g:
                raise ConfigError(
                    f"channels {self.channels} not divisible by groups {self.group_counts}"
                )
        if not (0 < self.lambda_edge <= 1):
            raise ConfigError(f"lambda_edge must be in (0, 1], got {self.lambda_edge}")
        if not (0 < self.keep_fraction <= 1):
            raise ConfigError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if self.gamma < 0 or self.pair_count < 0:
            raise ConfigError("gamma and pair_count must be non-negative")
        if not (0 <= self.conf_min <= 1):
            raise ConfigError(f"conf_min must be in [0, 1], got {self.conf_min}")
        if len(self.smoothing_radii) != 3 or any(r < 0 for r in self.smoothing_radii):
            raise ConfigError(f"smoothing_radii must be 3 non-negative ints: {self.smoothing_radii}")
        if self.mono_a <= 0 or self.mono_noise < 0:
            raise ConfigError("mono_a must be positive and mono_noise non-negative")
        for tier in self.fusion_tiers:
            if len(tier) != 3 or tier[0] < 1 or tier[1] <= 0 or tier[2] <= 0:
                raise ConfigError(f"bad fusion tier {tier}")


_FIELD_NAMES = {f.name for f in fields(PipelineConfig)}


def parse_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, updated from a key=value file, then from explicit overrides.

    Raises ConfigError naming the offending key (and line, for files).
    """
    values: dict = {}
    if path is not None:
        with open(path, "r", encoding="ascii") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, text = (part.strip() for part in line.split("=", 1))
                if key not in _FIELD_NAMES:
                    raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
                try:
                    values[key] = _PARSERS[key](text)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {exc}") from exc
    if overrides:
        for key, value in overrides.items():
            if key not in _FIELD_NAMES:
                raise ConfigError(f"unknown config key '{key}'")
            if value is not None:
                values[key] = value
    return PipelineConfig(**values)
