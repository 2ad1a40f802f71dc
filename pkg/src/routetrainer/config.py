"""Tunable thresholds, collected in one place and overridable from a JSON file.

Defaults here are the artifact's reference values; a deployment can override
any subset via the config file passed to the CLI or the service.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ContractViolation

DEFAULT_POI_RADIUS_M = 25.0
POI_RADIUS_RANGE_M = (10.0, 60.0)
SIMPLIFY_TOLERANCE_M = 5.0
POI_MAX_CROSS_TRACK_M = 30.0


@dataclass(frozen=True)
class EngineSettings:
    """Thresholds used by the live training state machine."""

    geofence_exit_slack_m: float = 10.0
    off_track_cross_m: float = 30.0
    off_track_fix_count: int = 3
    back_on_track_m: float = 15.0
    watermark_max_cross_m: float = 15.0
    reward_commit_m: float = 20.0
    mistake_window_m: float = 50.0
    signal_gap_s: float = 20.0
    projection_window_m: float = 100.0

    def __post_init__(self):
        if self.off_track_fix_count < 1:
            raise ContractViolation("off_track_fix_count must be >= 1")
        for name in (
            "geofence_exit_slack_m",
            "off_track_cross_m",
            "back_on_track_m",
            "watermark_max_cross_m",
            "reward_commit_m",
            "mistake_window_m",
            "signal_gap_s",
            "projection_window_m",
        ):
            if getattr(self, name) <= 0:
                raise ContractViolation(f"{name} must be > 0")


@dataclass(frozen=True)
class PolicyThresholds:
    """Knobs of the advisory adaptation policy."""

    promote_accuracy: float = 0.9
    demote_accuracy: float = 0.5
    clean_sessions: int = 2

    def __post_init__(self):
        if not 0.0 <= self.demote_accuracy <= self.promote_accuracy <= 1.0:
            raise ContractViolation("accuracy thresholds out of order")
        if self.clean_sessions < 1:
            raise ContractViolation("clean_sessions must be >= 1")


@dataclass(frozen=True)
class AppConfig:
    """Full runtime configuration for the service and CLI."""

    engine: EngineSettings = EngineSettings()
    policy: PolicyThresholds = PolicyThresholds()
    simplify_tolerance_m: float = SIMPLIFY_TOLERANCE_M
    feed_enabled: bool = True


def _merge_dataclass(cls, defaults, overrides: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ContractViolation(f"unknown config keys: {sorted(unknown)}")
    return dataclasses.replace(defaults, **overrides)


def load_config(path: str | Path | None = None) -> AppConfig:
    """Build an AppConfig, optionally overriding defaults from a JSON file.

    The file may contain any subset of:
    {"engine": {...}, "policy": {...}, "simplify_tolerance_m": x,
     "feed_enabled": bool}
    """
    cfg = AppConfig()
    if path is None:
        return cfg
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ContractViolation("config file must hold a JSON object")
    engine = _merge_dataclass(EngineSettings, cfg.engine, raw.get("engine", {}))
    policy = _merge_dataclass(PolicyThresholds, cfg.policy, raw.get("policy", {}))
    extras = set(raw) - {"engine", "policy", "simplify_tolerance_m", "feed_enabled"}
    if extras:
        raise ContractViolation(f"unknown config keys: {sorted(extras)}")
    return AppConfig(
        engine=engine,
        policy=policy,
        simplify_tolerance_m=float(raw.get("simplify_tolerance_m", cfg.simplify_tolerance_m)),
        feed_enabled=bool(raw.get("feed_enabled", cfg.feed_enabled)),
    )
