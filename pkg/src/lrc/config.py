"""Run configuration: config file, LRC_* environment overrides, fingerprints.

Two fingerprints chain the pipeline artifacts together: the feature
fingerprint covers the parameters that shape feature files, and the full
fingerprint additionally covers the model parameters and seed. Loader code
rejects artifacts whose embedded fingerprint disagrees with the active
configuration.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .storage import canonical_json

ENV_PREFIX = "LRC_"


class ConfigError(ValueError):
    """Raised for unreadable or ill-typed configuration."""


@dataclass
class RunConfig:
    """Pipeline settings shared by all CLI commands."""

    manifest: str | None = None
    output: str = "out"
    roi_height: int = 32
    roi_width: int = 32
    dct_coefficients: int = 64
    temporal_window: int = 3
    viseme_count: int = 20
    lda_ridge: float | None = None
    hmm_smoothing: float = 1.0
    seed: int = 0
    jobs: int = 0
    split: str = "test"
    retrain_each_step: bool = False
    exact_permutation: bool = False
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.viseme_count <= 32:
            raise ConfigError(
                f"viseme_count must lie in [1, 32], got {self.viseme_count}"
            )
        if self.temporal_window < 1 or self.temporal_window % 2 == 0:
            raise ConfigError("temporal_window must be an odd integer >= 1")
        if self.dct_coefficients < 1:
            raise ConfigError("dct_coefficients must be positive")

    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def feature_fields(self) -> dict:
        return {
            "roi_height": self.roi_height,
            "roi_width": self.roi_width,
            "dct_coefficients": self.dct_coefficients,
            "temporal_window": self.temporal_window,
        }

    def model_fields(self) -> dict:
        out = self.feature_fields()
        out.update(
            {
                "viseme_count": self.viseme_count,
                "lda_ridge": self.lda_ridge,
                "hmm_smoothing": self.hmm_smoothing,
                "seed": self.seed,
                "retrain_each_step": self.retrain_each_step,
            }
        )
        return out

    def feature_fingerprint(self) -> str:
        return fingerprint(self.feature_fields())

    def full_fingerprint(self) -> str:
        return fingerprint(self.model_fields())

    def output_dir(self) -> Path:
        return Path(self.output)


def fingerprint(payload: dict) -> str:
    digest = hashlib.sha256(canonical_json(payload).encode("utf-8"))
    return digest.hexdigest()[:16]


def _coerce(name, value, target_type):
    if target_type is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: cannot parse boolean from {value!r}")
    if value is None or value == "":
        return None
    try:
        return target_type(value)
    except (TypeError, ValueError):
        raise ConfigError(
            f"{name}: cannot parse {target_type.__name__} from {value!r}"
        ) from None


_FIELD_TYPES = {
    "manifest": str,
    "output": str,
    "roi_height": int,
    "roi_width": int,
    "dct_coefficients": int,
    "temporal_window": int,
    "viseme_count": int,
    "lda_ridge": float,
    "hmm_smoothing": float,
    "seed": int,
    "jobs": int,
    "split": str,
    "retrain_each_step": bool,
    "exact_permutation": bool,
}


def load_config(path=None, env=None, overrides=None) -> RunConfig:
    """Assemble a RunConfig from file values, LRC_* environment variables,
    and explicit overrides, in increasing order of precedence."""
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(doc) - {f.name for f in fields(RunConfig)}
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        values.update(doc)

    env = os.environ if env is None else env
    for name, target_type in _FIELD_TYPES.items():
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = _coerce(name, env[env_key], target_type)

    if overrides:
        for name, value in overrides.items():
            if value is not None:
                values[name] = value

    synth = values.pop("synth", {})
    typed = {}
    for name, value in values.items():
        target_type = _FIELD_TYPES.get(name)
        typed[name] = _coerce(name, value, target_type) if target_type else value
    return RunConfig(synth=synth, **typed)
