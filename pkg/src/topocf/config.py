"""Pipeline configuration: a JSON file plus command-line overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .characteristics import DEFAULT_LOG_FEATURES, FEATURE_NAMES
from .errors import ConfigError
from .models import ModelConfig, canonical_kind
from .training import TrainConfig

RESPONSES = ("recall", "ndcg")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run depends on.

    ``model_params`` maps a model kind (or ``"*"`` for all kinds) to
    ModelConfig overrides; ``train`` holds TrainConfig overrides. ``repeats``
    trains every cell that many times on the same split with derived seeds
    and reports the mean metrics.
    """

    data: Optional[str] = None
    format: Optional[str] = None
    kcore: Optional[int] = None
    split_strategy: str = "random"
    split_ratios: tuple = (0.8, 0.1, 0.1)
    samples: int = 0
    mu_lo: float = 0.7
    mu_hi: float = 0.9
    models: tuple = ("GFCF", "LightGCN")
    model_params: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    K: int = 20
    repeats: int = 1
    log_features: tuple = DEFAULT_LOG_FEATURES
    d_min: Optional[int] = None
    response: str = "recall"
    out: str = "topocf_out"
    seed: int = 0
    jobs: int = 1
    resume: bool = False

    # fields that change how work is scheduled, not what it produces
    NON_SEMANTIC = ("out", "jobs", "resume")

    def validate(self, need_data: bool = True) -> "PipelineConfig":
        if need_data:
            if not self.data:
                raise ConfigError("no dataset given (--data)")
            if not Path(self.data).is_file():
                raise ConfigError(f"dataset not found: {self.data}")
        if self.format not in (None, "tsv", "csv"):
            raise ConfigError("format must be tsv or csv")
        if self.kcore is not None and self.kcore < 1:
            raise ConfigError("kcore must be >= 1")
        if self.split_strategy not in ("random", "temporal"):
            raise ConfigError("split_strategy must be random or temporal")
        r = tuple(float(x) for x in self.split_ratios)
        if len(r) != 3 or min(r) <= 0 or abs(sum(r) - 1) > 1e-9:
            raise ConfigError("split_ratios must be three positive numbers summing to 1")
        if self.samples < 0:
            raise ConfigError("samples must be >= 0")
        if not 0 <= self.mu_lo <= self.mu_hi < 1:
            raise ConfigError("need 0 <= mu_lo <= mu_hi < 1")
        if not self.models:
            raise ConfigError("no models selected")
        for m in self.models:
            self.model_config(canonical_kind(m))
        self.train_config()
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        unknown = set(self.log_features) - set(FEATURE_NAMES)
        if unknown:
            raise ConfigError(f"unknown log features: {sorted(unknown)}")
        if self.d_min is not None and self.d_min < 1:
            raise ConfigError("d_min must be >= 1")
        if self.response not in RESPONSES:
            raise ConfigError(f"response must be one of {RESPONSES}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    @property
    def kinds(self) -> tuple:
        return tuple(canonical_kind(m) for m in self.models)

    def model_config(self, kind: str) -> ModelConfig:
        params = dict(self.model_params.get("*", {}))
        for key, val in self.model_params.items():
            if key != "*" and canonical_kind(key) == kind:
                params.update(val)
        allowed = {f.name for f in fields(ModelConfig)} - {"kind"}
        bad = set(params) - allowed
        if bad:
            raise ConfigError(f"unknown model parameters for {kind}: {sorted(bad)}")
        try:
            return ModelConfig(kind=kind, **params).resolved()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        allowed = {f.name for f in fields(TrainConfig)}
        bad = set(self.train) - allowed
        if bad:
            raise ConfigError(f"unknown train parameters: {sorted(bad)}")
        params = dict(self.train)
        params.setdefault("eval_K", self.K)
        params.setdefault("seed", self.seed)
        return TrainConfig(**params)

    @property
    def effective_d_min(self) -> int:
        return self.d_min if self.d_min is not None else (self.kcore or 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        d["models"] = list(self.models)
        d["log_features"] = list(self.log_features)
        return d

    def semantic_dict(self) -> dict:
        d = self.to_dict()
        for k in self.NON_SEMANTIC:
            d.pop(k, None)
        if d.get("data"):
            d["data"] = Path(d["data"]).name
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.semantic_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.hash(), "version": __version__, "seed": self.seed}


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def make_config(file_values: dict, overrides: dict) -> PipelineConfig:
    """Merge file values with flag overrides (flags win) into a PipelineConfig."""
    allowed = {f.name for f in fields(PipelineConfig)}
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    bad = set(merged) - allowed
    if bad:
        raise ConfigError(f"unknown configuration keys: {sorted(bad)}")
    for key in ("split_ratios", "models", "log_features"):
        if key in merged and merged[key] is not None:
            val = merged[key]
            if isinstance(val, str):
                val = [v.strip() for v in val.split(",") if v.strip()]
            merged[key] = tuple(val)
    try:
        return PipelineConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
