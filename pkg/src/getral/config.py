"""Run configuration and the key=value config file format.

All knobs live on :class:`TrainConfig`. Precedence when resolving a run:
explicit CLI flags beat config-file entries beat dataclass defaults.
Config files are plain ``key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    contrastive_weight: float = 0.1
    tau: float = 0.1
    epsilon: float = 1.0
    beta: float = 0.5
    discard_rate: float = 0.3
    window: int = 3
    max_claim_len: int = 30
    max_evidence_len: int = 100
    max_evidences: int = 30
    kernels: int = 11
    word_heads: int = 5
    doc_heads: int = 2
    claim_layers: int = 1
    srm_layers: int = 1
    embed_dim: int = 300
    side_dim: int = 128
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    train_embeddings: bool = True
    crossed_contextualization: bool = False
    supcon_standard_denominator: bool = False
    valid_fraction: float = 0.2

    def __post_init__(self):
        checks = [
            (self.lr >= 0, "lr must be >= 0"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.max_epochs >= 1, "max_epochs must be >= 1"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.contrastive_weight >= 0, "contrastive_weight must be >= 0"),
            (self.tau > 0, "tau must be > 0"),
            (self.epsilon > 0, "epsilon must be > 0"),
            (0.0 <= self.beta <= 1.0, "beta must be in [0, 1]"),
            (0.0 <= self.discard_rate < 1.0, "discard_rate must be in [0, 1)"),
            (self.window >= 2, "window must be >= 2"),
            (self.max_claim_len >= 1, "max_claim_len must be >= 1"),
            (self.max_evidence_len >= 1, "max_evidence_len must be >= 1"),
            (self.max_evidences >= 1, "max_evidences must be >= 1"),
            (self.kernels >= 2, "kernels must be >= 2"),
            (self.word_heads >= 1, "word_heads must be >= 1"),
            (self.doc_heads >= 1, "doc_heads must be >= 1"),
            (self.claim_layers >= 0, "claim_layers must be >= 0"),
            (self.srm_layers >= 0, "srm_layers must be >= 0"),
            (self.embed_dim >= 1, "embed_dim must be >= 1"),
            (self.side_dim >= 1, "side_dim must be >= 1"),
            (0.0 < self.valid_fraction < 1.0, "valid_fraction must be in (0, 1)"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def replace(self, **kwargs) -> "TrainConfig":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(TrainConfig)}

_TRUE_WORDS = {"true", "1", "yes", "on"}
_FALSE_WORDS = {"false", "0", "no", "off"}


def _coerce(name: str, raw: str, where: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE_WORDS:
                return True
            if low in _FALSE_WORDS:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unsupported option type for {name!r}")


def parse_config_file(path) -> dict:
    """Read `key = value` lines into a {field: value} dict."""
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            name = key.replace("-", "_")
            if name not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown option {key!r}")
            values[name] = _coerce(name, raw, f"{path}:{lineno}")
    return values


def resolve_config(file_values=None, flag_values=None) -> TrainConfig:
    """Defaults, overridden by file values, overridden by explicit flags."""
    merged = {}
    for source in (file_values or {}), (flag_values or {}):
        for name, value in source.items():
            if name not in _FIELD_TYPES:
                raise ConfigError(f"unknown option {name!r}")
            merged[name] = value
    return TrainConfig(**merged)
