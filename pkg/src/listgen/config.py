"""Experiment configuration: a flat dataclass read from ``key = value`` files."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Mapping


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # docids
    branching: int = 10
    leaf_max: int = 100
    embed_dim_docs: int = 64
    # scorer
    embed_dim: int = 32
    hidden_dim: int = 64
    vocab_size: int = 4096
    max_doc_tokens: int = 512
    # stage one
    variant: str = "listgr"
    steps: int = 2000
    base_lr: float = 1e-3
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    label_smoothing: float = 0.0
    index_batch: int = 32
    retrieval_batch: int = 32
    list_batch: int = 16
    samples_per_query: int = 10
    batch_mode: str = "round_robin"
    # stage two
    retrain_steps: int = 100
    retrain_lr: float = 1e-3
    retrain_batch: int = 8
    retrain_keep_training_terms: bool = False
    beta: float = 0.002
    margin: float = 0.001
    length_penalty: float = 0.6
    gamma: float = 100.0
    # decoding / evaluation
    beam_width: int = 20
    k: int = 20
    g_max: int = 3
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.variant not in ("listgr", "listmle", "pointwise"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.batch_mode not in ("round_robin", "mixed"):
            raise ConfigError(f"unknown batch_mode {self.batch_mode!r}")
        if not 1 <= self.k <= self.beam_width:
            raise ConfigError("k must satisfy 1 <= k <= beam_width")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must lie in (0, 1)")
        if self.steps < 0 or self.retrain_steps < 0:
            raise ConfigError("step counts must be non-negative")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in [0, 1)")

    def replace(self, **changes: Any) -> "ExperimentConfig":
        data = asdict(self)
        data.update(changes)
        return ExperimentConfig(**data)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


def _coerce(name: str, typ, raw: str):
    try:
        if typ in (bool, "bool"):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_overrides(pairs: Mapping[str, str]) -> Dict[str, Any]:
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    out = {}
    for key, raw in pairs.items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, types[key], str(raw))
    return out


def load_config(path=None, **overrides: Any) -> ExperimentConfig:
    """Read a ``key = value`` file (``#`` comments allowed), then apply overrides."""
    pairs: Dict[str, str] = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                k, v = line.split("=", 1)
                pairs[k.strip()] = v.strip()
    values = parse_overrides(pairs)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)
