"""Run configuration: an INI file with [model], [train] and [data] sections,
mapped onto one flat dataclass."""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from typing import Optional

from ..aes_model import AesConfig
from ..joint_model import JointConfig
from ..lc_model import LcConfig
from ..training import TrainConfig

KINDS = ("lc", "lc_mul", "aes", "joint", "joint_no_share", "joint_zero_score", "vecconcat")

SECTIONS = {
    "model": ("kind", "embedding_dim", "hidden_size", "cnn_size", "window", "dropout", "init_scale",
              "lambda_aes", "lambda_lc", "per_prompt_threshold", "alpha", "gamma"),
    "train": ("learning_rate", "epochs", "batch_size", "seed", "rmsprop_decay", "rmsprop_epsilon",
              "clip_norm", "min_count"),
    "data": ("train", "dev", "test", "synthetic_train", "synthetic_dev", "synthetic_test", "embeddings",
             "prompts", "lc_checkpoint", "aes_checkpoint"),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    kind: str = "joint"
    embedding_dim: int = 50
    hidden_size: int = 100
    cnn_size: int = 100
    window: int = 3
    dropout: float = 0.3
    init_scale: float = 0.05
    lambda_aes: float = 1.0
    lambda_lc: float = 1.0
    per_prompt_threshold: bool = False
    alpha: float = 0.1
    gamma: float = 0.1

    learning_rate: float = 0.001
    epochs: int = 60
    batch_size: int = 16
    seed: int = 1234
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-6
    clip_norm: float = 10.0
    min_count: int = 2

    train: Optional[str] = None
    dev: Optional[str] = None
    test: Optional[str] = None
    synthetic_train: Optional[str] = None
    synthetic_dev: Optional[str] = None
    synthetic_test: Optional[str] = None
    embeddings: Optional[str] = None
    prompts: Optional[str] = None
    lc_checkpoint: Optional[str] = None
    aes_checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return RunConfig(**{**self.to_dict(), **changes})

    def lc_config(self) -> LcConfig:
        return LcConfig(self.embedding_dim, self.hidden_size, self.cnn_size, self.window, self.dropout,
                        self.init_scale, "product" if self.kind == "lc_mul" else "mean")

    def aes_config(self) -> AesConfig:
        return AesConfig(self.embedding_dim, self.hidden_size, self.init_scale)

    def joint_config(self) -> JointConfig:
        lc = self.lc_config()
        lc.aggregation = "mean"
        return JointConfig(self.aes_config(), lc, share_embeddings=self.kind != "joint_no_share",
                           strategy="zero_score" if self.kind == "joint_zero_score" else "main",
                           lambda_aes=self.lambda_aes, lambda_lc=self.lambda_lc,
                           per_prompt_threshold=self.per_prompt_threshold)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.seed, self.rmsprop_decay,
                           self.rmsprop_epsilon, self.clip_norm)


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    try:
        if "bool" in ftype:
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        if "int" in ftype:
            return int(raw)
        if "float" in ftype:
            return float(raw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return raw.strip() or None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _coerce(key, raw)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser()
    d = cfg.to_dict()
    for section, keys in SECTIONS.items():
        cp[section] = {k: str(d[k]) for k in keys if d[k] is not None}
    lines = []
    for section in cp.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in cp[section].items())
        lines.append("")
    return "\n".join(lines)
