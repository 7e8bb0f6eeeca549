"""Experiment configuration: one flat ``key = value`` file per run."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Optional

from lexner.corpus import DEFAULT_LABELS, TagScheme
from lexner.errors import ConfigError
from lexner.network import ModelConfig
from lexner.trainer import TrainConfig

logger = logging.getLogger(__name__)

PATH_KEYS = ("train_path", "dev_path", "test_path", "lexicon_path", "pretrained_path",
             "checkpoint_path", "output_dir", "input_path", "output_path")
MODEL_KEYS = tuple(f.name for f in fields(ModelConfig))
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))


@dataclass(frozen=True)
class AppConfig:
    train_path: Optional[str] = None
    dev_path: Optional[str] = None
    test_path: Optional[str] = None
    lexicon_path: Optional[str] = None
    pretrained_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    output_dir: Optional[str] = None
    input_path: Optional[str] = None
    output_path: Optional[str] = None
    input_format: str = "auto"
    labels: tuple = DEFAULT_LABELS
    sizes: tuple = ()
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)

    @property
    def scheme(self) -> TagScheme:
        return TagScheme(self.labels)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in PATH_KEYS + ("input_format",)}
        out["labels"] = ",".join(self.labels)
        out["sizes"] = ",".join(str(s) for s in self.sizes)
        out.update(dataclasses.asdict(self.model))
        out.update(dataclasses.asdict(self.training))
        return out

    def require(self, *keys: str, exist: bool = True) -> None:
        for key in keys:
            value = getattr(self, key)
            if value is None:
                raise ConfigError(f"{key}: required for this command but not set")
            if exist and not Path(value).exists():
                raise ConfigError(f"{key}: path does not exist: {value}")


KNOWN_KEYS = frozenset(PATH_KEYS + MODEL_KEYS + TRAIN_KEYS + ("input_format", "labels", "sizes"))


def _field_types() -> dict[str, type]:
    types = {f.name: type(f.default) for f in fields(ModelConfig)}
    types.update({f.name: type(f.default) for f in fields(TrainConfig)})
    return types


def _convert(key: str, raw: str, types: Mapping[str, type]):
    raw = raw.strip()
    if key in PATH_KEYS:
        return raw or None
    if key == "labels":
        labels = tuple(x.strip() for x in raw.split(",") if x.strip())
        if not labels:
            raise ConfigError("labels: label list is empty")
        return labels
    if key == "sizes":
        try:
            return tuple(int(x) for x in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"sizes: cannot parse {raw!r} as a list of integers") from None
    if key == "input_format":
        if raw not in ("auto", "raw", "conll"):
            raise ConfigError(f"input_format: expected auto, raw or conll, got {raw!r}")
        return raw
    kind = types[key]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{key}: unknown config key ({source}:{lineno})")
        values[key] = value
    return values


def resolve(values: Mapping[str, str]) -> AppConfig:
    """Build an :class:`AppConfig` from raw string values, defaults filling the rest."""
    types = _field_types()
    top, model, training = {}, {}, {}
    for key, raw in values.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{key}: unknown config key")
        value = _convert(key, raw, types)
        (model if key in MODEL_KEYS else training if key in TRAIN_KEYS else top)[key] = value
    try:
        model_cfg = ModelConfig(**model)
    except ValueError as err:
        raise ConfigError(f"model config: {err}") from None
    try:
        train_cfg = TrainConfig(**training)
    except ValueError as err:
        raise ConfigError(f"training config: {err}") from None
    sizes = top.get("sizes", ())
    if any(s < 1 for s in sizes) or list(sizes) != sorted(sizes):
        raise ConfigError(f"sizes: must be positive and ascending, got {list(sizes)}")
    return AppConfig(model=model_cfg, training=train_cfg, **top)


def load_config(path=None, overrides: Optional[Iterable[tuple[str, str]]] = None) -> AppConfig:
    """Read ``path`` (if given), apply ``overrides`` last, and log the resolved values."""
    values: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"config: cannot read {path}: {err.strerror}") from None
        values.update(parse_config_text(text, str(path)))
    for key, value in overrides or ():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{key}: unknown config key (command line)")
        values[key] = value
    cfg = resolve(values)
    for key, value in cfg.as_dict().items():
        logger.info("config %s = %s", key, "" if value is None else value)
    return cfg
