"""Plain-text ``key=value`` experiment configuration.

One pair per line; ``#`` starts a comment. Every :class:`TrainConfig` field,
the target-shift fields and the data / output paths are accepted. Unknown or
repeated keys are rejected with the offending line number, and keys left out
fall back to their defaults with a logged notice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import FAMILY_KINDS, ShiftSpec
from .trainer import TrainConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


_PATH_DEFAULTS = {
    "train_images": "data/mnist5k/images-idx3-ubyte.gz",
    "train_labels": "data/mnist5k/labels-idx1-ubyte.gz",
    "n_train": 2000,
    "n_eval": 1000,
    "out_dir": "runs/default",
}

_SHIFT_DEFAULTS = {"shift_family": "weather", "shift_kind": "fog", "shift_severity": 3}


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    train_images: str = _PATH_DEFAULTS["train_images"]
    train_labels: str = _PATH_DEFAULTS["train_labels"]
    n_train: int = _PATH_DEFAULTS["n_train"]
    n_eval: int = _PATH_DEFAULTS["n_eval"]
    out_dir: str = _PATH_DEFAULTS["out_dir"]
    shift_family: str = _SHIFT_DEFAULTS["shift_family"]
    shift_kind: str = _SHIFT_DEFAULTS["shift_kind"]
    shift_severity: int = _SHIFT_DEFAULTS["shift_severity"]

    @property
    def shift(self) -> ShiftSpec:
        """The extra target shift evaluated next to the fixed suite."""
        return ShiftSpec(self.shift_family, self.shift_severity, self.shift_kind)

    def as_items(self) -> list[tuple[str, object]]:
        items = list(self.train.as_dict().items())
        items += [(k, getattr(self, k)) for k in (*_PATH_DEFAULTS, *_SHIFT_DEFAULTS)]
        return items

    def dumps(self) -> str:
        """Resolved snapshot; feeding it back to :func:`parse` reproduces the config."""
        lines = ["# resolved experiment configuration"]
        lines += [f"{k}={_format(v)}" for k, v in self.as_items()]
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(raw: str, kind, key: str, lineno: int):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} expects {kind.__name__}, got {raw!r}") from None


def _schema() -> dict[str, type]:
    types = {"float": float, "int": int, "bool": bool, "str": str}
    schema = {f.name: types[f.type] for f in fields(TrainConfig)}
    schema.update({k: type(v) for k, v in _PATH_DEFAULTS.items()})
    schema.update({k: type(v) for k, v in _SHIFT_DEFAULTS.items()})
    return schema


def parse(text: str, source: str = "<config>", overrides: dict | None = None) -> ExperimentConfig:
    """Parse config text; ``overrides`` (already typed) win over file values."""
    schema = _schema()
    values: dict[str, object] = {}
    where: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}: line {lineno}: expected key=value, got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in schema:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}: line {lineno}: {key!r} already set on line {where[key]}")
        try:
            values[key] = _coerce(raw, schema[key], key, lineno)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from None
        where[key] = lineno
    values.update(overrides or {})
    defaulted = [key for key in schema if key not in values]
    if defaulted:
        log.info("config %s: using defaults for %s", source, ", ".join(defaulted))

    train_keys = set(TrainConfig.field_names())
    try:
        train = TrainConfig(**{k: v for k, v in values.items() if k in train_keys})
    except ValueError as exc:
        raise ConfigError(f"{source}: {_locate(exc, where)}") from None
    rest = {k: v for k, v in values.items() if k not in train_keys}
    cfg = ExperimentConfig(train=train, **rest)
    if cfg.n_train < 2 or cfg.n_eval < 1:
        raise ConfigError(f"{source}: n_train must be >= 2 and n_eval >= 1")
    if cfg.shift_family not in FAMILY_KINDS:
        raise ConfigError(f"{source}: {_locate_key('shift_family', where)}unknown shift family {cfg.shift_family!r}")
    if "shift_kind" not in values and "shift_family" in values:
        cfg.shift_kind = FAMILY_KINDS[cfg.shift_family][0]
    try:
        cfg.shift
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def _locate_key(key: str, where: dict) -> str:
    return f"line {where[key]}: " if key in where else ""


def _locate(exc: Exception, where: dict) -> str:
    message = str(exc)
    for key in where:
        if message.startswith(key) or f" {key} " in f" {message} ":
            return f"line {where[key]}: {message}"
    return message


def load(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text, str(path), overrides)
