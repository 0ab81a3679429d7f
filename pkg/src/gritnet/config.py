"""Experiment configuration and its flat ``dotted.key = value`` text format.

Example::

    # master seed for every random stream in the run
    seed = 0
    weeks = 1,2,3,4,5,6,7,8
    folds = 5
    output_dir = results
    data.path =                      # empty: generate synthetic data
    data.deadline =                  # empty: no graduation cutoff
    synthetic.student_count = 2000
    synthetic.curriculum = default
    gritnet.embed_dim = 64
    baseline.alphas = 0.001,0.01,0.1,1,10

Blank lines and ``#`` comments are ignored. Lists are comma separated, an
empty value is ``None`` for optional fields, and ``synthetic.curriculum``
accepts ``default`` for the built-in curriculum. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .synthetic import SyntheticSpec, default_curriculum


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    path: Optional[str] = None
    deadline: Optional[int] = None


@dataclass
class BaselineConfig:
    alphas: list[float] = field(default_factory=lambda: [0.001, 0.01, 0.1, 1.0, 10.0])
    epochs: int = 2000
    tol: float = 1e-10
    inner_folds: int = 4
    chi2_k: int = 0  # 0 keeps every feature


@dataclass
class GritNetConfig:
    embed_dim: int = 64
    hidden: int = 32
    d_max: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    epochs: int = 10
    dropout_rate: float = 0.1


@dataclass
class ExperimentConfig:
    seed: int = 0
    weeks: list[int] = field(default_factory=lambda: list(range(1, 9)))
    folds: int = 5
    output_dir: str = "results"
    models: list[str] = field(default_factory=lambda: ["baseline", "gritnet"])
    data: DataConfig = field(default_factory=DataConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    gritnet: GritNetConfig = field(default_factory=GritNetConfig)

    def validate(self) -> None:
        if not self.weeks:
            raise ConfigError("weeks must not be empty")
        if any(w < 1 for w in self.weeks) or any(b <= a for a, b in zip(self.weeks, self.weeks[1:])):
            raise ConfigError("weeks must be positive and strictly increasing")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        unknown = set(self.models) - {"baseline", "gritnet"}
        if unknown or not self.models:
            raise ConfigError(f"models must be a non-empty subset of baseline,gritnet (got {self.models})")
        if not 0.0 <= self.gritnet.dropout_rate < 1.0:
            raise ConfigError("gritnet.dropout_rate must be in [0, 1)")
        if self.data.path is None:
            try:
                self.synthetic.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None


def child_seed(master: int, *labels: str) -> int:
    """Seed for a named sub-stream; adding new labels never perturbs existing ones."""
    key = "/".join([str(master), *labels]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


# ---------------------------------------------------------------------------
# flat text (de)serialization


def _is_optional(tp) -> tuple[bool, Any]:
    if typing.get_origin(tp) is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1 and len(typing.get_args(tp)) == 2:
            return True, args[0]
    return False, tp


def _format(value, tp) -> str:
    optional, tp = _is_optional(tp)
    if value is None:
        return ""
    if typing.get_origin(tp) is list:
        (inner,) = typing.get_args(tp)
        return ",".join(_format(v, inner) for v in value)
    if tp is float:
        return repr(float(value))
    if tp is bool:
        return "true" if value else "false"
    return str(value)


def _parse(text: str, tp, key: str):
    optional, tp = _is_optional(tp)
    text = text.strip()
    if text == "":
        if optional:
            return None
        if typing.get_origin(tp) is list:
            return []
        if tp is str:
            return ""
        raise ConfigError(f"{key}: value required")
    try:
        if typing.get_origin(tp) is list:
            (inner,) = typing.get_args(tp)
            return [_parse(part, inner, key) for part in text.split(",")]
        if tp is bool:
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(tp, '__name__', tp)}") from None


def _walk(cls, prefix=""):
    """Yield (dotted key, owning dataclass path, field name, type) for every leaf field."""
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        key = prefix + f.name
        if dataclasses.is_dataclass(tp):
            yield from _walk(tp, key + ".")
        else:
            yield key, f.name, tp


def to_text(config: ExperimentConfig) -> str:
    lines = []
    for key, _, tp in _walk(ExperimentConfig):
        obj = config
        for part in key.split(".")[:-1]:
            obj = getattr(obj, part)
        lines.append(f"{key} = {_format(getattr(obj, key.rsplit('.', 1)[-1]), tp)}")
    return "\n".join(lines) + "\n"


def parse_flat(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _apply(obj, cls, values: dict[str, str], prefix: str, used: set[str]):
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        tp = hints[f.name]
        key = prefix + f.name
        if dataclasses.is_dataclass(tp):
            _apply(getattr(obj, f.name), tp, values, key + ".", used)
        elif key in values:
            used.add(key)
            raw = values[key]
            if key == "synthetic.curriculum" and raw.strip() == "default":
                setattr(obj, f.name, default_curriculum())
            else:
                setattr(obj, f.name, _parse(raw, tp, key))


def from_text(text: str) -> ExperimentConfig:
    values = parse_flat(text)
    config = ExperimentConfig()
    used: set[str] = set()
    _apply(config, ExperimentConfig, values, "", used)
    extra = sorted(set(values) - used)
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(extra)}")
    config.validate()
    return config


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return from_text(fh.read())


def synthetic_spec_from_text(text: str) -> SyntheticSpec:
    """Parse a generator spec file: the ``synthetic.*`` keys, with or without the prefix."""
    values = {}
    for key, value in parse_flat(text).items():
        values[key if key.startswith("synthetic.") else "synthetic." + key] = value
    config = ExperimentConfig()
    used: set[str] = set()
    _apply(config, ExperimentConfig, values, "", used)
    extra = sorted(set(values) - used)
    if extra:
        raise ConfigError(f"unknown spec keys: {', '.join(extra)}")
    config.synthetic.validate()
    return config.synthetic
