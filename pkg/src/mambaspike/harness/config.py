"""Run configuration and its flat ``section.key = value`` text format.

Grammar, one assignment per line::

    # comment
    frontend.lif.tau_m = 30
    frontend.channels = 8, 16
    data.dataset = synth-gesture

Keys are dotted paths into :class:`RunConfig`. Values are parsed by the
target field's type (bool accepts true/false, tuples are comma separated).
Unknown keys, duplicate keys and unparsable values are errors.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..bridge import BridgeConfig
from ..encoders import EncoderConfig
from ..mamba import BackboneConfig
from ..neurons import LIFParams, SRMParams

DATASETS = ("synth-gesture", "seq-mnist")


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    dataset: str = "synth-gesture"
    n_classes: int = 4
    n_train: int = 800
    n_test: int = 200
    seed: int = 1234
    width: int = 32
    height: int = 32
    duration_us: int = 200_000
    event_rate: float = 1000.0
    bin_us: int = 10_000
    t_max: int = 20
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass
class FrontendConfig:
    enabled: bool = True
    neuron: str = "lif"
    channels: tuple = (8, 16)
    kernel: int = 3
    stride: int = 2
    hidden: int = 128
    recurrent: bool = False
    gain: float = 3.0
    lif: LIFParams = field(default_factory=LIFParams)
    srm: SRMParams = field(default_factory=SRMParams)


@dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    checkpoints: bool = True


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    bridge: BridgeConfig = field(default_factory=BridgeConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/default"

    def validate(self) -> None:
        if self.data.dataset not in DATASETS:
            raise ConfigError(f"data.dataset must be one of {DATASETS}")
        if self.data.n_classes < 2:
            raise ConfigError("data.n_classes must be >= 2")
        if self.frontend.neuron not in ("lif", "srm"):
            raise ConfigError("frontend.neuron must be 'lif' or 'srm'")
        if self.frontend.recurrent and self.frontend.neuron != "lif":
            raise ConfigError("recurrent front-end layers support LIF neurons only")
        if self.train.epochs < 0 or self.train.batch_size < 1:
            raise ConfigError("train.epochs must be >= 0 and train.batch_size >= 1")
        if self.optim.lr <= 0:
            raise ConfigError("optim.lr must be positive")
        for sub in (self.encoder, self.frontend.lif, self.frontend.srm, self.bridge, self.backbone):
            try:
                sub.validate()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc


def _parse_value(raw: str, typ, key: str):
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    try:
        if typ is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        if typ is tuple:
            return tuple(int(p) for p in text.split(",") if p.strip())
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw.strip()!r} as {typ.__name__}") from None


def _field_types(obj) -> dict:
    return typing.get_type_hints(type(obj))


def set_key(cfg, key: str, raw: str) -> None:
    """Assign one dotted key from its text value."""
    target = cfg
    *path, leaf = key.split(".")
    for part in path:
        if not dataclasses.is_dataclass(target) or part not in _field_types(target):
            raise ConfigError(f"unknown config key {key!r}")
        target = getattr(target, part)
    types = _field_types(target) if dataclasses.is_dataclass(target) else {}
    if leaf not in types or dataclasses.is_dataclass(getattr(target, leaf)):
        raise ConfigError(f"unknown config key {key!r}")
    setattr(target, leaf, _parse_value(raw, types[leaf], key))


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            set_key(cfg, key, raw)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def flatten(cfg, prefix: str = "") -> dict[str, object]:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out.update(flatten(value, f"{prefix}{f.name}."))
        else:
            out[f"{prefix}{f.name}"] = value
    return out


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in flatten(cfg).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def copy_config(cfg: RunConfig) -> RunConfig:
    return parse_config(dump_config(cfg))
