"""Run configuration and its ``[section]`` / ``key = value`` file format."""
import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .backbone import StagePlan
from .data import SequenceSpec
from .fusion import AttentionConfig
from .losses import LossWeights
from .model import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    steps: int = 200
    batch: int = 2
    lr: float = 1e-2
    momentum: float = 0.9
    grad_clip: float = 0.0  # 0 disables clipping
    template_factor: float = 2.0
    search_factor: float = 4.0
    center_jitter: float = 0.8
    scale_jitter: float = 0.15
    max_template_gap: int = 5
    use_rpm: bool = True
    lam: float = 0.5
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.template_factor <= 1 or self.search_factor <= 1:
            raise ConfigError("crop factors must exceed 1")
        if self.steps < 0 or self.batch < 1:
            raise ConfigError("steps must be >= 0 and batch >= 1")

    @property
    def template_size(self):
        return self.model.template_size

    @property
    def search_size(self):
        return self.model.search_size


@dataclass(frozen=True)
class DataConfig:
    n_train: int = 8
    n_test: int = 4
    seed: int = 0
    spec: SequenceSpec = field(default_factory=SequenceSpec)


# section name -> (dataclass, path inside RunConfig)
_SECTIONS = {
    "train": (TrainConfig, ("train",)),
    "model": (ModelConfig, ("train", "model")),
    "plan": (StagePlan, ("train", "model", "plan")),
    "attention": (AttentionConfig, ("train", "model", "attention")),
    "loss": (LossWeights, ("train", "weights")),
    "data": (DataConfig, ("data",)),
    "sequence": (SequenceSpec, ("data", "spec")),
}


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)


def _parse_value(raw, default, key):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return None if raw.lower() == "none" else float(raw)
        if isinstance(default, tuple):
            items = [s for s in raw.replace("(", "").replace(")", "").split(",") if s.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(s.strip()) for s in items)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def _get(obj, path):
    for p in path:
        obj = getattr(obj, p)
    return obj


def _set(obj, path, value):
    if not path:
        return value
    head, rest = path[0], path[1:]
    return dataclasses.replace(obj, **{head: _set(getattr(obj, head), rest, value)})


def parse_config(text, base=None):
    """Parse config text into a :class:`RunConfig`; unknown sections or keys
    raise :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = base or RunConfig()
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls, path = _SECTIONS[section]
        current = _get(cfg, path)
        names = {f.name for f in dataclasses.fields(cls) if not dataclasses.is_dataclass(getattr(current, f.name))}
        updates = {}
        for key, raw in cp.items(section):
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            updates[key] = _parse_value(raw, getattr(current, key), key)
        try:
            cfg = _set(cfg, path, dataclasses.replace(current, **updates))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    return cfg


def load_config(path):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(p.read_text())


def dump_config(cfg):
    """Inverse of :func:`parse_config` (every scalar field, every section)."""
    out = []
    for section, (cls, path) in _SECTIONS.items():
        obj = _get(cfg, path)
        out.append(f"[{section}]")
        for f in dataclasses.fields(cls):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                continue
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            out.append(f"{f.name} = {v}")
        out.append("")
    return "\n".join(out)
