"""Run configuration: ``section.key = value`` text files merged with overrides.

Values are Python literals (``2``, ``1e-3``, ``(5, 31)``, ``True``, ``None``);
anything that does not parse as a literal is kept as a string.  Unknown keys
are rejected.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import DomainTransform, SynthConfig
from .losses import LossConfig
from .network import ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


# derived from the train section, never set directly
_MODEL_DERIVED = {"image_size", "attention_enabled"}

PRESETS = {
    "desk": {
        "train.image_size": 64, "train.total_epochs": 60, "train.warm_epochs": 24,
        "train.decay_epochs": 36, "train.batch_size": 2, "train.radius_range": (5, 31),
        "model.depth": 4, "model.base_channels": 8,
    },
    "paper": {
        "train.image_size": 512, "train.total_epochs": 200, "train.warm_epochs": 80,
        "train.decay_epochs": 120, "train.batch_size": 2, "train.radius_range": (5, 50),
        "model.depth": 8, "model.base_channels": 8,
    },
}

# photometric shifts given to synthetic domains 1, 2, ... (domain 0 is untouched)
DOMAIN_SHIFTS = [(0.15, 1.0, 0.0), (0.0, 0.7, 0.0), (-0.1, 1.2, 0.8), (0.1, 0.6, 0.5)]


def default_domains(k: int) -> list[tuple]:
    return [(0.0, 1.0, 0.0)] + [DOMAIN_SHIFTS[(d - 1) % len(DOMAIN_SHIFTS)] for d in range(1, k)]


def _section_keys(cls, exclude=()) -> dict:
    return {f.name: f for f in fields(cls) if f.name not in exclude}


SECTIONS = {
    "model": _section_keys(ModelConfig, _MODEL_DERIVED),
    "train": _section_keys(TrainConfig, {"alpha", "bce_epsilon"}),
    "loss": _section_keys(LossConfig),
    "synth": _section_keys(SynthConfig, {"image_size", "seed"}),
}


def parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        check_key(key, f"{origin}:{lineno}")
        values[key] = parse_value(value)
    return values


def check_key(key: str, where: str = "override"):
    section, _, name = key.partition(".")
    if section not in SECTIONS or name not in SECTIONS[section]:
        raise ConfigError(f"{where}: unknown config key {key!r}")


def _coerce(value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    loss: LossConfig
    synth: SynthConfig
    values: dict = field(default_factory=dict)

    def dump(self) -> str:
        lines = []
        for section, keys in SECTIONS.items():
            obj = getattr(self, section)
            for name in keys:
                value = getattr(obj, name)
                if section == "synth" and name == "domains":
                    value = [(d.brightness, d.contrast, d.blur_sigma) for d in value]
                lines.append(f"{section}.{name} = {value!r}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.dump())


def resolve(preset: str | None = None, config_path=None, overrides: dict | None = None) -> RunConfig:
    """Preset, then config file, then overrides; later layers win."""
    values: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    if config_path is not None:
        values.update(parse_config_text(Path(config_path).read_text(), str(config_path)))
    for key, value in (overrides or {}).items():
        check_key(key)
        values[key] = value

    per_section: dict = {s: {} for s in SECTIONS}
    for key, value in values.items():
        section, _, name = key.partition(".")
        per_section[section][name] = value

    def build(cls, section, extra=None):
        kwargs = {}
        for name, f in SECTIONS[section].items():
            if name in per_section[section]:
                default = getattr(cls(), name) if name != "domains" else None
                kwargs[name] = _coerce(per_section[section][name], default)
        kwargs.update(extra or {})
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {section} configuration: {exc}") from exc

    loss = build(LossConfig, "loss")
    train = build(TrainConfig, "train", {"alpha": loss.alpha, "bce_epsilon": loss.bce_epsilon})
    model = build(ModelConfig, "model", {"image_size": train.image_size,
                                         "attention_enabled": train.use_att})
    synth_extra = {"image_size": train.image_size, "seed": train.seed}
    if "domains" in per_section["synth"]:
        synth_extra["domains"] = [DomainTransform(*d) for d in per_section["synth"].pop("domains")]
    synth = build(SynthConfig, "synth", synth_extra)
    return RunConfig(model, train, loss, synth, values)
