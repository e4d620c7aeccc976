"""Flat key-value run configuration shared by the CLI and the trainer."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

_PATH_KEYS = ("dataset_dir", "out_dir")


@dataclass
class RunConfig:
    """Every tunable of a run. Defaults are the desk-scale setup; the
    reference setup uses base_channels=64, disc_base_channels=64,
    patch_size=128 (see README)."""

    # reproducibility
    seed: int = 0
    # synthetic dataset
    image_size: int = 64
    train_pairs: int = 200
    eval_pairs: int = 20
    noise_sigma: float = 60.0
    hd_noise_sigma: float = 9.0
    noise_ll_fraction: float = 0.0
    psf_sigma: float = 0.7
    # wavelet front end
    levels: int = 6
    wavelet: str = "haar"
    # models
    arch: str = "switchable"          # or "twin" (two-generator baseline)
    stages: int = 4
    base_channels: int = 16
    disc_base_channels: int = 16
    code_len: int = 128
    adain_eps: float = 1e-5
    # training
    gan_mode: str = "least-squares"   # or "paper-l1"
    lambda_cyc: float = 10.0
    lambda_id: float = 5.0
    learning_rate: float = 2e-4
    epochs: int = 30
    batch_size: int = 1
    patch_size: int = 32
    flip_augment: bool = True
    train_fraction: float = 1.0
    # paths
    dataset_dir: str = ""
    out_dir: str = ""

    def validate(self) -> "RunConfig":
        if self.arch not in ("switchable", "twin"):
            raise ConfigError(f"arch must be 'switchable' or 'twin', got {self.arch!r}")
        if self.gan_mode not in ("least-squares", "paper-l1"):
            raise ConfigError(f"gan_mode must be 'least-squares' or 'paper-l1', got {self.gan_mode!r}")
        if self.wavelet not in ("haar", "db4"):
            raise ConfigError(f"wavelet must be 'haar' or 'db4', got {self.wavelet!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.patch_size % (1 << self.stages):
            raise ConfigError(
                f"patch_size {self.patch_size} must be divisible by 2^stages = {1 << self.stages}")
        if not (0.0 < self.train_fraction <= 1.0):
            raise ConfigError("train_fraction must be in (0, 1]")
        if self.lambda_cyc < 0 or self.lambda_id < 0:
            raise ConfigError("loss weights must be non-negative")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_model_dict(self) -> dict:
        """Config snapshot stored in checkpoints: everything but local paths."""
        d = self.to_dict()
        for key in _PATH_KEYS:
            d.pop(key)
        return d

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    field = _FIELDS[name]
    if field.type in ("bool", bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key {name!r}: expected a boolean, got {raw!r}")
    try:
        if field.type in ("int", int):
            return int(raw)
        if field.type in ("float", float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {name!r}: cannot parse {raw!r}") from None
    return raw.strip()


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    updates = {}
    for key, value in overrides.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, value) if isinstance(value, str) else value
    return cfg.replace(**updates)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    overrides: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        overrides[key] = value
    return apply_overrides(cfg, overrides)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), base=base)


def format_config(cfg: RunConfig) -> str:
    lines = [f"{name} = {getattr(cfg, name)}" for name in sorted(_FIELDS)]
    return "\n".join(lines) + "\n"


def from_checkpoint_dict(d: dict) -> RunConfig:
    unknown = set(d) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"checkpoint config has unknown keys {sorted(unknown)}")
    return RunConfig(**d)
