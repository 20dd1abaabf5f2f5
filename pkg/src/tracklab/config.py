"""Run configuration: presets, JSON loading with strict keys, env-var overrides."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

from .actionmap import StepKinematics
from .augment import AugmentConfig
from .a3c import TrainConfig
from .env import EpisodeConfig, RewardParams
from .net import NetConfig
from .render import CameraConfig

CONFIG_VERSION = 1
ENV_PREFIX = "TRACKLAB_"


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    scenario: str = "standard"
    preset: str = "desk"
    seed: int = 0
    out: str = "runs/last"
    use_pool: bool = True  # RandomizedEnv protocol; False = SingleEnv
    target_speed: float = 0.05
    camera: CameraConfig = field(default_factory=CameraConfig)
    net: NetConfig = field(default_factory=NetConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    kinematics: StepKinematics = field(default_factory=StepKinematics)

    def validate(self) -> None:
        self.camera.validate()
        self.reward.validate()
        self.episode.validate()
        self.augment.validate()
        self.train.validate()
        if (self.net.height, self.net.width) != (self.camera.height, self.camera.width):
            raise ConfigError("net input size must match the camera size")


def paper_preset() -> RunConfig:
    return RunConfig(
        preset="paper",
        camera=CameraConfig(width=84, height=84),
        net=NetConfig(height=84, width=84, fc_dim=256, lstm_dim=256),
        reward=RewardParams(A=1.0, d=2.0, c=2.0, lam=0.5),
        episode=EpisodeConfig(reward_threshold=-450.0, max_steps=3000),
        augment=AugmentConfig(n_perturb=21, enable_flip=True),
        train=TrainConfig(learning_rate=1e-4, entropy_beta=0.01, gamma=0.99,
                          n_step=20, max_global_steps=100_000_000,
                          validation_interval=500_000),
        kinematics=StepKinematics(scale=1.0),
    )


def desk_preset() -> RunConfig:
    """Same ratios at desk scale: 32x32 input, 64-unit LSTM, 500-step episodes."""
    return RunConfig(
        preset="desk",
        target_speed=0.04,
        camera=CameraConfig(width=32, height=32, shade_falloff=0.08),
        net=NetConfig(height=32, width=32, fc_dim=64, lstm_dim=64),
        reward=RewardParams(A=1.0, d=2.0, c=2.0, lam=0.5),
        episode=EpisodeConfig(reward_threshold=-75.0, max_steps=500),
        augment=AugmentConfig(n_perturb=8, enable_flip=True,
                              x_range=(-0.9, 0.9), y_range=(1.4, 3.0)),
        train=TrainConfig(learning_rate=2e-4, entropy_beta=0.02, gamma=0.99,
                          n_step=20, max_global_steps=2_000_000, clip_norm=40.0,
                          validation_interval=25_000, validation_episodes=3),
        # 0.25 world-units per forward step, full 10 degree/step turns
        kinematics=StepKinematics(linear_per_cm=0.005, scale=1.0),
    )


PRESETS = {"paper": paper_preset, "desk": desk_preset}

_FIELD_ALIASES = {"lambda": "lam"}


def _build_section(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = _FIELD_ALIASES.get(key, key)
        if name not in names:
            raise ConfigError(f"unknown key {path}.{key}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    return kwargs


_SECTIONS = {
    "camera": CameraConfig,
    "net": NetConfig,
    "reward": RewardParams,
    "episode": EpisodeConfig,
    "augment": AugmentConfig,
    "train": TrainConfig,
    "kinematics": StepKinematics,
}
_SCALARS = {"scenario", "preset", "seed", "out", "use_pool", "target_speed"}


def apply_dict(cfg: RunConfig, data: dict) -> RunConfig:
    for key, value in data.items():
        if key == "config_version":
            if value != CONFIG_VERSION:
                raise ConfigError(f"unsupported config_version {value}")
        elif key in _SCALARS:
            setattr(cfg, key, value)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key} must be an object")
            section = getattr(cfg, key)
            for k, v in _build_section(type(section), value, key).items():
                if k in ("conv1", "conv2") and isinstance(v, (list, tuple)):
                    v = tuple(v)
                setattr(section, k, v)
        else:
            raise ConfigError(f"unknown key {key}")
    return cfg


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_env_overrides(cfg: RunConfig, environ=None) -> RunConfig:
    """TRACKLAB_SEED=3 sets a scalar; TRACKLAB_TRAIN__N_STEP=10 sets a section field."""
    environ = os.environ if environ is None else environ
    data: dict = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        spec = key[len(ENV_PREFIX):].lower()
        value = _parse_env_value(raw)
        if "__" in spec:
            section, fieldname = spec.split("__", 1)
            data.setdefault(section, {})[fieldname] = value
        else:
            data[spec] = value
    return apply_dict(cfg, data)


def load_config(path=None, preset: str | None = None, overrides: dict | None = None,
                use_env: bool = True) -> RunConfig:
    """Resolve preset -> file -> env vars -> explicit overrides, then validate."""
    data = {}
    if path is not None:
        try:
            with open(path) as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
    name = preset or data.get("preset", "desk")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose one of {sorted(PRESETS)}")
    cfg = PRESETS[name]()
    apply_dict(cfg, data)
    if preset is not None:
        cfg.preset = preset
    if use_env:
        apply_env_overrides(cfg)
    if overrides:
        apply_dict(cfg, overrides)
    try:
        cfg.validate()
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e))
    return cfg


def dump_config(cfg: RunConfig) -> dict:
    def as_dict(obj):
        out = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            out["lambda" if f.name == "lam" else f.name] = (
                list(v) if isinstance(v, tuple) else v)
        return out

    d = {"config_version": CONFIG_VERSION}
    for key in sorted(_SCALARS):
        d[key] = getattr(cfg, key)
    for key in _SECTIONS:
        d[key] = as_dict(getattr(cfg, key))
    return d
