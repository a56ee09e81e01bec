"""Run configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored; unknown keys are an error. Values
are parsed by the key's type (int, float, bool as true/false, str); keys whose
default is "auto" also accept a number. The resolved configuration is written
next to the run's artifacts as ``config.txt`` and fully determines them.
"""
import zlib
from dataclasses import dataclass, fields, replace

import numpy as np

from .agent import AgentConfig
from .env import EnvConfig
from .errors import ConfigError
from .imgops import AugmentParams


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # data
    size: int = 64
    difficulty: str = "hard"
    n_samples: int = 68
    n_train: int = 50
    n_val: int = 5
    n_test: int = 13
    # segmentation model
    width1: int = 8
    width2: int = 16
    seg_lr: float = 2.5e-4
    weight_decay: float = 5e-4
    seg_batch: int = 2
    pretrain_epochs: int = 30
    final_epochs: int = 40
    # environment
    finetune_lr: float = 5e-5
    finetune_steps: int = 2
    max_steps: int = 8
    threshold: float = 0.5
    replay_original: bool = False
    persist_model: bool = False
    # agent
    episodes: int = 300
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_frac: float = 0.6
    buffer_capacity: int = 5000
    agent_batch: int = 32
    target_sync: int = 50
    agent_lr: float = 1e-3
    agent_hidden: int = 64
    # action magnitudes
    rotate_degrees: float = 30.0
    crop_step: str = "auto"
    zoom_factor: float = 1.1
    warp_grid: int = 4
    warp_sigma: str = "auto"
    noise_std: float = 0.05
    brightness: float = 0.1
    # comparison
    methods: str = "none,traditional,random,learned"

    def phase_seed(self, phase):
        """Independent 63-bit seed for a named phase, derived from the master seed."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(phase.encode()),))
        return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))

    def method_list(self):
        return [m.strip() for m in self.methods.split(",") if m.strip()]

    def aug_params(self):
        return AugmentParams(
            rotate_degrees=self.rotate_degrees,
            crop_step=None if self.crop_step == "auto" else int(self.crop_step),
            zoom_factor=self.zoom_factor,
            warp_grid=self.warp_grid,
            warp_sigma=None if self.warp_sigma == "auto" else float(self.warp_sigma),
            noise_std=self.noise_std,
            brightness=self.brightness,
        )

    def env_config(self):
        return EnvConfig(max_steps=self.max_steps, finetune_steps=self.finetune_steps,
                         finetune_lr=self.finetune_lr, weight_decay=self.weight_decay,
                         threshold=self.threshold, replay_original=self.replay_original,
                         persist_model=self.persist_model)

    def agent_config(self):
        return AgentConfig(gamma=self.gamma, eps_start=self.eps_start, eps_end=self.eps_end,
                           eps_decay_frac=self.eps_decay_frac, batch_size=self.agent_batch,
                           buffer_capacity=self.buffer_capacity, target_sync=self.target_sync,
                           lr=self.agent_lr, hidden=self.agent_hidden)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_AUTO_KEYS = {"crop_step": int, "warp_sigma": float}


def _parse_value(key, kind, raw):
    try:
        if key in _AUTO_KEYS:
            return "auto" if raw == "auto" else str(_AUTO_KEYS[key](raw))
        if kind is bool:
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from None


def parse_config(text, base=None):
    """Apply ``key = value`` lines on top of ``base`` (defaults if None)."""
    base = base or RunConfig()
    types = {f.name: type(getattr(base, f.name)) for f in fields(base)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _parse_value(key, types[key], raw)
    cfg = replace(base, **updates)
    validate(cfg)
    return cfg


def load_config(path, base=None):
    with open(path) as fh:
        return parse_config(fh.read(), base)


def validate(cfg):
    if cfg.difficulty not in ("easy", "hard"):
        raise ConfigError(f"difficulty must be easy or hard, got {cfg.difficulty!r}")
    if cfg.size % 2:
        raise ConfigError(f"size must be even, got {cfg.size}")
    if cfg.n_train + cfg.n_val + cfg.n_test > cfg.n_samples:
        raise ConfigError("n_train + n_val + n_test exceeds n_samples")
    unknown = set(cfg.method_list()) - {"none", "traditional", "random", "learned"}
    if unknown:
        raise ConfigError(f"unknown methods: {sorted(unknown)}")
