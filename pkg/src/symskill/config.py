"""Run configuration: factor layout, training knobs, named presets, YAML IO.

Configs serialize fully expanded so a saved file shows every effective value,
not just the overrides it was built from.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .env import EnvConfig, StyleRegConfig
from .errors import ConfigError
from .ppo import PpoConfig
from .skills import FactorSpec, SkillRegistry, factor_from_dict

OUTPUT_ROOT_ENV = "SYMSKILL_OUTPUT_ROOT"

EXPLORE_MODES = ("none", "ensemble", "rnd")

CONFIG_VERSION = 1


def default_factors():
    return [
        FactorSpec("position", (0, 1), "metra", 2, "geometric"),
        FactorSpec("heading_rate", (6,), "diayn", 4, "latin4"),
    ]


@dataclass
class NetConfig:
    actor_hidden: tuple = (64, 64)
    critic_hidden: tuple = (64, 64)
    usd_hidden: tuple = (64, 64)
    lr: float = 1e-3
    usd_lr: float = 1e-4
    usd_updates: int = 1

    def validate(self) -> "NetConfig":
        for name in ("actor_hidden", "critic_hidden", "usd_hidden"):
            sizes = getattr(self, name)
            if any(int(s) <= 0 for s in sizes):
                raise ConfigError(f"{name} sizes must be positive")
        if self.lr <= 0 or self.usd_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if int(self.usd_updates) < 1:
            raise ConfigError("usd_updates must be >= 1")
        return self


@dataclass
class RunConfig:
    name: str = "run"
    seed: int = 0
    iterations: int = 1000
    num_envs: int = 64
    factors: list = field(default_factory=default_factors)
    symmetry: bool = True
    style: bool = True
    weighting: bool = True
    dusdi: bool = False
    explore: str = "none"
    explore_coef: float = 1.0
    sym_reward: bool = False
    ensemble: int = 1
    lam_ucb: float = 0.0
    checkpoint_every: int = 200
    difficulty: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    style_weights: StyleRegConfig = field(default_factory=StyleRegConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    nets: NetConfig = field(default_factory=NetConfig)
    out_dir: str | None = None

    def validate(self) -> "RunConfig":
        if self.iterations < 1 or self.num_envs < 1:
            raise ConfigError("iterations and num_envs must be >= 1")
        if not self.factors:
            raise ConfigError("at least one skill factor is required")
        if self.explore not in EXPLORE_MODES:
            raise ConfigError(
                f"explore must be one of {EXPLORE_MODES}, got {self.explore!r}")
        if self.ensemble < 1:
            raise ConfigError("ensemble must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if self.difficulty < 0:
            raise ConfigError("difficulty must be >= 0")
        self.registry()
        self.env.validate()
        self.style_weights.validate()
        self.ppo.validate()
        self.nets.validate()
        return self

    def registry(self) -> SkillRegistry:
        return SkillRegistry(list(self.factors))

    def effective_style(self) -> StyleRegConfig:
        """Style stream weights actually applied; the style=False ablation
        zeroes the shaping terms but keeps the flip penalty, which is
        regularization rather than style."""
        if self.style:
            return self.style_weights
        return dataclasses.replace(
            self.style_weights, speed=0.0, height=0.0, flat=0.0,
            action_norm=0.0, action_rate=0.0, tilt_contact=0.0)

    def resolve_out_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        return root / self.name

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "name": self.name,
            "seed": self.seed,
            "iterations": self.iterations,
            "num_envs": self.num_envs,
            "factors": [f.to_dict() for f in self.factors],
            "symmetry": self.symmetry,
            "style": self.style,
            "weighting": self.weighting,
            "dusdi": self.dusdi,
            "explore": self.explore,
            "explore_coef": self.explore_coef,
            "sym_reward": self.sym_reward,
            "ensemble": self.ensemble,
            "lam_ucb": self.lam_ucb,
            "checkpoint_every": self.checkpoint_every,
            "difficulty": self.difficulty,
            "env": dataclasses.asdict(self.env),
            "style_weights": dataclasses.asdict(self.style_weights),
            "ppo": dataclasses.asdict(self.ppo),
            "nets": {
                "actor_hidden": list(self.nets.actor_hidden),
                "critic_hidden": list(self.nets.critic_hidden),
                "usd_hidden": list(self.nets.usd_hidden),
                "lr": self.nets.lr,
                "usd_lr": self.nets.usd_lr,
                "usd_updates": self.nets.usd_updates,
            },
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        version = d.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")

        def sub(cls_, key):
            base = cls_()
            over = d.pop(key, {}) or {}
            known = {f.name for f in dataclasses.fields(cls_)}
            bad = set(over) - known
            if bad:
                raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
            return dataclasses.replace(base, **over)

        env = sub(EnvConfig, "env")
        style_w = sub(StyleRegConfig, "style_weights")
        ppo = sub(PpoConfig, "ppo")
        nets_over = d.pop("nets", {}) or {}
        nets = NetConfig()
        known = {f.name for f in dataclasses.fields(NetConfig)}
        bad = set(nets_over) - known
        if bad:
            raise ConfigError(f"unknown nets keys: {sorted(bad)}")
        for k, v in nets_over.items():
            v = tuple(v) if k.endswith("_hidden") else v
            nets = dataclasses.replace(nets, **{k: v})
        factors = [factor_from_dict(f) if isinstance(f, dict) else f
                   for f in d.pop("factors", [])] or default_factors()
        known = {f.name for f in dataclasses.fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        return cls(env=env, style_weights=style_w, ppo=ppo, nets=nets,
                   factors=factors, **d)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} is not a mapping")
    return RunConfig.from_dict(data).validate()


# ---------------------------------------------------------------- presets

def _preset_factors(name: str) -> tuple[list[FactorSpec], bool]:
    """Factor layout per named preset; second value is the dusdi switch."""
    if name == "diayn":
        # no factorization: one simplex skill over position + heading rate
        return [FactorSpec("position_heading", (0, 1, 6), "diayn", 8,
                           "latin4")], False
    if name == "metra":
        return [FactorSpec("position_heading", (0, 1, 6), "metra", 3,
                           "geometric")], False
    if name == "dusdi":
        return [
            FactorSpec("position", (0, 1), "diayn", 4, "latin4"),
            FactorSpec("heading_rate", (6,), "diayn", 2, "latin2"),
        ], True
    if name == "2xmetra":
        return [
            FactorSpec("position", (0, 1), "metra", 2, "geometric"),
            FactorSpec("heading_rate", (6,), "metra", 1, "geometric"),
        ], False
    if name == "mixed":
        return [
            FactorSpec("position", (0, 1), "metra", 2, "geometric"),
            FactorSpec("heading_rate", (6,), "diayn", 4, "latin4"),
        ], False
    raise ConfigError(f"unknown preset {name!r}")


PRESET_NAMES = ("metra", "diayn", "dusdi", "2xmetra", "mixed")

# Desk-scale tuning shared by every named preset. One batch per iteration
# and tiny networks shift the stable operating point relative to the table
# defaults: the policy needs a stronger entropy pull so the action std
# stays alive (a collapsed std turns mirror replicas into far-off-policy
# rows and stalls learning), a gentler actor step to stay near the KL
# target, and a faster skill-model fit since it sees so few batches.
_PRESET_TUNING = {"entropy_coef": 0.03, "lr": 5e-4, "usd_lr": 1e-3}


def preset(name: str, **overrides) -> RunConfig:
    factors, dusdi = _preset_factors(name)
    cfg = RunConfig(name=name, factors=factors, dusdi=dusdi)
    t = _PRESET_TUNING
    cfg.ppo.entropy_coef = t["entropy_coef"]
    cfg.ppo.lr = t["lr"]
    cfg.nets.lr = t["lr"]
    cfg.nets.usd_lr = t["usd_lr"]
    for k, v in overrides.items():
        if not hasattr(cfg, k):
            raise ConfigError(f"unknown config field {k!r}")
        setattr(cfg, k, v)
    return cfg.validate()


def resolve_config(spec: str) -> RunConfig:
    """A CLI config argument: a YAML path, or a built-in preset name."""
    p = Path(spec)
    if p.exists():
        return load_config(p)
    if spec in PRESET_NAMES:
        return preset(spec)
    raise ConfigError(
        f"{spec!r} is neither a config file nor one of {PRESET_NAMES}")
