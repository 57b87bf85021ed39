"""Experiment configuration.

Flat ``key = value`` text files plus command-line ``key=value`` overrides.
Unknown keys are rejected by name; the effective configuration is echoed
into the results directory so any run can be reproduced from its output.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

ALGORITHMS = ("hdc", "stoc-dqn", "stoc-acer", "hard-dqn")
DOMAINS = ("CR", "SFR", "LAP")
SEED_ENV_VAR = "DILUTE_RL_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    algorithm: str = "stoc-dqn"
    domain: str = "CR"
    ser: float = 0.0
    seeds: tuple = (0, 1, 2, 3, 4)
    train_dialogues: int = 1000
    eval_dialogues: int = 1000
    checkpoint_every: int = 1000
    lr: float = 0.0001
    batch_size: int = 128
    buffer_size: int = 10000
    gamma: float = 0.9
    dropout: float = 0.1
    trace: bool = False
    guidance_mode: str = "none"
    guidance_beta: float = 0.5
    explore_mode: str = "auto"   # resolved from the algorithm unless overridden
    explore_eps_start: float = 0.55
    explore_eps_end: float = 0.05
    explore_decay_horizon: int = 1000
    explore_tau: float = 100.0
    explore_test_eps: float = 0.05
    expert_theta_known: float = 0.3
    expert_theta_confirm: float = 0.8
    dqn_sync_period: int = 100
    acer_lambda: float = 1.0
    acer_c: float = 10.0
    acer_delta: float = 3.0
    acer_avg_rate: float = 0.99
    acer_entropy_coef: float = 0.01
    acer_logit_gain: float = 8.0

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, "
                              f"got {self.algorithm!r}")
        if self.domain not in DOMAINS:
            raise ConfigError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if not 0.0 <= self.ser < 1.0:
            raise ConfigError("ser must be in [0, 1)")
        if not 0.0 <= self.guidance_beta <= 1.0:
            raise ConfigError("guidance.beta must be in [0, 1]")
        if self.guidance_mode not in ("none", "bc", "fb"):
            raise ConfigError("guidance.mode must be none, bc or fb")
        for name in ("train_dialogues", "eval_dialogues", "checkpoint_every",
                     "batch_size", "buffer_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.explore_mode not in ("auto", "greedy", "eps_greedy",
                                     "boltzmann", "eps_boltzmann"):
            raise ConfigError(f"unknown explore.mode {self.explore_mode!r}")


def _parse_bool(s):
    s = s.strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_seeds(s):
    return tuple(int(x) for x in str(s).split(",") if x.strip() != "")


# config-file key -> (attribute, parser)
KEY_MAP = {
    "algorithm": ("algorithm", str),
    "domain": ("domain", str),
    "ser": ("ser", float),
    "seeds": ("seeds", _parse_seeds),
    "train_dialogues": ("train_dialogues", int),
    "eval_dialogues": ("eval_dialogues", int),
    "checkpoint_every": ("checkpoint_every", int),
    "lr": ("lr", float),
    "batch_size": ("batch_size", int),
    "buffer_size": ("buffer_size", int),
    "gamma": ("gamma", float),
    "dropout": ("dropout", float),
    "trace": ("trace", _parse_bool),
    "guidance.mode": ("guidance_mode", str),
    "guidance.beta": ("guidance_beta", float),
    "explore.mode": ("explore_mode", str),
    "explore.eps_start": ("explore_eps_start", float),
    "explore.eps_end": ("explore_eps_end", float),
    "explore.decay_horizon": ("explore_decay_horizon", int),
    "explore.tau": ("explore_tau", float),
    "explore.test_eps": ("explore_test_eps", float),
    "expert.theta_known": ("expert_theta_known", float),
    "expert.theta_confirm": ("expert_theta_confirm", float),
    "dqn.sync_period": ("dqn_sync_period", int),
    "acer.lambda": ("acer_lambda", float),
    "acer.c": ("acer_c", float),
    "acer.delta": ("acer_delta", float),
    "acer.avg_rate": ("acer_avg_rate", float),
    "acer.entropy_coef": ("acer_entropy_coef", float),
    "acer.logit_gain": ("acer_logit_gain", float),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in KEY_MAP.items()}


def _apply(config, key, raw):
    if key not in KEY_MAP:
        raise ConfigError(f"unknown config key: {key!r}")
    attr, parser = KEY_MAP[key]
    try:
        setattr(config, attr, parser(raw.strip()))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    """Build a config from an optional file plus key=value overrides.
    The DILUTE_RL_SEED environment variable, when set, replaces the seed
    list with a single seed."""
    config = ExperimentConfig()
    if path is not None:
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = line.split("=", 1)
                _apply(config, key.strip(), raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        key, raw = item.split("=", 1)
        _apply(config, key.strip(), raw)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        config.seeds = (int(env_seed),)
    config.validate()
    return config


def config_to_text(config: ExperimentConfig) -> str:
    """The effective configuration, one sorted key = value per line."""
    lines = []
    for f in fields(config):
        key = _ATTR_TO_KEY[f.name]
        value = getattr(config, f.name)
        if f.name == "seeds":
            value = ",".join(str(s) for s in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(sorted(lines)) + "\n"


def resolved_explore_mode(config: ExperimentConfig) -> str:
    if config.explore_mode != "auto":
        return config.explore_mode
    return "eps_greedy" if config.algorithm == "hard-dqn" else "eps_boltzmann"
