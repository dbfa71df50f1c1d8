"""Flat ``key = value`` run configuration with flag > environment > file > default precedence."""
from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, get_type_hints

from .engine import GameConfig
from .errors import ConfigError, RetroplayError
from .policy import SymmetricDisconnection
from .trainer import TrainConfig
from .universe import UniverseParams

ENV_PREFIX = "RETROPLAY_"
# keys that never change primary artifacts, so they stay out of the digest
VOLATILE_KEYS = ("run_dir", "workers")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # game
    d_max: int = 10
    c_rxn: float = 1.0
    c_sub: float = 0.0
    p1: float = 10.0
    p2: float = 100.0
    # policies
    policy: str = "sd"
    gamma: float = 1.5
    epsilon: float = 0.0
    plays: int = 1
    # training
    iterations: int = 1000
    eps_start: float = 0.2
    eps_step: float = 0.05
    eps_period: int = 200
    warmup: int = 50
    update_period: int = 50
    epochs: Optional[int] = None
    final_epochs: Optional[int] = None
    final_samples: Optional[int] = None
    desk_scale: bool = False
    workers: int = 1
    checkpoint_every: int = 0
    # universe
    n_molecules: int = 2000
    n_templates: int = 40
    buyable_fraction: float = 0.3
    alphabet_size: int = 6
    max_length: int = 40
    dead_end_fraction: float = 0.1
    max_reactions: int = 50
    buyable_min_length: int = 1
    buyable_max_length: int = 6
    reaction_cost: Optional[float] = None
    substrate_cost: Optional[float] = None
    # target selection
    n_train: int = 200
    n_test: int = 50
    cluster_threshold: float = 0.4
    target_min_length: int = 5
    target_max_length: int = 40
    min_cluster_size: int = 2
    # files
    universe_file: Optional[str] = None
    run_dir: Optional[str] = None

    def game(self) -> GameConfig:
        return GameConfig(self.d_max, self.c_rxn, self.c_sub, self.p1, self.p2)

    def universe_params(self) -> UniverseParams:
        return UniverseParams(
            n_molecules=self.n_molecules, n_templates=self.n_templates,
            buyable_fraction=self.buyable_fraction, alphabet_size=self.alphabet_size,
            max_length=self.max_length, dead_end_fraction=self.dead_end_fraction,
            max_reactions=self.max_reactions, buyable_min_length=self.buyable_min_length,
            buyable_max_length=self.buyable_max_length, reaction_cost=self.reaction_cost,
            substrate_cost=self.substrate_cost)

    def train(self) -> TrainConfig:
        kw = dict(iterations=self.iterations, eps_start=self.eps_start, eps_step=self.eps_step,
                  eps_period=self.eps_period, warmup=self.warmup,
                  update_period=self.update_period, seed=self.seed, workers=self.workers)
        for k in ("epochs", "final_epochs", "final_samples"):
            if getattr(self, k) is not None:
                kw[k] = getattr(self, k)
        return TrainConfig.desk(**kw) if self.desk_scale else TrainConfig(**kw)

    def validate(self) -> "RunConfig":
        """Build every derived config so constraint violations surface with a key name."""
        checks = [
            (("p1", "p2", "c_rxn", "c_sub", "d_max"), self.game),
            (("n_molecules", "n_templates", "buyable_fraction", "alphabet_size", "max_length",
              "dead_end_fraction", "max_reactions", "buyable_min_length", "buyable_max_length",
              "reaction_cost", "substrate_cost"), self.universe_params),
            (("iterations", "warmup", "update_period", "eps_start", "eps_step", "eps_period",
              "epochs", "final_epochs", "final_samples", "workers"), self.train),
            (("gamma",), lambda: SymmetricDisconnection(self.gamma)),
        ]
        for keys, build in checks:
            try:
                out = build()
                if hasattr(out, "validate"):
                    out.validate()
            except RetroplayError as e:
                raise ConfigError(_blame(keys, str(e)), str(e)) from None
        if self.policy not in POLICIES:
            raise ConfigError("policy", f"policy must be one of {', '.join(POLICIES)}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon", "epsilon must be in [0, 1]")
        for k in ("plays", "n_train", "min_cluster_size", "target_min_length"):
            if getattr(self, k) < 1:
                raise ConfigError(k, f"{k} must be >= 1")
        if self.n_test < 0 or self.checkpoint_every < 0:
            raise ConfigError("n_test" if self.n_test < 0 else "checkpoint_every", "must be >= 0")
        if self.target_max_length < self.target_min_length:
            raise ConfigError("target_max_length", "target_max_length < target_min_length")
        if not 0.0 <= self.cluster_threshold < 1.0:
            raise ConfigError("cluster_threshold", "cluster_threshold must be in [0, 1)")
        return self

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items())

    def digest(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in VOLATILE_KEYS}
        text = "".join(f"{k} = {_format(v)}\n" for k, v in d.items())
        return hashlib.sha256(text.encode()).hexdigest()


POLICIES = ("random", "sd", "sd-eps", "value")


def _blame(keys, message: str) -> str:
    """The key named earliest in the message, else the first candidate."""
    low = message.lower()
    hits = [(low.find(k), k) for k in keys if k in low]
    return min(hits)[1] if hits else keys[0]


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


_HINTS = get_type_hints(RunConfig)
KEYS = tuple(f.name for f in fields(RunConfig))


def parse_value(key: str, text: str):
    if key not in _HINTS:
        raise ConfigError(key, f"unknown key {key!r}")
    hint = _HINTS[key]
    text = text.strip()
    optional = hint == Optional[int] or hint == Optional[float] or hint == Optional[str]
    if optional:
        if text.lower() in ("none", "-", ""):
            return None
        hint = {Optional[int]: int, Optional[float]: float, Optional[str]: str}[hint]
    try:
        if hint is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        return hint(text)
    except ValueError:
        raise ConfigError(key, f"cannot read {text!r} as {hint.__name__}") from None


def read_config_file(path) -> dict:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    out = {}
    for n, ln in enumerate(lines, 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise ConfigError("config", f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in ln.split("=", 1))
        out[key] = parse_value(key, val)
    return out


def read_env(environ=None) -> dict:
    """Config keys from ``RETROPLAY_<KEY>`` variables; other variables are left alone."""
    environ = os.environ if environ is None else environ
    out = {}
    for k in KEYS:
        name = ENV_PREFIX + k.upper()
        if name in environ:
            out[k] = parse_value(k, environ[name])
    return out


def parse_config(path=None, flags: Optional[dict] = None, environ=None) -> RunConfig:
    """Merge defaults, file, environment and flags (later wins) and validate."""
    merged = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update(read_env(environ))
    for k, v in (flags or {}).items():
        if k not in _HINTS:
            raise ConfigError(k, f"unknown key {k!r}")
        if v is not None:
            merged[k] = v
    return replace(RunConfig(), **merged).validate()
