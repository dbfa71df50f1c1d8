"""Reaction-selection policies and the exploration schedule.

Every policy exposes ``choose(m, delta, candidates, rng) -> Reaction`` where
``candidates`` is the deterministic list produced by ``Universe.expand`` and
``rng`` is a ``random.Random``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

from .engine import GameConfig, terminal_value
from .errors import ParameterError


def random_choice(candidates, rng):
    return candidates[rng.randrange(len(candidates))]


def heuristic_score(r, gamma: float) -> float:
    """Symmetric-disconnection score: product size minus reactant sizes, each raised to gamma."""
    return len(r.product) ** gamma - sum(len(m) ** gamma for m in r.reactants)


def symmetric_disconnection_choice(candidates, gamma: float):
    best, best_score = None, -math.inf
    for r in candidates:
        s = heuristic_score(r, gamma)
        if s > best_score:
            best, best_score = r, s
    return best


def epsilon_greedy_choice(base, m, delta, candidates, epsilon: float, rng):
    """Base policy's pick with probability 1-epsilon, else uniform over all candidates."""
    if epsilon <= 0.0:
        return base.choose(m, delta, candidates, rng)
    if epsilon >= 1.0 or rng.random() < epsilon:
        return random_choice(candidates, rng)
    return base.choose(m, delta, candidates, rng)


def value_greedy_choice(m, delta, candidates, values, config: GameConfig, universe, rng=None):
    """Candidate minimizing reaction cost plus reactant values one level deeper.

    Terminating conditions fix reactant values before ``values`` is asked;
    ``values.estimate_many`` receives the remaining (molecule, depth) keys.
    Ties go to the earlier candidate.
    """
    d = delta - 1
    fixed = {}
    pending = []
    for r in candidates:
        for c in r.reactants:
            if c in fixed:
                continue
            t = terminal_value(universe, c, d, config)
            fixed[c] = t
            if t is None:
                pending.append(c)
    if pending:
        est = values.estimate_many([(c, d) for c in pending], rng)
        for c, v in zip(pending, est):
            fixed[c] = v
    best, best_score = None, math.inf
    for r in candidates:
        s = config.rxn_cost(r)
        for c in r.reactants:
            s += fixed[c]
        if s < best_score:
            best, best_score = r, s
    return best


def anneal_epsilon(iteration: int, start: float = 0.2, step: float = 0.05, period: int = 200) -> float:
    """Stepwise exploration schedule: drop by ``step`` every ``period`` iterations, floor at 0."""
    if iteration < 0:
        raise ParameterError("iteration must be >= 0")
    # round() keeps 0.2 - 3*0.05 from printing as 0.04999999999999999
    return max(0.0, round(start - step * (iteration // period), 12))


class TableValues:
    """Fixed lookup table as a value source; missing keys raise KeyError."""

    def __init__(self, table: dict):
        self.table = table

    def estimate_many(self, keys, rng=None):
        return [self.table[k] for k in keys]


@dataclass(frozen=True)
class RandomPolicy:
    deterministic = False

    def choose(self, m, delta, candidates, rng):
        return random_choice(candidates, rng)


@dataclass(frozen=True)
class SymmetricDisconnection:
    gamma: float = 1.5
    deterministic = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError("gamma must be > 0")

    def choose(self, m, delta, candidates, rng):
        return symmetric_disconnection_choice(candidates, self.gamma)


@dataclass(frozen=True)
class EpsilonGreedy:
    base: Any
    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ParameterError("epsilon must be in [0, 1]")

    @property
    def deterministic(self):
        return self.epsilon == 0.0 and self.base.deterministic

    def choose(self, m, delta, candidates, rng):
        return epsilon_greedy_choice(self.base, m, delta, candidates, self.epsilon, rng)


@dataclass(frozen=True, eq=False)
class ValueGreedy:
    universe: Any
    values: Any
    config: GameConfig

    @property
    def deterministic(self):
        return getattr(self.values, "deterministic", True)

    def choose(self, m, delta, candidates, rng):
        return value_greedy_choice(m, delta, candidates, self.values, self.config,
                                   self.universe, rng)
