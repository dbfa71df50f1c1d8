"""Policy-iteration training loop, policy evaluation and head-to-head comparison."""
from __future__ import annotations

import csv
import io
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import GameConfig, Outcome, branching_factor, play_game
from .errors import ParameterError
from .netdp import DPResult, ReactionNetwork, dp_store_entries, min_cost_dp
from .nn import ReplayBuffer, ValueNetwork, nn_train_update
from .policy import EpsilonGreedy, ValueGreedy, anneal_epsilon
from .value import Estimator, NetworkCache, ValueStore


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    eps_start: float = 0.2
    eps_step: float = 0.05
    eps_period: int = 200
    warmup: int = 50
    update_period: int = 50
    epochs: int = 100
    final_epochs: int = 100
    final_samples: int = 50_000
    profile: str = "full"
    seed: int = 0
    workers: int = 1
    buffer_capacity: int = 1_000_000

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if not 0 <= self.warmup < self.iterations:
            raise ParameterError("warmup must be in [0, iterations)")
        if self.update_period < 1:
            raise ParameterError("update_period must be >= 1")
        if self.eps_period < 1:
            raise ParameterError("eps_period must be >= 1")
        if not 0.0 <= self.eps_start <= 1.0 or self.eps_step < 0:
            raise ParameterError("need 0 <= eps_start <= 1 and eps_step >= 0")
        if not 1 <= self.epochs <= 100 or not 1 <= self.final_epochs <= 100:
            raise ParameterError("epochs must be in [1, 100]")
        if self.profile not in ("full", "desk"):
            raise ParameterError("profile must be 'full' or 'desk'")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.final_samples < 1 or self.buffer_capacity < 1:
            raise ParameterError("final_samples and buffer_capacity must be >= 1")

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        """Small-network defaults sized for a laptop run."""
        base = dict(profile="desk", epochs=10, final_epochs=20, final_samples=20_000)
        base.update(kw)
        return cls(**base)

    def epsilon(self, iteration: int) -> float:
        return anneal_epsilon(iteration, self.eps_start, self.eps_step, self.eps_period)

    def trains_after(self, iteration: int) -> bool:
        """True when the network is updated at the end of ``iteration`` (0-based)."""
        done = iteration + 1
        return done >= self.warmup and (done - self.warmup) % self.update_period == 0


@dataclass(frozen=True)
class Metrics:
    mean_cost: float
    mean_branching: float
    frac_below_p1: float
    frac_p1_p2: float
    frac_above_p2: float
    success: float
    n_plays: int = 0
    stderr: float = 0.0

    @classmethod
    def from_episodes(cls, episodes, config: GameConfig) -> "Metrics":
        costs = np.array([e.total_cost for e in episodes], dtype=np.float64)
        n = costs.size
        if n == 0:
            raise ParameterError("no episodes to summarize")
        bs = [b for b in (branching_factor(e.tree) for e in episodes) if b is not None]
        below = int(np.count_nonzero(costs < config.P1))
        above = int(np.count_nonzero(costs >= config.P2))
        wins = sum(e.outcome is Outcome.WIN for e in episodes)
        se = float(costs.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(costs.mean()), float(np.mean(bs)) if bs else math.nan,
                   below / n, (n - below - above) / n, above / n, wins / n, n, se)


@dataclass
class IterationRecord:
    iteration: int
    epsilon: float
    metrics: Metrics
    store_size_at_start: int = 0


METRIC_COLUMNS = ["iteration", "epsilon", "mean_cost", "mean_branching", "frac_below_p1",
                  "frac_p1_p2", "frac_above_p2", "success"]


def metrics_csv(series) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for rec in series:
        m = rec.metrics
        w.writerow([rec.iteration, repr(rec.epsilon), repr(m.mean_cost), repr(m.mean_branching),
                    repr(m.frac_below_p1), repr(m.frac_p1_p2), repr(m.frac_above_p2),
                    repr(m.success)])
    return buf.getvalue()


@dataclass
class TrainResult:
    net: ValueNetwork
    store: ValueStore
    network: ReactionNetwork
    series: list[IterationRecord]
    dp: Optional[DPResult] = None
    final_policy: Optional[ValueGreedy] = None
    dp_costs: dict = field(default_factory=dict)

    def __iter__(self):
        # unpacks as (net, store, network, series)
        return iter((self.net, self.store, self.network, self.series))

    @property
    def dp_mean_cost(self) -> float:
        return float(np.mean(list(self.dp_costs.values()))) if self.dp_costs else math.nan


def game_rng(seed: int, iteration: int, index: int) -> random.Random:
    return random.Random(f"retroplay-game:{seed}:{iteration}:{index}")


def _play_all(universe, policy, targets, gc, rngs, workers):
    jobs = list(zip(targets, rngs))
    if workers <= 1 or len(jobs) < 2:
        return [play_game(universe, policy, t, gc, r) for t, r in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: play_game(universe, policy, job[0], gc, job[1]), jobs))


def final_policy(universe, gc: GameConfig, dp: DPResult, net: ReactionNetwork,
                 value_net: ValueNetwork) -> ValueGreedy:
    """Deterministic greedy policy over DP minima, with the network for unseen states."""
    store = ValueStore()
    for m, d, v in dp_store_entries(dp, net):
        store.table[(m, d)] = [1, v]
    return ValueGreedy(universe, Estimator(universe, gc, store, value_net), gc)


def run_policy_iteration(universe, targets, tc: TrainConfig = TrainConfig(),
                         gc: GameConfig = GameConfig(),
                         on_iteration: Optional[Callable[[IterationRecord, "TrainResult"], None]] = None,
                         ) -> TrainResult:
    """Self-play policy iteration over ``targets``.

    Each iteration plays one epsilon-greedy, value-guided game per target. Games
    read the store as it stood at the start of the iteration; their visit costs
    and reactions are merged afterwards in target order. The network is trained
    on newly updated store entries every ``update_period`` iterations once
    ``warmup`` iterations have passed. After the last iteration, exact minima
    over the cumulative reaction network retrain the network one final time.
    """
    targets = list(targets)
    if not targets:
        raise ParameterError("targets must be nonempty")
    for t in targets:
        if not universe.contains(t):
            raise ParameterError(f"target {t!r} is not a molecule of this universe")
    net = ValueNetwork.from_profile(tc.profile, gc.d_max, seed=tc.seed)
    buffer = ReplayBuffer(tc.buffer_capacity, seed=tc.seed)
    store = ValueStore()
    network = ReactionNetwork()
    result = TrainResult(net, store, network, [])
    cache = None
    eps = None
    for it in range(tc.iterations):
        new_eps = tc.epsilon(it)
        if new_eps != eps:
            store.purge()
            eps = new_eps
        start_size = len(store)
        policy = EpsilonGreedy(ValueGreedy(universe, Estimator(universe, gc, store, cache=cache), gc), eps)
        order = list(range(len(targets)))
        random.Random(f"retroplay-order:{tc.seed}:{it}").shuffle(order)
        played = _play_all(universe, policy, [targets[i] for i in order], gc,
                           [game_rng(tc.seed, it, i) for i in order], tc.workers)
        episodes = [None] * len(targets)
        for i, ep in zip(order, played):
            episodes[i] = ep
        for ep in episodes:
            store.record_costs(ep)
            network.accumulate(ep)
        rec = IterationRecord(it, eps, Metrics.from_episodes(episodes, gc), start_size)
        result.series.append(rec)
        if tc.trains_after(it):
            batch = store.take_dirty()
            if batch:
                nn_train_update(net, buffer, batch, epochs=tc.epochs)
                cache = NetworkCache(net)
        if on_iteration is not None:
            on_iteration(rec, result)

    dp = min_cost_dp(network, universe.buyable, gc)
    entries = dp_store_entries(dp, network)
    if entries:
        if len(entries) > tc.final_samples:
            rng = random.Random(f"retroplay-final:{tc.seed}")
            entries = rng.sample(entries, tc.final_samples)
        nn_train_update(net, buffer, entries, epochs=tc.final_epochs)
    result.dp = dp
    result.dp_costs = {t: dp.value(t, gc.d_max) for t in targets}
    result.final_policy = final_policy(universe, gc, dp, network, net)
    return result


def save_checkpoint(result: TrainResult, directory, tag: str = "final"):
    os.makedirs(directory, exist_ok=True)
    result.net.save(os.path.join(directory, f"weights-{tag}.bin"))
    with open(os.path.join(directory, f"store-{tag}.tsv"), "w") as fh:
        fh.write(result.store.dumps())
    with open(os.path.join(directory, f"network-{tag}.tsv"), "w") as fh:
        fh.write(result.network.dumps())


# -- evaluation --------------------------------------------------------------

def play_costs(universe, policy, targets, plays_per_target: int, gc: GameConfig, seed: int = 0,
               workers: int = 1):
    """Episodes grouped by target: a list of ``plays_per_target`` episodes per target."""
    if plays_per_target < 1:
        raise ParameterError("plays_per_target must be >= 1")
    targets = list(targets)
    flat_t, rngs = [], []
    for i, t in enumerate(targets):
        for p in range(plays_per_target):
            flat_t.append(t)
            rngs.append(random.Random(f"retroplay-eval:{seed}:{i}:{p}"))
    eps = _play_all(universe, policy, flat_t, gc, rngs, workers)
    k = plays_per_target
    return [eps[i * k:(i + 1) * k] for i in range(len(targets))]


def evaluate_policy(universe, policy, targets, plays_per_target: int = 1,
                    gc: GameConfig = GameConfig(), seed: int = 0, workers: int = 1) -> Metrics:
    grouped = play_costs(universe, policy, targets, plays_per_target, gc, seed, workers)
    return Metrics.from_episodes([e for g in grouped for e in g], gc)


BANDS = ("below_p1", "p1_p2", "above_p2")


def _band(c: float, gc: GameConfig) -> str:
    if c < gc.P1:
        return BANDS[0]
    if c < gc.P2:
        return BANDS[1]
    return BANDS[2]


@dataclass
class Comparison:
    costs_a: list[float]
    costs_b: list[float]
    rows: dict  # band -> (a_cheaper %, b_cheaper %, tie %), over all targets

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["band", "a_cheaper_pct", "b_cheaper_pct", "tie_pct"])
        for band, (a, b, t) in self.rows.items():
            w.writerow([band, repr(a), repr(b), repr(t)])
        return buf.getvalue()


def compare_policies(universe, policy_a, policy_b, targets, gc: GameConfig = GameConfig(),
                     seed: int = 0) -> Comparison:
    """Single deterministic play per target under each policy, tallied by cost band.

    A target's band is set by the cheaper of its two costs; every percentage is
    taken over all targets so the band rows add up to the bulk row.
    """
    for p in (policy_a, policy_b):
        if not getattr(p, "deterministic", False):
            raise ParameterError("compare_policies needs deterministic policies")
    targets = list(targets)
    if not targets:
        raise ParameterError("targets must be nonempty")
    ca = [g[0].total_cost for g in play_costs(universe, policy_a, targets, 1, gc, seed)]
    cb = [g[0].total_cost for g in play_costs(universe, policy_b, targets, 1, gc, seed)]
    n = len(targets)
    counts = {band: [0, 0, 0] for band in BANDS}
    for a, b in zip(ca, cb):
        row = counts[_band(min(a, b), gc)]
        row[0 if a < b else 1 if b < a else 2] += 1
    rows = {band: tuple(100.0 * c / n for c in counts[band]) for band in BANDS}
    rows["bulk"] = tuple(100.0 * sum(counts[band][j] for band in BANDS) / n for j in range(3))
    return Comparison(ca, cb, rows)
