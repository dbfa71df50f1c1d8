"""Exact per-(molecule, depth) cost averages and the layered value estimate."""
from __future__ import annotations

import threading
from typing import Optional

import numpy as np

from .engine import GameConfig, terminal_value
from .nn import FP_RADIUS, ValueNetwork
from .similarity import fingerprint

BOOTSTRAP_LOW = 1.0
BOOTSTRAP_HIGH = 100.0


class ValueStore:
    """Running mean of realized costs keyed by (canonical string, residual depth)."""

    def __init__(self):
        self.table: dict[tuple[str, int], list] = {}
        self.dirty: set[tuple[str, int]] = set()

    def __len__(self):
        return len(self.table)

    def record(self, m: str, delta: int, cost: float):
        key = (m, delta)
        entry = self.table.get(key)
        if entry is None:
            self.table[key] = [1, float(cost)]
        else:
            entry[0] += 1
            entry[1] += (cost - entry[1]) / entry[0]
        self.dirty.add(key)

    def record_costs(self, episode):
        for v in episode.visit_costs:
            self.record(v.molecule, v.delta, v.cost)
        return self

    def lookup(self, m: str, delta: int) -> Optional[float]:
        entry = self.table.get((m, delta))
        return None if entry is None else entry[1]

    def count(self, m: str, delta: int) -> int:
        entry = self.table.get((m, delta))
        return 0 if entry is None else entry[0]

    def purge(self):
        self.table.clear()
        self.dirty.clear()
        return self

    def take_dirty(self):
        """(molecule, depth, mean) for keys updated since the last call."""
        out = [(m, d, self.table[(m, d)][1]) for (m, d) in sorted(self.dirty)]
        self.dirty.clear()
        return out

    def items(self):
        for (m, d), (n, mean) in sorted(self.table.items()):
            yield m, d, n, mean

    def dumps(self) -> str:
        return "".join(f"{m}\t{d}\t{n}\t{mean!r}\n" for m, d, n, mean in self.items())

    @classmethod
    def loads(cls, text: str) -> "ValueStore":
        store = cls()
        for ln in text.splitlines():
            if not ln.strip():
                continue
            m, d, n, mean = ln.split("\t")
            store.table[(m, int(d))] = [int(n), float(mean)]
        return store


class NetworkCache:
    """Memoized inference of a fixed network.

    The fingerprint part of the first layer is cached per molecule, the scalar
    output per (molecule, depth). Call ``reset`` after the weights change.
    """

    def __init__(self, net: ValueNetwork):
        self.net = net
        self._first: dict[str, np.ndarray] = {}
        self._out: dict[tuple[str, int], float] = {}
        self._lock = threading.Lock()

    def reset(self):
        with self._lock:
            self._first.clear()
            self._out.clear()

    def values(self, keys) -> list[float]:
        out = self._out
        missing = [k for k in dict.fromkeys(keys) if k not in out]
        if missing:
            net = self.net
            rows = np.empty((len(missing), net.W[0].shape[1]))
            for i, (m, d) in enumerate(missing):
                f = self._first.get(m)
                if f is None:
                    f = net.first_layer(fingerprint(m, net.fp_bits, FP_RADIUS).on_bits)
                    self._first[m] = f
                rows[i] = f
            rows += np.outer(net.depth_feature([d for _, d in missing]), net.W[0][-1])
            vals = net.predict_from_first(rows)
            with self._lock:
                for k, v in zip(missing, vals):
                    out[k] = float(v)
        return [out[k] for k in keys]


class Estimator:
    """Value source with fixed precedence.

    1. terminating conditions (buyable, depth exhausted, no reactions);
    2. the exact store;
    3. the network, when one is attached;
    4. a uniform draw on [1, 100] from the caller's random source.
    """

    def __init__(self, universe, config: GameConfig, store: Optional[ValueStore] = None,
                 net: Optional[ValueNetwork] = None, cache: Optional[NetworkCache] = None):
        self.universe = universe
        self.config = config
        self.store = store if store is not None else ValueStore()
        self.cache = cache if cache is not None else (NetworkCache(net) if net is not None else None)

    @property
    def deterministic(self):
        return self.cache is not None

    def estimate(self, m: str, delta: int, rng=None) -> float:
        return self.estimate_many([(m, delta)], rng)[0]

    def estimate_many(self, keys, rng=None) -> list[float]:
        out = [0.0] * len(keys)
        pending = []
        table = self.store.table
        for i, (m, d) in enumerate(keys):
            t = terminal_value(self.universe, m, d, self.config)
            if t is not None:
                out[i] = t
                continue
            entry = table.get((m, d))
            if entry is not None:
                out[i] = entry[1]
            elif self.cache is not None:
                pending.append(i)
            else:
                out[i] = rng.uniform(BOOTSTRAP_LOW, BOOTSTRAP_HIGH)
        if pending:
            vals = self.cache.values([keys[i] for i in pending])
            for i, v in zip(pending, vals):
                out[i] = v
        return out


def estimate(store: ValueStore, net: Optional[ValueNetwork], m: str, delta: int, rng,
             config: GameConfig, universe) -> float:
    return Estimator(universe, config, store, net).estimate(m, delta, rng)
