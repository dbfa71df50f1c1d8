"""Cumulative AND/OR reaction network and exact depth-indexed minimum-cost DP over it.

Also holds the brute-force oracles used to check the DP against the full universe.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .engine import (GameConfig, LeafKind, MoleculeNode, ReactionNode, SynthesisTree,
                     terminal_value)
from .errors import CapacityError, InputError
from .universe import Reaction

STATE_LIMIT = 10 ** 6


class ReactionNetwork:
    def __init__(self):
        self.molecules: dict[str, int] = {}
        self.reactions: dict[tuple, Reaction] = {}
        self.by_product: dict[str, list[tuple]] = {}
        self.dead_ends: set[str] = set()

    def __len__(self):
        return len(self.molecules)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    def add_molecule(self, m: str):
        if m not in self.molecules:
            self.molecules[m] = len(self.molecules)

    def add_reaction(self, r: Reaction):
        key = r.key
        if key in self.reactions:
            return
        self.add_molecule(r.product)
        for c in r.reactants:
            self.add_molecule(c)
        self.reactions[key] = r
        self.by_product.setdefault(r.product, []).append(key)

    def accumulate(self, episode):
        """Insert every molecule and reaction of a played tree; duplicates merge."""
        for node in episode.tree.molecule_nodes():
            self.add_molecule(node.molecule)
            if node.reaction is not None:
                self.add_reaction(node.reaction.reaction)
            elif node.kind is LeafKind.DEAD_END:
                self.dead_ends.add(node.molecule)
        return self

    def known_reactions(self, m: str) -> list[Reaction]:
        return [self.reactions[k] for k in sorted(self.by_product.get(m, ()))]

    def is_expanded(self, m: str) -> bool:
        return m in self.by_product or m in self.dead_ends

    # -- persistence -------------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for m in self.molecules:
            lines.append(f"M\t{m}\t{'dead' if m in self.dead_ends else '-'}")
        for r in self.reactions.values():
            cost = "-" if r.cost is None else repr(r.cost)
            lines.append(f"R\t{r.product}\t{','.join(r.reactants)}\t{r.template_id}\t{cost}")
        return "".join(ln + "\n" for ln in lines)

    @classmethod
    def loads(cls, text: str) -> "ReactionNetwork":
        net = cls()
        for ln in text.splitlines():
            if not ln.strip():
                continue
            parts = ln.split("\t")
            if parts[0] == "M" and len(parts) == 3:
                net.add_molecule(parts[1])
                if parts[2] == "dead":
                    net.dead_ends.add(parts[1])
            elif parts[0] == "R" and len(parts) == 5:
                cost = None if parts[4] == "-" else float(parts[4])
                net.add_reaction(Reaction(parts[1], tuple(parts[2].split(",")), int(parts[3]), cost))
            else:
                raise InputError(f"bad network record: {ln[:60]!r}")
        return net


@dataclass
class DPResult:
    """Minimal cost and best choice for every (network molecule, residual depth).

    ``choice`` holds a reaction index into ``reactions`` or -1 for terminal states.
    """
    index: dict[str, int]
    names: list[str]
    reactions: list[Reaction]
    values: np.ndarray  # (d_max + 1, n_molecules)
    choice: np.ndarray  # (d_max + 1, n_molecules)
    buyable: dict
    config: GameConfig

    def value(self, m: str, delta: int) -> float:
        return float(self.values[delta, self.index[m]])

    def best(self, m: str, delta: int):
        """The argmin reaction, or a terminal tag: 'buyable', 'depth-penalty' or 'dead-end'."""
        c = int(self.choice[delta, self.index[m]])
        if c >= 0:
            return self.reactions[c]
        if m in self.buyable:
            return LeafKind.BUYABLE.value
        if delta == 0:
            return LeafKind.DEPTH.value
        return LeafKind.DEAD_END.value

    def records(self):
        """(molecule, depth, value, choice) rows in network order."""
        for m in self.names:
            for d in range(self.values.shape[0]):
                b = self.best(m, d)
                if isinstance(b, Reaction):
                    b = f"t={b.template_id}:{'.'.join(b.reactants)}"
                yield m, d, self.value(m, d), b

    def dumps(self) -> str:
        return "".join(f"{m}\t{d}\t{v!r}\t{c}\n" for m, d, v, c in self.records())


def _csr(net: ReactionNetwork, config: GameConfig):
    names = list(net.molecules)
    index = dict(net.molecules)
    reactions, mol_ptr, rxn_idx = [], [0], []
    for m in names:
        for key in sorted(net.by_product.get(m, ())):
            rxn_idx.append(len(reactions))
            reactions.append(net.reactions[key])
        mol_ptr.append(len(rxn_idx))
    reac_ptr, reac_idx = [0], []
    for r in reactions:
        reac_idx.extend(index[c] for c in r.reactants)
        reac_ptr.append(len(reac_idx))
    cost = np.array([config.rxn_cost(r) for r in reactions], dtype=np.float64)
    as_i64 = lambda xs: np.array(xs, dtype=np.int64)  # noqa: E731
    return (names, index, reactions, as_i64(mol_ptr), as_i64(rxn_idx), as_i64(reac_ptr),
            as_i64(reac_idx), cost)


def min_cost_dp(net: ReactionNetwork, buyable, config: GameConfig) -> DPResult:
    """Layer-by-layer minimum cost over the known reactions, from depth 0 up to d_max."""
    names, index, reactions, mol_ptr, rxn_idx, reac_ptr, reac_idx, cost = _csr(net, config)
    n = len(names)
    buy_cost = np.full(n, np.nan)
    for i, m in enumerate(names):
        if m in buyable:
            buy_cost[i] = config.sub_cost(buyable[m])
    values = np.empty((config.d_max + 1, n))
    choice = np.full((config.d_max + 1, n), -1, dtype=np.int64)
    values[0] = np.where(np.isnan(buy_cost), config.P1, buy_cost)
    for d in range(1, config.d_max + 1):
        values[d], choice[d] = kernels.dp_layer(values[d - 1], mol_ptr, rxn_idx, reac_ptr,
                                                reac_idx, cost, buy_cost, config.P2)
    return DPResult(index, names, reactions, values, choice, dict(buyable), config)


def extract_best_tree(dp: DPResult, net: ReactionNetwork, target: str,
                      config: Optional[GameConfig] = None) -> SynthesisTree:
    config = config or dp.config
    if target not in dp.index:
        raise InputError(f"{target!r} is not in the reaction network")

    def build(m, d):
        b = dp.best(m, d)
        if not isinstance(b, Reaction):
            kind = LeafKind(b)
            return MoleculeNode(m, d, kind, price=dp.buyable.get(m) if kind is LeafKind.BUYABLE else None)
        return MoleculeNode(m, d, LeafKind.INTERNAL,
                            ReactionNode(b, [build(c, d - 1) for c in b.reactants]))

    return SynthesisTree(build(target, config.d_max), config.d_max)


def bellman_residuals(dp: DPResult, net: ReactionNetwork):
    """Re-evaluate the recursion at every non-terminal state; yields (m, d, residual)."""
    cfg = dp.config
    for m in dp.names:
        if m in dp.buyable:
            continue
        rxns = net.known_reactions(m)
        for d in range(1, cfg.d_max + 1):
            if not rxns:
                best = cfg.P2
            else:
                best = min(cfg.rxn_cost(r) + sum(dp.value(c, d - 1) for c in r.reactants)
                           for r in rxns)
            yield m, d, dp.value(m, d) - best


def dp_store_entries(dp: DPResult, net: ReactionNetwork):
    """(molecule, depth, minimal cost) for expanded, non-buyable molecules at depth >= 1."""
    out = []
    for m in dp.names:
        if m in dp.buyable or not net.is_expanded(m):
            continue
        i = dp.index[m]
        for d in range(1, dp.values.shape[0]):
            out.append((m, d, float(dp.values[d, i])))
    return out


# -- oracles ----------------------------------------------------------------

def brute_force_optimal(universe, target: str, config: GameConfig, limit: int = STATE_LIMIT) -> float:
    """Exact optimal cost over the full universe by memoized depth-indexed recursion."""
    memo: dict[tuple[str, int], float] = {}

    def v(m, d):
        key = (m, d)
        hit = memo.get(key)
        if hit is not None:
            return hit
        t = terminal_value(universe, m, d, config)
        if t is None:
            if len(memo) >= limit:
                raise CapacityError(f"more than {limit} states; universe too large for brute force")
            t = min(config.rxn_cost(r) + sum(v(c, d - 1) for c in r.reactants)
                    for r in universe.expand(m))
        memo[key] = t
        return t

    if not universe.contains(target):
        raise InputError(f"{target!r} is not a molecule of this universe")
    return v(target, config.d_max)


def plain_recursive_optimal(universe, target: str, config: GameConfig, delta: Optional[int] = None) -> float:
    """Same recursion with no memo; exponential, only for tiny cases."""
    d = config.d_max if delta is None else delta
    if target in universe.buyable:
        return config.sub_cost(universe.buyable[target])
    if d == 0:
        return config.P1
    rxns = universe.expand(target)
    if not rxns:
        return config.P2
    best = None
    for r in rxns:
        s = config.rxn_cost(r)
        for c in r.reactants:
            s += plain_recursive_optimal(universe, c, config, d - 1)
        if best is None or s < best:
            best = s
    return best


def expand_network(universe, roots, config: GameConfig, limit: int = STATE_LIMIT) -> ReactionNetwork:
    """Network holding every reaction reachable from ``roots`` within d_max steps."""
    net = ReactionNetwork()
    best: dict[str, int] = {}
    buckets: list[list[str]] = [[] for _ in range(config.d_max + 1)]
    for m in roots:
        net.add_molecule(m)
        if best.get(m, -1) < config.d_max:
            best[m] = config.d_max
            buckets[config.d_max].append(m)
    for d in range(config.d_max, 0, -1):
        for m in buckets[d]:
            if best[m] != d or m in universe.buyable:
                continue
            rxns = universe.expand(m)
            if not rxns:
                net.dead_ends.add(m)
            for r in rxns:
                net.add_reaction(r)
                for c in r.reactants:
                    if best.get(c, -1) < d - 1:
                        best[c] = d - 1
                        buckets[d - 1].append(c)
            if len(net) > limit:
                raise CapacityError("exhaustive network exceeds the state limit")
    return net
