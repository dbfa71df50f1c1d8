"""The retrosynthesis game: depth-limited recursive play and cost accounting."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .errors import InputError, ParameterError, StructureError
from .universe import Molecule, Reaction


@dataclass(frozen=True)
class GameConfig:
    d_max: int = 10
    c_rxn_default: float = 1.0
    c_sub_default: float = 0.0
    P1: float = 10.0
    P2: float = 100.0

    def __post_init__(self):
        if self.d_max < 1:
            raise ParameterError("d_max must be >= 1")
        if not self.P2 > self.P1 > self.c_rxn_default >= 0:
            raise ParameterError("need P2 > P1 > c_rxn_default >= 0")
        if self.c_sub_default < 0:
            raise ParameterError("c_sub_default must be >= 0")

    def rxn_cost(self, r: Reaction) -> float:
        return self.c_rxn_default if r.cost is None else r.cost

    def sub_cost(self, price: Optional[float]) -> float:
        return self.c_sub_default if price is None else price


class LeafKind(str, enum.Enum):
    BUYABLE = "buyable"
    DEPTH = "depth-penalty"
    DEAD_END = "dead-end"
    INTERNAL = "internal"


class Outcome(str, enum.Enum):
    WIN = "Win"
    DEPTH_LOSS = "DepthLoss"
    DEAD_END_LOSS = "DeadEndLoss"


@dataclass
class ReactionNode:
    reaction: Reaction
    children: list["MoleculeNode"]


@dataclass
class MoleculeNode:
    molecule: Molecule
    delta: int
    kind: LeafKind
    reaction: Optional[ReactionNode] = None
    price: Optional[float] = None  # substrate cost of a buyable leaf; None means config default

    def walk(self):
        """Molecule nodes in pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if node.reaction is not None:
                stack.extend(reversed(node.reaction.children))


@dataclass
class SynthesisTree:
    root: MoleculeNode
    d_max: int

    def molecule_nodes(self):
        return self.root.walk()

    def reaction_nodes(self):
        return [n.reaction for n in self.root.walk() if n.reaction is not None]

    def leaves(self):
        return [n for n in self.root.walk() if n.reaction is None]


@dataclass(frozen=True)
class VisitCost:
    molecule: Molecule
    delta: int
    cost: float


@dataclass
class EpisodeRecord:
    tree: SynthesisTree
    total_cost: float
    outcome: Outcome
    visit_costs: list[VisitCost] = field(default_factory=list)

    @property
    def target(self) -> Molecule:
        return self.tree.root.molecule


def terminal_value(universe, m: Molecule, delta: int, config: GameConfig) -> Optional[float]:
    """Value fixed by the terminating conditions, or None if m must be played."""
    if m in universe.buyable:
        return config.sub_cost(universe.buyable[m])
    if delta <= 0:
        return config.P1
    if not universe.expand(m):
        return config.P2
    return None


def play_game(universe, policy, target: Molecule, config: GameConfig, rng) -> EpisodeRecord:
    """Play one game from ``target`` at residual depth d_max."""
    if not universe.contains(target):
        raise InputError(f"target {target!r} is not a molecule of this universe")

    def visit(m: Molecule, delta: int) -> MoleculeNode:
        if m in universe.buyable:
            return MoleculeNode(m, delta, LeafKind.BUYABLE, price=universe.buyable[m])
        if delta == 0:
            return MoleculeNode(m, 0, LeafKind.DEPTH)
        candidates = universe.expand(m)
        if not candidates:
            return MoleculeNode(m, delta, LeafKind.DEAD_END)
        r = policy.choose(m, delta, candidates, rng)
        children = [visit(c, delta - 1) for c in r.reactants]
        return MoleculeNode(m, delta, LeafKind.INTERNAL, ReactionNode(r, children))

    tree = SynthesisTree(visit(target, config.d_max), config.d_max)
    visits = collect_visit_costs(tree, config)
    return EpisodeRecord(tree, visits[0].cost, classify_outcome(tree), visits)


def _leaf_cost(node: MoleculeNode, config: GameConfig) -> float:
    if node.kind is LeafKind.BUYABLE:
        return config.sub_cost(node.price)
    if node.kind is LeafKind.DEPTH:
        return config.P1
    if node.kind is LeafKind.DEAD_END:
        return config.P2
    raise StructureError(f"internal node {node.molecule!r} has no reaction")


def _check(node: MoleculeNode, d_max: int):
    if not 0 <= node.delta <= d_max:
        raise StructureError(f"residual depth {node.delta} outside [0, {d_max}]")
    if node.reaction is None:
        if node.kind is LeafKind.INTERNAL:
            raise StructureError(f"internal node {node.molecule!r} has no reaction")
        if node.kind is LeafKind.DEPTH and node.delta != 0:
            raise StructureError("depth-penalty leaf with nonzero residual depth")
        return
    if node.kind is not LeafKind.INTERNAL:
        raise StructureError(f"leaf {node.molecule!r} carries a reaction")
    r = node.reaction.reaction
    kids = node.reaction.children
    if r.product != node.molecule or [k.molecule for k in kids] != list(r.reactants):
        raise StructureError(f"reaction node under {node.molecule!r} does not match its children")
    for k in kids:
        if k.delta != node.delta - 1:
            raise StructureError("child residual depth must be parent's minus one")


def _costs(tree: SynthesisTree, config: GameConfig) -> dict[int, float]:
    """Subtree cost for every molecule node, keyed by id(node)."""
    out: dict[int, float] = {}
    order = list(tree.root.walk())
    for node in order:
        _check(node, tree.d_max)
    for node in reversed(order):
        if node.reaction is None:
            out[id(node)] = _leaf_cost(node, config)
        else:
            c = config.rxn_cost(node.reaction.reaction)
            for k in node.reaction.children:
                c += out[id(k)]
            out[id(node)] = c
    return out


def tree_cost(tree: SynthesisTree, config: GameConfig) -> float:
    if tree.root.delta != tree.d_max:
        raise StructureError("root must sit at residual depth d_max")
    return _costs(tree, config)[id(tree.root)]


def collect_visit_costs(tree: SynthesisTree, config: GameConfig) -> list[VisitCost]:
    """One (molecule, residual depth, realized subtree cost) per node, root first."""
    costs = _costs(tree, config)
    return [VisitCost(n.molecule, n.delta, costs[id(n)]) for n in tree.root.walk()]


def branching_factor(tree: SynthesisTree) -> Optional[float]:
    rxns = tree.reaction_nodes()
    if not rxns:
        return None
    return sum(len(r.children) for r in rxns) / len(rxns)


def classify_outcome(tree: SynthesisTree) -> Outcome:
    kinds = {leaf.kind for leaf in tree.leaves()}
    if LeafKind.DEAD_END in kinds:
        return Outcome.DEAD_END_LOSS
    if LeafKind.DEPTH in kinds:
        return Outcome.DEPTH_LOSS
    return Outcome.WIN


# -- text format ------------------------------------------------------------

def format_tree(tree: SynthesisTree) -> str:
    lines = []

    def emit(node: MoleculeNode, indent: int):
        pad = "  " * indent
        price = "" if node.price is None else f" price={node.price!r}"
        lines.append(f"{pad}m {node.molecule} d={node.delta} {node.kind.value}{price}")
        if node.reaction is not None:
            r = node.reaction.reaction
            cost = "-" if r.cost is None else repr(r.cost)
            lines.append(f"{pad}  r t={r.template_id} cost={cost} -> {' '.join(r.reactants)}")
            for k in node.reaction.children:
                emit(k, indent + 2)

    emit(tree.root, 0)
    return "\n".join(lines) + "\n"


def parse_tree(text: str) -> SynthesisTree:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    pos = 0

    def parse(indent: int) -> MoleculeNode:
        nonlocal pos
        if pos >= len(rows):
            raise StructureError("truncated tree record")
        ln = rows[pos]
        pad = "  " * indent
        fields_ = ln[len(pad):].split()
        if not ln.startswith(pad) or fields_[0] != "m":
            raise StructureError(f"expected molecule line: {ln!r}")
        pos += 1
        price = None
        if len(fields_) > 4:
            price = float(fields_[4].split("=", 1)[1])
        node = MoleculeNode(fields_[1], int(fields_[2][2:]), LeafKind(fields_[3]), price=price)
        if node.kind is LeafKind.INTERNAL:
            rl = rows[pos][len(pad) + 2:].split()
            pos += 1
            tid = int(rl[1][2:])
            craw = rl[2][5:]
            reactants = tuple(rl[4:])
            r = Reaction(node.molecule, reactants, tid, None if craw == "-" else float(craw))
            kids = [parse(indent + 2) for _ in reactants]
            node.reaction = ReactionNode(r, kids)
        return node

    root = parse(0)
    return SynthesisTree(root, root.delta)
