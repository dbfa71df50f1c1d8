"""Synthetic reaction universe: string molecules, rewrite templates, buyable set.

Molecules are canonical strings over a small alphabet (``"A"``, ``"B"``, ...).
Any such string of length ``1..max_length`` is a molecule of the universe;
only the generated pool is stored, everything else is reached by rewriting.

Templates come in three kinds:

``cut``
    split the product at the first occurrence of a motif into two reactants.
``cut3``
    split at the first occurrence of one motif and the last occurrence of a
    second one, giving three reactants.
``sub``
    replace the first occurrence of a motif with another string (possibly
    empty, possibly longer) giving a single reactant.

The pool is built forward from the buyable building blocks, so every built
molecule has at least one template that disconnects it back into pool members.
"""
from __future__ import annotations

import hashlib
import random
import string
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .errors import InputError, ParameterError

FORMAT_VERSION = 1
ALPHABET = string.ascii_uppercase

Molecule = str


@dataclass(frozen=True)
class Reaction:
    product: Molecule
    reactants: tuple[Molecule, ...]
    template_id: int
    cost: Optional[float] = None

    @property
    def key(self) -> tuple:
        """Identity used by the reaction network: product, template, reactant multiset."""
        return (self.product, self.template_id, tuple(sorted(self.reactants)))


@dataclass(frozen=True)
class ReactionTemplate:
    id: int
    kind: str
    motifs: tuple[str, ...]
    offsets: tuple[int, ...] = ()
    replacement: str = ""
    weight: float = 1.0
    cost: Optional[float] = None

    def apply(self, m: Molecule, max_length: int) -> Optional[tuple[Molecule, ...]]:
        """Reactants for product ``m``, or None when the pattern does not match."""
        if self.kind == "cut":
            s = self.motifs[0]
            i = m.find(s)
            if i < 0:
                return None
            k = i + self.offsets[0]
            return (m[:k], m[k:])
        if self.kind == "cut3":
            s1, s2 = self.motifs
            i = m.find(s1)
            if i < 0:
                return None
            j = m.rfind(s2)
            if j < i + len(s1):
                return None
            a, b = i + self.offsets[0], j + self.offsets[1]
            return (m[:a], m[a:b], m[b:])
        # sub
        s = self.motifs[0]
        i = m.find(s)
        if i < 0:
            return None
        r = m[:i] + self.replacement + m[i + len(s):]
        if not 1 <= len(r) <= max_length:
            return None
        return (r,)

    def encode(self) -> tuple[str, str]:
        pattern = ",".join(self.motifs)
        if self.kind == "sub":
            rewrite = "to:" + self.replacement
        else:
            rewrite = "split:" + ",".join(str(k) for k in self.offsets)
        return pattern, rewrite

    @classmethod
    def decode(cls, tid, kind, pattern, rewrite, weight, cost):
        motifs = tuple(pattern.split(","))
        if kind == "sub":
            if not rewrite.startswith("to:"):
                raise InputError(f"bad rewrite for template {tid}: {rewrite!r}")
            return cls(int(tid), kind, motifs, (), rewrite[3:], float(weight), cost)
        if kind not in ("cut", "cut3") or not rewrite.startswith("split:"):
            raise InputError(f"bad template {tid}: {kind} {rewrite!r}")
        offsets = tuple(int(k) for k in rewrite[6:].split(","))
        if len(offsets) != len(motifs):
            raise InputError(f"template {tid}: motif/offset count mismatch")
        return cls(int(tid), kind, motifs, offsets, "", float(weight), cost)


@dataclass(frozen=True)
class UniverseParams:
    n_molecules: int = 2000
    n_templates: int = 40
    buyable_fraction: float = 0.3
    alphabet_size: int = 6
    max_length: int = 40
    dead_end_fraction: float = 0.1
    max_reactions: int = 50
    buyable_min_length: int = 1
    buyable_max_length: int = 6
    cut3_fraction: float = 0.15
    sub_fraction: float = 0.35
    grow_fraction: float = 0.3
    reaction_cost: Optional[float] = None
    substrate_cost: Optional[float] = None

    def validate(self):
        if self.n_molecules < 10:
            raise ParameterError("n_molecules must be >= 10")
        if self.n_templates < 2:
            raise ParameterError("n_templates must be >= 2")
        if not 0.0 < self.buyable_fraction <= 1.0:
            raise ParameterError("buyable_fraction must be in (0, 1]")
        if not 2 <= self.alphabet_size <= len(ALPHABET):
            raise ParameterError(f"alphabet_size must be in [2, {len(ALPHABET)}]")
        if not 1 <= self.buyable_min_length <= self.buyable_max_length <= self.max_length:
            raise ParameterError("need 1 <= buyable_min_length <= buyable_max_length <= max_length")
        if not 0.0 <= self.dead_end_fraction < 1.0:
            raise ParameterError("dead_end_fraction must be in [0, 1)")
        if self.max_reactions < 1:
            raise ParameterError("max_reactions must be >= 1")
        for name in ("cut3_fraction", "sub_fraction", "grow_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1]")
        if self.cut3_fraction + self.sub_fraction > 1.0:
            raise ParameterError("cut3_fraction + sub_fraction must be <= 1")
        for name in ("reaction_cost", "substrate_cost"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ParameterError(f"{name} must be >= 0")
        n_buy = self.n_buyable
        capacity = sum(self.alphabet_size ** n
                       for n in range(self.buyable_min_length, self.buyable_max_length + 1))
        if n_buy > capacity:
            raise ParameterError("too many buyables for the allowed buyable lengths")

    @property
    def n_buyable(self) -> int:
        return max(1, round(self.buyable_fraction * self.n_molecules))


def _fmt(v) -> str:
    return "-" if v is None else repr(v)


def _parse_opt_float(s: str) -> Optional[float]:
    return None if s == "-" else float(s)


@dataclass
class Universe:
    seed: int
    params: UniverseParams
    templates: list[ReactionTemplate]
    buyable: dict[Molecule, Optional[float]]
    molecules: list[Molecule]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._ordered = sorted(self.templates, key=lambda t: (-t.weight, t.id))
        self._alphabet = frozenset(ALPHABET[: self.params.alphabet_size])

    @property
    def max_reactions_per_molecule(self) -> int:
        return self.params.max_reactions

    def contains(self, m: Molecule) -> bool:
        return (isinstance(m, str) and 1 <= len(m) <= self.params.max_length
                and set(m) <= self._alphabet)

    def is_buyable(self, m: Molecule) -> bool:
        return m in self.buyable

    def expand(self, m: Molecule) -> tuple[Reaction, ...]:
        """Candidate reactions making ``m``, most relevant template first, capped."""
        hit = self._cache.get(m)
        if hit is not None:
            return hit
        out = []
        cap = self.params.max_reactions
        max_len = self.params.max_length
        for t in self._ordered:
            reactants = t.apply(m, max_len)
            if reactants is None:
                continue
            cost = t.cost if t.cost is not None else self.params.reaction_cost
            out.append(Reaction(m, reactants, t.id, cost))
            if len(out) == cap:
                break
        res = tuple(out)
        self._cache[m] = res
        return res

    def non_buyable_pool(self) -> list[Molecule]:
        return [m for m in self.molecules if m not in self.buyable]

    # -- serialization ---------------------------------------------------

    def serialize(self) -> str:
        p = asdict(self.params)
        header = " ".join(["retroplay-universe", f"version={FORMAT_VERSION}", f"seed={self.seed}"]
                          + [f"{k}={_fmt(p[k])}" for k in sorted(p)])
        lines = [header]
        for t in sorted(self.templates, key=lambda t: t.id):
            pattern, rewrite = t.encode()
            lines.append("\t".join(["T", str(t.id), t.kind, pattern, rewrite,
                                    repr(t.weight), _fmt(t.cost)]))
        for m in self.molecules:
            if m in self.buyable:
                lines.append(f"B\t{m}\t{_fmt(self.buyable[m])}")
            else:
                lines.append(f"M\t{m}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    @classmethod
    def deserialize(cls, text: str) -> "Universe":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("retroplay-universe"):
            raise InputError("not a universe file")
        head = dict(item.split("=", 1) for item in lines[0].split()[1:])
        if int(head.pop("version")) != FORMAT_VERSION:
            raise InputError("unsupported universe format version")
        seed = int(head.pop("seed"))
        kwargs = {}
        for f in fields(UniverseParams):
            if f.name not in head:
                raise InputError(f"universe header lacks {f.name}")
            raw = head.pop(f.name)
            if raw == "-":
                kwargs[f.name] = None
            elif f.type in ("int",):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        if head:
            raise InputError(f"unknown universe header keys: {sorted(head)}")
        params = UniverseParams(**kwargs)
        templates, buyable, molecules = [], {}, []
        for ln in lines[1:]:
            parts = ln.split("\t")
            tag = parts[0]
            if tag == "T" and len(parts) == 7:
                templates.append(ReactionTemplate.decode(*parts[1:6], _parse_opt_float(parts[6])))
            elif tag == "B" and len(parts) == 3:
                buyable[parts[1]] = _parse_opt_float(parts[2])
                molecules.append(parts[1])
            elif tag == "M" and len(parts) == 2:
                molecules.append(parts[1])
            elif ln.strip():
                raise InputError(f"bad universe record: {ln[:60]!r}")
        return cls(seed, params, templates, buyable, molecules)


# -- generation -------------------------------------------------------------

def _random_string(rng, alphabet, n):
    return "".join(rng.choice(alphabet) for _ in range(n))


def _make_templates(rng, params, alphabet):
    n = params.n_templates
    n_cut3 = round(params.cut3_fraction * n)
    n_sub = round(params.sub_fraction * n)
    n_cut = max(1, n - n_cut3 - n_sub)
    kinds = ["cut"] * n_cut + ["cut3"] * n_cut3 + ["sub"] * (n - n_cut - n_cut3)
    out = []
    for tid, kind in enumerate(kinds):
        weight = round(rng.random(), 6)
        if kind == "cut":
            ln = rng.choice((2, 2, 3))
            motif = _random_string(rng, alphabet, ln)
            out.append(ReactionTemplate(tid, kind, (motif,), (rng.randint(1, ln - 1),), weight=weight))
        elif kind == "cut3":
            m1, m2 = _random_string(rng, alphabet, 2), _random_string(rng, alphabet, 2)
            out.append(ReactionTemplate(tid, kind, (m1, m2), (1, 1), weight=weight))
        else:
            s = _random_string(rng, alphabet, rng.choice((2, 3)))
            if rng.random() < params.grow_fraction:
                t = _random_string(rng, alphabet, len(s) + rng.randint(1, 3))
            else:
                t = _random_string(rng, alphabet, len(s) - 1)
            while t == s:
                t = _random_string(rng, alphabet, len(s))
            out.append(ReactionTemplate(tid, kind, (s,), (), t, weight=weight))
    return out


class _Pool:
    """Pool members indexed by their 1- and 2-character prefixes and suffixes."""

    def __init__(self):
        self.items = []
        self.members = set()
        self.starts = {}
        self.ends = {}

    def add(self, m):
        self.items.append(m)
        self.members.add(m)
        for w in (1, 2):
            if len(m) >= w:
                self.starts.setdefault(m[:w], []).append(m)
                self.ends.setdefault(m[-w:], []).append(m)


def _try_build(rng, t, pool, alphabet):
    """Forward application: pick pool reactants and assemble a product."""
    if t.kind == "cut":
        s, k = t.motifs[0], t.offsets[0]
        left, right = pool.ends.get(s[:k]), pool.starts.get(s[k:])
        if not left or not right:
            return None
        reactants = (rng.choice(left), rng.choice(right))
        return "".join(reactants), reactants
    if t.kind == "cut3":
        (s1, s2), (k1, k2) = t.motifs, t.offsets
        left, right = pool.ends.get(s1[:k1]), pool.starts.get(s2[k2:])
        mids = [m for m in pool.starts.get(s1[k1:], ()) if m.endswith(s2[:k2])]
        if not left or not right or not mids:
            return None
        reactants = (rng.choice(left), rng.choice(mids), rng.choice(right))
        return "".join(reactants), reactants
    s, r = t.motifs[0], t.replacement
    a = rng.choice(pool.items)
    if r:
        i = a.find(r)
        if i < 0:
            return None
    else:
        i = rng.randint(0, len(a))
    return a[:i] + s + a[i + len(r):], (a,)


def _matching_string(rng, t, alphabet, params):
    core = "".join(t.motifs)
    room = params.max_length - len(core)
    if room < 0:
        return None
    pre = _random_string(rng, alphabet, rng.randint(0, min(room, 4)))
    post = _random_string(rng, alphabet, rng.randint(0, min(room - len(pre), 4)))
    product = pre + core + post
    reactants = t.apply(product, params.max_length)
    return None if reactants is None else (product, reactants)


def _dead_end(rng, alphabet, length, templates, max_len):
    """Random walk that never completes any template motif."""
    motifs = {m for t in templates for m in t.motifs}
    for _ in range(200):
        out = ""
        for _ in range(length):
            choices = [c for c in alphabet
                       if not any((out + c).endswith(m) for m in motifs)]
            if not choices:
                break
            out += rng.choice(choices)
        if len(out) == length and not any(t.apply(out, max_len) for t in templates):
            return out
    return None


def _build(rng, templates, pool, alphabet, params, count):
    """Add ``count`` products that some template disconnects back into the pool."""
    budget = 400 * count + 1000
    built = 0
    while built < count:
        budget -= 1
        if budget < -1000 * count - 1000:
            raise ParameterError("could not fill the molecule pool; relax max_length or templates")
        t = rng.choice(templates)
        if budget < 0:
            # forward building stalled: fall back to a random string holding a motif
            res = _matching_string(rng, t, alphabet, params)
        else:
            res = _try_build(rng, t, pool, alphabet)
        if res is None:
            continue
        product, reactants = res
        if (len(product) > params.max_length or product in pool.members
                or t.apply(product, params.max_length) != reactants):
            continue
        pool.add(product)
        built += 1


def generate_universe(seed: int, params: UniverseParams = UniverseParams()) -> Universe:
    params.validate()
    rng = random.Random(f"retroplay-universe:{seed}")
    alphabet = ALPHABET[: params.alphabet_size]
    templates = _make_templates(rng, params, alphabet)
    n_buy = params.n_buyable
    n_rest = params.n_molecules - n_buy
    n_dead = round(params.dead_end_fraction * n_rest)
    n_built = n_rest - n_dead

    pool = _Pool()
    while len(pool.items) < n_buy:
        m = _random_string(rng, alphabet,
                           rng.randint(params.buyable_min_length, params.buyable_max_length))
        if m not in pool.members:
            pool.add(m)
    buyable = {m: params.substrate_cost for m in pool.items}

    _build(rng, templates, pool, alphabet, params, n_built)

    lo = min(params.buyable_max_length + 1, params.max_length)
    made = 0
    budget = 200 * n_dead + 100
    while made < n_dead and budget > 0:
        budget -= 1
        m = _dead_end(rng, alphabet, rng.randint(lo, max(lo, params.max_length // 2)),
                      templates, params.max_length)
        if m is None or m in pool.members:
            continue
        pool.add(m)
        made += 1
    if made < n_dead:
        # the motifs leave (almost) no string untouched: top up with built molecules
        _build(rng, templates, pool, alphabet, params, n_dead - made)
    return Universe(seed, params, templates, buyable, pool.items)


def load_universe(path) -> Universe:
    with open(path) as fh:
        return Universe.deserialize(fh.read())
