"""Hashed substring fingerprints, Tanimoto similarity, Taylor-Butina target selection."""
from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import CapacityError, InputError, ParameterError

FP_SALT = 0x5EED_F1A6_0000_0003
CLUSTER_BITS = 1024
NETWORK_BITS = 16384


@dataclass(frozen=True, eq=False)
class Fingerprint:
    length: int
    on_bits: np.ndarray  # sorted unique indices of set bits

    @property
    def popcount(self) -> int:
        return int(self.on_bits.size)

    @property
    def bits(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.uint8)
        out[self.on_bits] = 1
        return out

    def packed(self) -> np.ndarray:
        return np.packbits(self.bits, bitorder="little").view(np.uint64)

    def __eq__(self, other):
        return (isinstance(other, Fingerprint) and self.length == other.length
                and np.array_equal(self.on_bits, other.on_bits))

    def __hash__(self):
        return hash((self.length, self.on_bits.tobytes()))


def _valid_length(length: int) -> bool:
    return length >= 64 and length & (length - 1) == 0


@lru_cache(maxsize=200_000)
def _on_bits(m: str, length: int, radius: int) -> np.ndarray:
    bits = kernels.substring_bits(m.encode("ascii"), 2 * radius + 1, length, FP_SALT)
    bits.setflags(write=False)
    return bits


def fingerprint(m: str, length: int = CLUSTER_BITS, radius: int = 3) -> Fingerprint:
    """Every substring of width up to 2*radius+1, hashed into ``length`` bits."""
    if not m:
        raise InputError("cannot fingerprint an empty molecule")
    if not _valid_length(length):
        raise ParameterError("fingerprint length must be a power of two >= 64")
    if radius < 1:
        raise ParameterError("radius must be >= 1")
    return Fingerprint(length, _on_bits(m, length, radius))


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.length != b.length:
        raise InputError("fingerprints differ in length")
    if a.popcount == 0 and b.popcount == 0:
        raise InputError("similarity undefined for two empty fingerprints")
    inter = np.intersect1d(a.on_bits, b.on_bits, assume_unique=True).size
    return inter / (a.popcount + b.popcount - inter)


def similarity_matrix(fps) -> np.ndarray:
    if not fps:
        return np.zeros((0, 0))
    return kernels.tanimoto_matrix(np.stack([f.packed() for f in fps]))


def butina_clusters(fps, threshold: float) -> list[list[int]]:
    """Leader clustering: neighbours are pairs with similarity strictly above ``threshold``.

    Repeatedly takes the unassigned item with the most unassigned neighbours
    (ties to the lower index) as centroid; the centroid comes first in its cluster.
    """
    n = len(fps)
    sim = similarity_matrix(fps)
    adj = sim > threshold
    np.fill_diagonal(adj, False)
    neighbours = [np.flatnonzero(adj[i]) for i in range(n)]
    # classic Butina ordering: by neighbour count over the full set, fixed up front
    order = sorted(range(n), key=lambda i: (-len(neighbours[i]), i))
    assigned = np.zeros(n, dtype=bool)
    clusters = []
    for i in order:
        if assigned[i]:
            continue
        members = [i] + [int(j) for j in neighbours[i] if not assigned[j]]
        assigned[members] = True
        clusters.append(members)
    return clusters


def select_targets(universe, n_train: int, n_test: int, threshold: float = 0.4,
                   min_length: int = 5, max_length: int = 40, min_cluster_size: int = 2,
                   seed: int = 0):
    """Centroids of the largest clusters of non-buyable pool molecules, split at random."""
    candidates = [m for m in universe.molecules
                  if m not in universe.buyable and min_length <= len(m) <= max_length]
    need = n_train + n_test
    if len(candidates) < need:
        raise CapacityError(f"only {len(candidates)} candidate targets for {need} requested")
    fps = [fingerprint(m, CLUSTER_BITS, 3) for m in candidates]
    clusters = butina_clusters(fps, threshold)
    big = [c for c in clusters if len(c) >= min_cluster_size]
    big.sort(key=lambda c: -len(c))  # stable: equal sizes keep creation order
    if len(big) < need:
        raise CapacityError(f"only {len(big)} clusters of size >= {min_cluster_size}; need {need}")
    chosen = [candidates[c[0]] for c in big[:need]]
    random.Random(f"retroplay-targets:{seed}").shuffle(chosen)
    return chosen[:n_train], chosen[n_train:]
