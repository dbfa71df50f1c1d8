"""Pure-Python/numpy implementations of the hot kernels.

These are the reference versions. ``_ckernels`` (Cython) must return
bit-identical results; ``tests/test_kernels.py`` checks that.
"""
import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def substring_bits(data, max_width, nbits, salt):
    """Sorted unique bit indices for every substring of width 1..max_width.

    Each substring is hashed with salted 64-bit FNV-1a and reduced modulo nbits.
    """
    n = len(data)
    basis = (FNV_OFFSET ^ salt) & MASK64
    out = set()
    for i in range(n):
        h = basis
        for j in range(i, min(n, i + max_width)):
            h = ((h ^ data[j]) * FNV_PRIME) & MASK64
            out.add(h % nbits)
    return np.array(sorted(out), dtype=np.int64)


def _popcount64(words):
    # bytes view keeps this exact for uint64 without relying on np.bitwise_count
    as_bytes = words.view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1).sum(axis=-1, dtype=np.int64)


def tanimoto_matrix(packed):
    """Pairwise Tanimoto similarity of packed uint64 fingerprints, shape (n, w)."""
    packed = np.ascontiguousarray(packed, dtype=np.uint64)
    n = packed.shape[0]
    counts = _popcount64(packed)
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        inter = _popcount64(packed[i] & packed)
        union = counts[i] + counts - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            row = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
        out[i] = row
    return out


def dp_layer(prev, mol_ptr, rxn_idx, reac_ptr, reac_idx, rxn_cost,
             terminal, p2):
    """One depth layer of the min-cost recursion over a CSR AND/OR network.

    ``terminal[m]`` is NaN for non-terminal molecules, otherwise the fixed value
    of molecule m at this layer. Molecules without reactions get ``p2``.
    Returns (values, choice) where choice is the chosen reaction index or -1.
    Ties keep the earliest reaction in each molecule's list.
    """
    n_mol = mol_ptr.shape[0] - 1
    values = np.empty(n_mol, dtype=np.float64)
    choice = np.full(n_mol, -1, dtype=np.int64)
    n_rxn = rxn_cost.shape[0]
    rscore = rxn_cost.astype(np.float64).copy()
    if n_rxn:
        counts = np.diff(reac_ptr)
        owner = np.repeat(np.arange(n_rxn), counts)
        np.add.at(rscore, owner, prev[reac_idx])
    for m in range(n_mol):
        t = terminal[m]
        if not np.isnan(t):
            values[m] = t
            continue
        lo, hi = mol_ptr[m], mol_ptr[m + 1]
        if lo == hi:
            values[m] = p2
            continue
        cand = rxn_idx[lo:hi]
        scores = rscore[cand]
        k = int(np.argmin(scores))
        values[m] = scores[k]
        choice[m] = cand[k]
    return values, choice
