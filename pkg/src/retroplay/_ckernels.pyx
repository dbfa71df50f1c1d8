# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``. Same signatures, same results."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport isnan

cnp.import_array()

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL


def substring_bits(const unsigned char[:] data, int max_width, uint64_t nbits, uint64_t salt):
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t i, j, stop, k = 0
    cdef uint64_t h, basis = FNV_OFFSET ^ salt
    out = np.empty(n * max_width, dtype=np.int64)
    cdef int64_t[:] o = out
    for i in range(n):
        h = basis
        stop = i + max_width
        if stop > n:
            stop = n
        for j in range(i, stop):
            h = (h ^ data[j]) * FNV_PRIME
            o[k] = <int64_t>(h % nbits)
            k += 1
    return np.unique(out[:k])


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int popcount64(uint64_t x) noexcept nogil:
    return __builtin_popcountll(x)


def tanimoto_matrix(packed):
    packed = np.ascontiguousarray(packed, dtype=np.uint64)
    cdef const uint64_t[:, :] p = packed
    cdef Py_ssize_t n = p.shape[0], w = p.shape[1]
    cdef Py_ssize_t i, j, t
    cdef int64_t inter, union
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t[:] counts = counts_arr
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, :] o = out
    with nogil:
        for i in range(n):
            for t in range(w):
                counts[i] += popcount64(p[i, t])
        for i in range(n):
            for j in range(i, n):
                inter = 0
                for t in range(w):
                    inter += popcount64(p[i, t] & p[j, t])
                union = counts[i] + counts[j] - inter
                if union > 0:
                    o[i, j] = <double>inter / <double>union
                else:
                    o[i, j] = 0.0
                o[j, i] = o[i, j]
    return out


def dp_layer(const double[:] prev, const int64_t[:] mol_ptr, const int64_t[:] rxn_idx,
             const int64_t[:] reac_ptr, const int64_t[:] reac_idx,
             rxn_cost, const double[:] terminal, double p2):
    cdef Py_ssize_t n_mol = mol_ptr.shape[0] - 1
    cdef const double[:] cost = np.ascontiguousarray(rxn_cost, dtype=np.float64)
    values_arr = np.empty(n_mol, dtype=np.float64)
    choice_arr = np.full(n_mol, -1, dtype=np.int64)
    cdef double[:] values = values_arr
    cdef int64_t[:] choice = choice_arr
    cdef Py_ssize_t m, a, r, q
    cdef double best, s
    cdef int64_t best_r
    with nogil:
        for m in range(n_mol):
            if not isnan(terminal[m]):
                values[m] = terminal[m]
                continue
            if mol_ptr[m] == mol_ptr[m + 1]:
                values[m] = p2
                continue
            best_r = -1
            best = 0.0
            for a in range(mol_ptr[m], mol_ptr[m + 1]):
                r = rxn_idx[a]
                s = cost[r]
                for q in range(reac_ptr[r], reac_ptr[r + 1]):
                    s = s + prev[reac_idx[q]]
                if best_r < 0 or s < best:
                    best = s
                    best_r = r
            values[m] = best
            choice[m] = best_r
    return values_arr, choice_arr
