"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time for each backend and the
speedup. Both backends run on identical inputs and their outputs are compared.
"""
import argparse
import random
import sys
import timeit

import numpy as np

from retroplay import _pykernels
from retroplay.engine import GameConfig
from retroplay.netdp import _csr, expand_network
from retroplay.similarity import FP_SALT, fingerprint
from retroplay.universe import generate_universe

try:
    from retroplay import _ckernels
except ImportError:
    _ckernels = None


def _inputs():
    rng = random.Random(0)
    words = [bytes(rng.choice(b"ABCDEF") for _ in range(rng.randint(5, 40))) for _ in range(2000)]
    universe = generate_universe(7)
    mols = [m for m in universe.molecules if m not in universe.buyable][:1500]
    packed = np.stack([fingerprint(m).packed() for m in mols])
    gc = GameConfig()
    net = expand_network(universe, mols[:200], gc)
    names, index, reactions, mol_ptr, rxn_idx, reac_ptr, reac_idx, cost = _csr(net, gc)
    terminal = np.full(len(names), np.nan)
    for i, m in enumerate(names):
        if m in universe.buyable:
            terminal[i] = 0.0
    prev = np.where(np.isnan(terminal), gc.P1, terminal)
    dp_args = (prev, mol_ptr, rxn_idx, reac_ptr, reac_idx, cost, terminal, gc.P2)
    return words, packed, dp_args, len(names)


def _cases(mod, words, packed, dp_args):
    return {
        "substring_bits": lambda: [mod.substring_bits(w, 7, 16384, FP_SALT) for w in words],
        "tanimoto_matrix": lambda: mod.tanimoto_matrix(packed),
        "dp_layer": lambda: mod.dp_layer(*dp_args),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, list):
        return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`")
        return 1
    words, packed, dp_args, n_mol = _inputs()
    print(f"inputs: {len(words)} strings, {packed.shape[0]}x{packed.shape[0]} similarity, "
          f"DP layer over {n_mol} molecules")
    py = _cases(_pykernels, words, packed, dp_args)
    cy = _cases(_ckernels, words, packed, dp_args)
    print(f"{'kernel':<16} {'python s':>10} {'cython s':>10} {'speedup':>8}  match")
    for name in py:
        t_py = min(timeit.repeat(py[name], number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(cy[name], number=1, repeat=args.repeat))
        ok = _same(py[name](), cy[name]())
        print(f"{name:<16} {t_py:>10.4f} {t_cy:>10.4f} {t_py / t_cy:>7.1f}x  {ok}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
