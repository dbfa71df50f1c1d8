"""Acceptance criteria 1-10, each printed as one PASS/FAIL line in the summary.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
The desk-scale training run behind criteria 2, 4, 5, 8 and 9 is shared and takes
a few minutes.
"""
import math
import random
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, SMALL
from retroplay.cli import main as cli_main
from retroplay.engine import (GameConfig, LeafKind, MoleculeNode, ReactionNode, SynthesisTree,
                              tree_cost)
from retroplay.netdp import (bellman_residuals, brute_force_optimal, expand_network,
                             extract_best_tree, min_cost_dp)
from retroplay.nn import OUT_SCALE, learning_rate, nn_gradient_check, nn_init
from retroplay.policy import EpsilonGreedy, SymmetricDisconnection
from retroplay.similarity import select_targets
from retroplay.trainer import TrainConfig, compare_policies, evaluate_policy, run_policy_iteration
from retroplay.universe import Reaction, generate_universe
from retroplay.value import Estimator

GC = GameConfig()
UNIVERSE_SEED = 7
RUN_LIMIT_S = 30 * 60


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def desk_run():
    u = generate_universe(UNIVERSE_SEED)
    train, test = select_targets(u, 200, 50)
    t0 = time.perf_counter()
    res = run_policy_iteration(u, train, TrainConfig.desk(iterations=1000, seed=0), GC)
    return u, train, test, res, time.perf_counter() - t0


def test_criterion_01_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches, checked = 0, 0
    for seed in range(60):
        u = generate_universe(seed, SMALL)
        assert len(u.molecules) <= 25
        net = expand_network(u, u.molecules, GC)
        dp = min_cost_dp(net, u.buyable, GC)
        for m in u.molecules:
            checked += 1
            mismatches += dp.value(m, GC.d_max) != brute_force_optimal(u, m, GC)
    dt = time.perf_counter() - t0
    record(1, mismatches == 0 and dt < 60,
           f"60 universes, {checked} molecules, {mismatches} mismatches, {dt:.2f}s")


def test_criterion_02_bellman_consistency(desk_run):
    u, train, _, res, _ = desk_run
    worst = max(abs(r) for _, _, r in bellman_residuals(res.dp, res.network))
    tree_gap = max(abs(tree_cost(extract_best_tree(res.dp, res.network, t), GC)
                       - res.dp.value(t, GC.d_max)) for t in train)
    small_gap = 0.0
    for seed in range(10):
        v = generate_universe(seed, SMALL)
        net = expand_network(v, v.molecules, GC)
        dp = min_cost_dp(net, v.buyable, GC)
        small_gap = max([small_gap] + [abs(r) for _, _, r in bellman_residuals(dp, net)]
                        + [abs(tree_cost(extract_best_tree(dp, net, m), GC) - dp.value(m, GC.d_max))
                           for m in v.molecules])
    record(2, worst == 0.0 and tree_gap == 0.0 and small_gap == 0.0,
           f"max residual {worst} over {len(res.network)} molecules; tree-vs-DP gap {tree_gap}; "
           f"small universes {small_gap}")


def _leaf(m, d, kind=LeafKind.BUYABLE):
    return MoleculeNode(m, d, kind)


def _node(m, d, kids):
    return MoleculeNode(m, d, LeafKind.INTERNAL,
                        ReactionNode(Reaction(m, tuple(k.molecule for k in kids), 0), kids))


def test_criterion_03_cost_accounting():
    five = SynthesisTree(_node("ABCDEFG", 10, [
        _node("ABCD", 9, [_node("AB", 8, [_leaf("A", 7), _leaf("B", 7)]), _leaf("CD", 8)]),
        _node("EFG", 9, [_node("EF", 8, [_leaf("E", 7), _leaf("F", 7)]), _leaf("G", 8)])]), 10)
    dead = SynthesisTree(_node("ABC", 10, [_leaf("AB", 9), _leaf("C", 9, LeafKind.DEAD_END)]), 10)
    depth = SynthesisTree(_node("AB", 1, [_leaf("A", 0), _leaf("B", 0, LeafKind.DEPTH)]), 1)
    got = (tree_cost(five, GC), tree_cost(dead, GC), tree_cost(depth, GameConfig(d_max=1)))
    record(3, got == (5.0, 101.0, 11.0) and len(five.reaction_nodes()) == 5,
           f"five-reaction tree {got[0]}, dead-end tree {got[1]}, depth tree {got[2]}")


def test_criterion_04_learning_works(desk_run):
    _, _, _, res, dt = desk_run
    first = res.series[0].metrics.mean_cost
    final = res.series[-1].metrics.mean_cost
    dp = res.dp_mean_cost
    ok = final <= 0.7 * first and dp <= final and dt <= RUN_LIMIT_S
    record(4, ok, f"first {first:.3f}, final {final:.3f} (ratio {final / first:.3f}), "
                  f"DP {dp:.3f}, {len(res.series)} iterations in {dt:.0f}s")


def test_criterion_05_learned_beats_heuristic(desk_run):
    u, train, test, res, _ = desk_run
    sd = SymmetricDisconnection(1.5)
    learned = evaluate_policy(u, res.final_policy, train, 1, GC).mean_cost
    heuristic = evaluate_policy(u, sd, train, 1, GC).mean_cost
    comp = compare_policies(u, res.final_policy, sd, test, GC)
    a_cheaper, _, ties = comp.rows["bulk"]
    ok = learned <= heuristic and a_cheaper + ties >= 50.0
    record(5, ok, f"train: learned {learned:.3f} vs heuristic {heuristic:.3f}; test: learned "
                  f"cheaper {a_cheaper:.0f}%, ties {ties:.0f}%")


@pytest.fixture(scope="module")
def epsilon_sweep():
    u = generate_universe(UNIVERSE_SEED)
    train, _ = select_targets(u, 200, 50)
    out = {}
    for eps in (0.0, 0.25, 0.5, 1.0):
        policy = EpsilonGreedy(SymmetricDisconnection(1.5), eps)
        out[eps] = evaluate_policy(u, policy, train, 50, GC, seed=11)
    return out


def test_criterion_06_epsilon_monotonicity(epsilon_sweep):
    levels = sorted(epsilon_sweep)
    ok = True
    for lo, hi in zip(levels, levels[1:]):
        a, b = epsilon_sweep[lo], epsilon_sweep[hi]
        ok &= b.mean_cost - a.mean_cost >= -math.hypot(a.stderr, b.stderr)
    desc = ", ".join(f"eps={e}: {epsilon_sweep[e].mean_cost:.2f}+-{epsilon_sweep[e].stderr:.2f}"
                     for e in levels)
    record(6, ok, desc + f" ({epsilon_sweep[0.0].n_plays} plays per level)")


def test_criterion_07_branching_sign(epsilon_sweep):
    b0, b1 = epsilon_sweep[0.0].mean_branching, epsilon_sweep[1.0].mean_branching
    record(7, b0 > b1, f"<b> at eps=0 {b0:.4f} vs eps=1 {b1:.4f}")


def test_criterion_08_network_contract(desk_run):
    full = nn_init(0, "full")
    rng = np.random.default_rng(0)
    lo, hi = math.inf, -math.inf
    for _ in range(20):  # 20 x 500 = 10^4 inputs
        bits = [np.flatnonzero(rng.random(16384) < rng.uniform(0.001, 0.5)) for _ in range(500)]
        out = full.predict(bits, rng.integers(0, 11, 500))
        lo, hi = min(lo, out.min()), max(hi, out.max())
    trained = desk_run[3].net
    X = (rng.random((10_000, 1025)) < 0.1).astype(float)
    X[:, -1] = rng.integers(0, 11, 10_000) / 10
    out = trained.forward(X)
    lo, hi = min(lo, out.min()), max(hi, out.max())
    count = full.parameter_count()
    small = nn_init(1, "desk")
    Xg = (rng.random((32, 1025)) < 0.05).astype(float)
    Xg[:, -1] = rng.integers(0, 11, 32) / 10
    dev = nn_gradient_check(small, Xg, rng.uniform(0, 100, 32), n_params=300)
    lr_err = max(abs(learning_rate(k) - 0.001 / (1 + 2 * math.sqrt(k))) for k in (0, 1, 4, 9))
    ok = 0.0 <= lo and hi <= OUT_SCALE and abs(count - 17e6) / 17e6 <= 0.10 and dev < 1e-4 \
        and lr_err <= 1e-12
    record(8, ok, f"outputs in [{lo:.3f}, {hi:.3f}], {count} parameters, gradient deviation "
                  f"{dev:.2e}, lr error {lr_err:.1e}")


def test_criterion_09_protocol_fidelity(desk_run):
    u, _, _, res, _ = desk_run
    eps = [r.epsilon for r in res.series]
    want = [0.2] * 200 + [0.15] * 200 + [0.1] * 200 + [0.05] * 200 + [0.0] * 200
    transitions = [r for p, r in zip(res.series, res.series[1:]) if r.epsilon != p.epsilon]
    purged = all(r.store_size_at_start == 0 for r in transitions)
    est = Estimator(u, GC)
    rng = random.Random(0)
    unseen = [m for m in u.molecules if m not in u.buyable and u.expand(m)]
    draws = [est.estimate(m, d, rng) for m in unseen[:1000] for d in range(1, 11)]
    in_range = all(1.0 <= v <= 100.0 for v in draws)
    record(9, eps == want and purged and len(transitions) == 4 and in_range,
           f"epsilon trace {'matches' if eps == want else 'differs'}; {len(transitions)} "
           f"transitions, store empty after each: {purged}; {len(draws)} bootstrap draws in "
           f"[{min(draws):.2f}, {max(draws):.2f}]")


def test_criterion_10_determinism(tmp_path):
    base = ["train", "--seed", "9", "--n-molecules", "400", "--n-train", "20", "--n-test", "5",
            "--iterations", "60", "--desk-scale", "--set", "warmup=20", "--set",
            "update_period=20", "--set", "epochs=3"]
    codes = [cli_main(base + ["--workers", str(w), "--run-dir", str(tmp_path / f"w{w}")])
             for w in (1, 2, 4)]
    csvs = [(tmp_path / f"w{w}" / "metrics.csv").read_bytes() for w in (1, 2, 4)]
    record(10, codes == [0, 0, 0] and csvs[0] == csvs[1] == csvs[2],
           f"metrics.csv identical for workers 1, 2, 4: {csvs[0] == csvs[1] == csvs[2]} "
           f"({len(csvs[0])} bytes)")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
