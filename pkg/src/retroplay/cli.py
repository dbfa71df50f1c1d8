"""Command-line entry point: ``retroplay <command> [flags]``.

Commands: gen-universe, play, train, evaluate, dp, report. Every command
writes its files under a run directory (``runs/<timestamp>-<digest>`` unless
``--run-dir`` is given). Failures print one JSON line to stderr and exit 1.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import random
import sys
import time

from . import kernels
from .config import POLICIES, RunConfig, parse_config, parse_value
from .engine import branching_factor, format_tree, play_game
from .errors import InputError, RetroplayError
from .netdp import ReactionNetwork, extract_best_tree, min_cost_dp
from .nn import ValueNetwork
from .policy import EpsilonGreedy, RandomPolicy, SymmetricDisconnection
from .similarity import select_targets
from .trainer import (compare_policies, evaluate_policy, final_policy, metrics_csv,
                      run_policy_iteration, save_checkpoint)
from .universe import generate_universe, load_universe

COMMANDS = ("gen-universe", "play", "train", "evaluate", "dp", "report")


class _Parser(argparse.ArgumentParser):
    """Usage errors become the same one-line record as every other failure."""

    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}, sort_keys=True), file=sys.stderr)
        self.exit(2)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="threads for the game phase")
    common.add_argument("--policy", choices=POLICIES)
    common.add_argument("--gamma", type=float, help="symmetric-disconnection exponent")
    common.add_argument("--epsilon", type=float, help="exploration rate for sd-eps")
    common.add_argument("--iterations", type=int)
    common.add_argument("--desk-scale", dest="desk_scale", action="store_true", default=None,
                        help="small value network and reduced epochs")
    common.add_argument("--plays", type=int, help="plays per target when evaluating")
    common.add_argument("--p1", type=float)
    common.add_argument("--p2", type=float)
    common.add_argument("--d-max", dest="d_max", type=int)
    common.add_argument("--n-molecules", dest="n_molecules", type=int)
    common.add_argument("--n-train", dest="n_train", type=int)
    common.add_argument("--n-test", dest="n_test", type=int)
    common.add_argument("--universe", dest="universe_file", help="universe file to load")
    common.add_argument("--run-dir", dest="run_dir", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")

    p = _Parser(prog="retroplay", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"retroplay (kernels: {kernels.BACKEND})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-universe", parents=[common], help="generate and save a universe")
    sp = sub.add_parser("play", parents=[common], help="play one game and print the tree")
    sp.add_argument("--target", required=True)
    sp.add_argument("--from-run", help="train run directory (for --policy value)")
    sub.add_parser("train", parents=[common], help="run policy iteration")
    sp = sub.add_parser("evaluate", parents=[common], help="metrics of a policy on the targets")
    sp.add_argument("--from-run", help="train run directory (targets and, for value, weights)")
    sp.add_argument("--split", choices=("train", "test"), default="train")
    sp = sub.add_parser("dp", parents=[common], help="exact minima over a run's reaction network")
    sp.add_argument("--from-run", required=True)
    sp = sub.add_parser("report", parents=[common], help="summary and policy comparison of a run")
    sp.add_argument("--from-run", required=True)
    return p


def _flags(args) -> dict:
    keys = ("seed", "workers", "policy", "gamma", "epsilon", "iterations", "desk_scale", "plays",
            "p1", "p2", "d_max", "n_molecules", "n_train", "n_test", "universe_file", "run_dir")
    out = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    for item in args.set:
        if "=" not in item:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(k.strip(), v)
    return out


def resolve_run_dir(cfg: RunConfig) -> str:
    path = cfg.run_dir or os.path.join(
        "runs", f"{time.strftime('%Y%m%d-%H%M%S')}-{cfg.digest()[:12]}")
    os.makedirs(path, exist_ok=True)
    return path


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _read_lines(path):
    if not os.path.exists(path):
        raise InputError(f"missing input file: {path}")
    with open(path) as fh:
        return [ln for ln in fh.read().splitlines() if ln]


def _universe(cfg: RunConfig):
    if cfg.universe_file:
        if not os.path.exists(cfg.universe_file):
            raise InputError(f"missing input file: {cfg.universe_file}")
        return load_universe(cfg.universe_file)
    return generate_universe(cfg.seed, cfg.universe_params())


def _targets(cfg, universe, from_run=None):
    if from_run:
        return (_read_lines(os.path.join(from_run, "targets-train.txt")),
                _read_lines(os.path.join(from_run, "targets-test.txt")))
    return select_targets(universe, cfg.n_train, cfg.n_test, cfg.cluster_threshold,
                          cfg.target_min_length, cfg.target_max_length, cfg.min_cluster_size,
                          cfg.seed)


def _load_run(from_run: str):
    """Universe, learned policy and DP result of a finished train run."""
    cfg = parse_config(os.path.join(from_run, "config.txt"))
    universe = load_universe(os.path.join(from_run, "universe.txt"))
    gc = cfg.game()
    network = ReactionNetwork.loads("\n".join(_read_lines(os.path.join(from_run, "network-final.tsv"))))
    weights = os.path.join(from_run, "weights-final.bin")
    if not os.path.exists(weights):
        raise InputError(f"missing input file: {weights}")
    net = ValueNetwork.load(weights)
    dp = min_cost_dp(network, universe.buyable, gc)
    return cfg, universe, network, dp, final_policy(universe, gc, dp, network, net)


def _universe_and_policy(cfg: RunConfig, from_run=None):
    if from_run:
        _, universe, _, _, learned = _load_run(from_run)
    elif cfg.policy == "value":
        raise InputError("--policy value needs --from-run pointing at a train run")
    else:
        universe, learned = _universe(cfg), None
    if cfg.policy == "random":
        return universe, RandomPolicy()
    if cfg.policy == "sd":
        return universe, SymmetricDisconnection(cfg.gamma)
    if cfg.policy == "sd-eps":
        return universe, EpsilonGreedy(SymmetricDisconnection(cfg.gamma), cfg.epsilon)
    return universe, learned


def _metrics_row(name, m):
    return [name, repr(m.mean_cost), repr(m.mean_branching), repr(m.frac_below_p1),
            repr(m.frac_p1_p2), repr(m.frac_above_p2), repr(m.success), m.n_plays]


METRICS_HEADER = ["policy", "mean_cost", "mean_branching", "frac_below_p1", "frac_p1_p2",
                  "frac_above_p2", "success", "plays"]


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# -- commands ----------------------------------------------------------------

def cmd_gen_universe(cfg, args, out):
    u = generate_universe(cfg.seed, cfg.universe_params())
    text = u.serialize()
    _write(os.path.join(out, "universe.txt"), text)
    print(f"universe seed={cfg.seed} molecules={len(u.molecules)} buyable={len(u.buyable)} "
          f"digest={u.digest()}")


def cmd_play(cfg, args, out):
    universe, policy = _universe_and_policy(cfg, args.from_run)
    gc = cfg.game()
    ep = play_game(universe, policy, args.target, gc, random.Random(f"retroplay-play:{cfg.seed}"))
    text = format_tree(ep.tree)
    _write(os.path.join(out, "tree.txt"), text)
    b = branching_factor(ep.tree)
    sys.stdout.write(text)
    print(f"cost={ep.total_cost!r} outcome={ep.outcome.value} "
          f"branching={'-' if b is None else repr(b)}")


def cmd_train(cfg, args, out):
    universe = _universe(cfg)
    train, test = _targets(cfg, universe)
    _write(os.path.join(out, "config.txt"), cfg.dumps())
    _write(os.path.join(out, "universe.txt"), universe.serialize())
    _write(os.path.join(out, "targets-train.txt"), "".join(t + "\n" for t in train))
    _write(os.path.join(out, "targets-test.txt"), "".join(t + "\n" for t in test))
    metrics_path = os.path.join(out, "metrics.csv")

    def on_iteration(rec, result):
        if cfg.checkpoint_every and (rec.iteration + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(result, os.path.join(out, "checkpoints"), f"{rec.iteration + 1:05d}")
            _write(metrics_path, metrics_csv(result.series))

    result = run_policy_iteration(universe, train, cfg.train(), cfg.game(), on_iteration)
    _write(metrics_path, metrics_csv(result.series))
    save_checkpoint(result, out, "final")
    last = result.series[-1].metrics
    print(f"iterations={len(result.series)} first_cost={result.series[0].metrics.mean_cost!r} "
          f"final_cost={last.mean_cost!r} dp_cost={result.dp_mean_cost!r} "
          f"network={len(result.network)} run_dir={out}")


def cmd_evaluate(cfg, args, out):
    universe, policy = _universe_and_policy(cfg, args.from_run)
    train, test = _targets(cfg, universe, args.from_run)
    targets = train if args.split == "train" else test
    plays = 1 if policy.deterministic else cfg.plays
    m = evaluate_policy(universe, policy, targets, plays, cfg.game(), cfg.seed, cfg.workers)
    rows = [METRICS_HEADER, _metrics_row(cfg.policy, m)]
    _write(os.path.join(out, f"evaluate-{cfg.policy}-{args.split}.csv"), _csv(rows))
    print(f"policy={cfg.policy} split={args.split} mean_cost={m.mean_cost!r} "
          f"mean_branching={m.mean_branching!r} success={m.success!r} plays={m.n_plays}")


def cmd_dp(cfg, args, out):
    run_cfg, universe, network, dp, _ = _load_run(args.from_run)
    _write(os.path.join(out, "dp.tsv"), dp.dumps())
    train = _read_lines(os.path.join(args.from_run, "targets-train.txt"))
    gc = run_cfg.game()
    costs = [dp.value(t, gc.d_max) for t in train]
    trees = "".join(f"# {t}\n" + format_tree(extract_best_tree(dp, network, t)) for t in train)
    _write(os.path.join(out, "dp-trees.txt"), trees)
    print(f"molecules={len(dp.names)} reactions={len(dp.reactions)} "
          f"dp_mean_cost={sum(costs) / len(costs)!r}")


def cmd_report(cfg, args, out):
    run_cfg, universe, network, dp, learned = _load_run(args.from_run)
    gc = run_cfg.game()
    train = _read_lines(os.path.join(args.from_run, "targets-train.txt"))
    test = _read_lines(os.path.join(args.from_run, "targets-test.txt"))
    with open(os.path.join(args.from_run, "metrics.csv")) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InputError("metrics.csv has no iterations")
    first, final = float(rows[0]["mean_cost"]), float(rows[-1]["mean_cost"])
    dp_cost = sum(dp.value(t, gc.d_max) for t in train) / len(train)
    heuristic = SymmetricDisconnection(cfg.gamma)
    summary = [["quantity", "value"],
               ["first_played_cost", repr(first)],
               ["final_played_cost", repr(final)],
               ["dp_cost", repr(dp_cost)]]
    for split, targets in (("train", train), ("test", test)):
        if not targets:
            continue
        a = evaluate_policy(universe, learned, targets, 1, gc)
        b = evaluate_policy(universe, heuristic, targets, 1, gc)
        summary += [[f"learned_{split}_cost", repr(a.mean_cost)],
                    [f"heuristic_{split}_cost", repr(b.mean_cost)]]
        comp = compare_policies(universe, learned, heuristic, targets, gc)
        _write(os.path.join(out, f"comparison-{split}.csv"), comp.to_csv())
    _write(os.path.join(out, "report.csv"), _csv(summary))
    for k, v in summary[1:]:
        print(f"{k}={v}")


HANDLERS = {
    "gen-universe": cmd_gen_universe,
    "play": cmd_play,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "dp": cmd_dp,
    "report": cmd_report,
}


def error_record(exc: BaseException) -> str:
    rec = {"error": getattr(exc, "kind", "internal"), "type": type(exc).__name__,
           "message": str(exc)}
    key = getattr(exc, "key", None)
    if key is not None:
        rec["key"] = key
    return json.dumps(rec, sort_keys=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, _flags(args))
        out = resolve_run_dir(cfg)
        HANDLERS[args.command](cfg, args, out)
    except (RetroplayError, OSError) as e:
        print(error_record(e), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
