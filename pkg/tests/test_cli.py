import json
import subprocess
import sys

import pytest

from retroplay.cli import main

SMALL_RUN = ["--seed", "3", "--n-molecules", "300", "--n-train", "12", "--n-test", "4",
             "--iterations", "30", "--desk-scale", "--set", "warmup=10",
             "--set", "update_period=10", "--set", "epochs=3"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    return dict(tok.split("=", 1) for line in out.splitlines() for tok in line.split() if "=" in tok)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "train"
    assert main(["train", *SMALL_RUN, "--run-dir", str(d)]) == 0
    return d


def test_gen_universe_digest_stable(tmp_path, capsys):
    _, a, _ = run(capsys, "gen-universe", "--seed", "7", "--run-dir", str(tmp_path / "a"))
    _, b, _ = run(capsys, "gen-universe", "--seed", "7", "--run-dir", str(tmp_path / "b"))
    assert kv(a)["digest"] == kv(b)["digest"]
    assert (tmp_path / "a" / "universe.txt").read_text() == (tmp_path / "b" / "universe.txt").read_text()


def test_play_buyable_target(tmp_path, capsys):
    run(capsys, "gen-universe", "--seed", "7", "--run-dir", str(tmp_path))
    text = (tmp_path / "universe.txt").read_text()
    buyable = next(ln.split("\t")[1] for ln in text.splitlines() if ln.startswith("B\t"))
    code, out, _ = run(capsys, "play", "--policy", "sd", "--gamma", "1.5", "--target", buyable,
                       "--universe", str(tmp_path / "universe.txt"), "--run-dir", str(tmp_path / "p"))
    assert code == 0
    assert kv(out)["cost"] == "0.0" and kv(out)["outcome"] == "Win"


def test_play_prints_parseable_tree(tmp_path, capsys):
    from retroplay.engine import parse_tree
    code, out, _ = run(capsys, "play", "--policy", "sd-eps", "--epsilon", "0.5", "--target",
                       "ABCDEFABCD", "--run-dir", str(tmp_path))
    assert code == 0
    tree_text = (tmp_path / "tree.txt").read_text()
    assert out.startswith(tree_text)
    assert parse_tree(tree_text).root.molecule == "ABCDEFABCD"


def test_train_writes_artifacts(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"config.txt", "universe.txt", "metrics.csv", "targets-train.txt", "targets-test.txt",
            "weights-final.bin", "store-final.tsv", "network-final.tsv"} <= names
    rows = (trained / "metrics.csv").read_text().splitlines()
    assert len(rows) == 31


def test_train_dp_report_pipeline(trained, tmp_path, capsys):
    code, out, _ = run(capsys, "dp", "--from-run", str(trained), "--run-dir", str(tmp_path / "dp"))
    assert code == 0 and (tmp_path / "dp" / "dp.tsv").exists()
    code, out, _ = run(capsys, "report", "--from-run", str(trained), "--run-dir", str(tmp_path / "r"))
    assert code == 0
    vals = kv(out)
    assert float(vals["dp_cost"]) <= float(vals["final_played_cost"])
    assert (tmp_path / "r" / "comparison-train.csv").exists()
    assert (tmp_path / "r" / "report.csv").exists()


def test_evaluate_value_policy(trained, tmp_path, capsys):
    code, out, _ = run(capsys, "evaluate", "--from-run", str(trained), "--policy", "value",
                       "--split", "test", "--run-dir", str(tmp_path))
    assert code == 0 and kv(out)["plays"] == "4"
    assert (tmp_path / "evaluate-value-test.csv").exists()


def test_evaluate_random_policy_uses_plays(tmp_path, capsys):
    code, out, _ = run(capsys, "evaluate", "--policy", "random", "--plays", "3", "--n-molecules",
                       "300", "--n-train", "5", "--n-test", "2", "--run-dir", str(tmp_path))
    assert code == 0 and kv(out)["plays"] == "15"


def test_train_byte_identical_across_workers(tmp_path, capsys):
    base = ["train", "--seed", "5", "--n-molecules", "200", "--n-train", "8", "--n-test", "2",
            "--iterations", "12", "--desk-scale", "--set", "warmup=5", "--set", "update_period=5",
            "--set", "epochs=2"]
    assert main(base + ["--workers", "1", "--run-dir", str(tmp_path / "w1")]) == 0
    assert main(base + ["--workers", "3", "--run-dir", str(tmp_path / "w3")]) == 0
    for name in ("metrics.csv", "weights-final.bin", "network-final.tsv", "store-final.tsv"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()


def test_default_run_dir_named_by_digest(tmp_path, monkeypatch, capsys):
    from retroplay.config import parse_config
    monkeypatch.chdir(tmp_path)
    assert main(["gen-universe", "--seed", "2", "--n-molecules", "50"]) == 0
    (d,) = (tmp_path / "runs").iterdir()
    digest = parse_config(flags={"seed": 2, "n_molecules": 50}).digest()
    assert d.name.endswith(digest[:12])


@pytest.mark.parametrize("argv,kind", [
    (["train", "--p1", "200", "--p2", "100"], "config"),
    (["play", "--target", "ZZZ"], "input"),
    (["dp", "--from-run", "/nonexistent"], "config"),
    (["evaluate", "--policy", "value"], "input"),
    (["train", "--set", "colour=blue"], "config"),
])
def test_errors_are_one_json_line(tmp_path, capsys, argv, kind):
    code, out, err = run(capsys, *argv, "--run-dir", str(tmp_path))
    assert code != 0
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["error"] == kind


def test_usage_error_exit_status(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["train", "--bogus"])
    assert e.value.code != 0
    assert json.loads(capsys.readouterr().err.strip())["error"] == "usage"


def test_entry_point_subprocess(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "retroplay.cli", "gen-universe", "--seed", "1",
                           "--n-molecules", "50", "--run-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "digest=" in proc.stdout
    bad = subprocess.run([sys.executable, "-m", "retroplay.cli", "train", "--p1", "200",
                          "--p2", "100", "--run-dir", str(tmp_path)], capture_output=True, text=True)
    assert bad.returncode == 1 and json.loads(bad.stderr)["key"] in ("p1", "p2")
