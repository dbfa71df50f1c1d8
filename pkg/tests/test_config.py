import pytest

from retroplay.config import RunConfig, parse_config, parse_value, read_env
from retroplay.errors import ConfigError


def write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, ""), environ={})
    assert cfg == RunConfig()
    gc = cfg.game()
    assert (gc.d_max, gc.P1, gc.P2, gc.c_rxn_default, gc.c_sub_default) == (10, 10.0, 100.0, 1.0, 0.0)
    assert cfg.gamma == 1.5 and cfg.eps_start == 0.2


def test_flag_beats_file(tmp_path):
    cfg = parse_config(write(tmp_path, "epsilon = 0.1\n"), {"epsilon": 0.3}, environ={})
    assert cfg.epsilon == 0.3


def test_env_between_file_and_flags(tmp_path):
    path = write(tmp_path, "gamma = 1.0\nseed = 4\n")
    env = {"RETROPLAY_GAMMA": "2.0", "RETROPLAY_SEED": "9", "RETROPLAY_PURE_PYTHON": "1"}
    cfg = parse_config(path, {"seed": 11}, environ=env)
    assert cfg.gamma == 2.0 and cfg.seed == 11


def test_comments_and_blank_lines(tmp_path):
    cfg = parse_config(write(tmp_path, "# run\n\nseed = 3  # inline\n"), environ={})
    assert cfg.seed == 3


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError) as e:
        parse_config(write(tmp_path, "colour = blue\n"), environ={})
    assert e.value.key == "colour"
    with pytest.raises(ConfigError):
        parse_config(flags={"colour": "blue"}, environ={})


def test_type_mismatch_names_key(tmp_path):
    with pytest.raises(ConfigError) as e:
        parse_config(write(tmp_path, "d_max = ten\n"), environ={})
    assert e.value.key == "d_max"


def test_penalty_order_violation():
    with pytest.raises(ConfigError) as e:
        parse_config(flags={"p1": 200.0, "p2": 100.0}, environ={})
    assert e.value.key in ("p1", "p2")


@pytest.mark.parametrize("flags,key", [
    ({"policy": "greedy"}, "policy"),
    ({"epsilon": 1.5}, "epsilon"),
    ({"iterations": 10, "warmup": 10}, "warmup"),
    ({"gamma": -1.0}, "gamma"),
    ({"n_molecules": 3}, "n_molecules"),
    ({"plays": 0}, "plays"),
])
def test_constraint_errors_name_key(flags, key):
    with pytest.raises(ConfigError) as e:
        parse_config(flags=flags, environ={})
    assert e.value.key == key


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/run.cfg", environ={})


def test_value_parsing():
    assert parse_value("desk_scale", "yes") is True
    assert parse_value("desk_scale", "off") is False
    assert parse_value("epochs", "none") is None
    assert parse_value("epochs", "12") == 12
    assert parse_value("reaction_cost", "2.5") == 2.5


def test_dumps_roundtrip(tmp_path):
    cfg = parse_config(flags={"seed": 5, "desk_scale": True, "epochs": 7}, environ={})
    again = parse_config(write(tmp_path, cfg.dumps()), environ={})
    assert again == cfg


def test_digest_ignores_workers_and_run_dir():
    a = RunConfig(workers=1, run_dir="x")
    b = RunConfig(workers=4, run_dir="y")
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig(seed=1).digest()


def test_desk_scale_selects_small_training():
    tc = parse_config(flags={"desk_scale": True}, environ={}).train()
    assert tc.profile == "desk" and tc.epochs == 10
    assert parse_config(environ={}).train().profile == "full"


def test_read_env_ignores_foreign_variables():
    assert read_env({"RETROPLAY_PURE_PYTHON": "1", "HOME": "/root"}) == {}
