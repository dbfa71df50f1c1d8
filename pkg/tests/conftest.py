import pytest

from retroplay.engine import GameConfig
from retroplay.universe import ReactionTemplate, Universe, UniverseParams, generate_universe

SMALL = UniverseParams(n_molecules=20, n_templates=6, alphabet_size=3, max_length=12,
                       buyable_max_length=3, buyable_fraction=0.4)

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def gc():
    return GameConfig()


@pytest.fixture(scope="session")
def universe():
    return generate_universe(7)


@pytest.fixture(scope="session")
def small_universe():
    return generate_universe(3, SMALL)


def hand_universe(templates, buyable, molecules=(), alphabet_size=3, max_length=12):
    """Universe with explicit templates, for constructed cases."""
    params = UniverseParams(n_molecules=10, n_templates=2, alphabet_size=alphabet_size,
                            max_length=max_length)
    return Universe(0, params, list(templates), dict(buyable), list(molecules))


def chain_universe(extra_cost=None):
    """'AAAA' shrinks one letter per step to buyable 'A': a forced 3-reaction pathway.

    With ``extra_cost`` a second template makes 'AAAA' from 'A' in one step at that cost.
    """
    ts = [ReactionTemplate(0, "sub", ("AA",), (), "A")]
    if extra_cost is not None:
        ts.append(ReactionTemplate(1, "sub", ("AAAA",), (), "A", weight=0.5, cost=extra_cost))
    return hand_universe(ts, {"A": None}, ["A", "AA", "AAA", "AAAA"])
