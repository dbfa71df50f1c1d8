import numpy as np
import pytest
from hypothesis import given, strategies as st

from retroplay.errors import CapacityError, InputError, ParameterError
from retroplay.similarity import (butina_clusters, fingerprint, select_targets, similarity_matrix,
                                  tanimoto)

mols = st.text(alphabet="ABCDEF", min_size=1, max_size=40)


@given(mols)
def test_fingerprint_is_deterministic(m):
    a, b = fingerprint(m), fingerprint(m)
    assert a == b and hash(a) == hash(b)
    assert 1 <= a.popcount <= 1024
    assert a.bits.sum() == a.popcount


def test_fingerprint_radius_controls_substring_width():
    # "AB" has substrings A, B, AB; any radius >= 1 already covers width 2
    assert fingerprint("AB", radius=1) == fingerprint("AB", radius=3)
    assert fingerprint("ABCDEFA", radius=1) != fingerprint("ABCDEFA", radius=3)


def test_fingerprint_errors():
    with pytest.raises(InputError):
        fingerprint("")
    with pytest.raises(ParameterError):
        fingerprint("AB", length=1000)
    with pytest.raises(ParameterError):
        fingerprint("AB", radius=0)


@given(mols, mols)
def test_tanimoto_properties(a, b):
    fa, fb = fingerprint(a), fingerprint(b)
    s = tanimoto(fa, fb)
    assert 0.0 <= s <= 1.0
    assert s == tanimoto(fb, fa)
    assert tanimoto(fa, fa) == 1.0


def test_tanimoto_length_mismatch():
    with pytest.raises(InputError):
        tanimoto(fingerprint("AB", 64), fingerprint("AB", 128))


@given(st.lists(mols, min_size=1, max_size=15))
def test_similarity_matrix_matches_pairwise(ms):
    fps = [fingerprint(m) for m in ms]
    s = similarity_matrix(fps)
    for i in range(len(fps)):
        for j in range(len(fps)):
            assert s[i, j] == pytest.approx(tanimoto(fps[i], fps[j]), abs=1e-12)


@given(st.lists(mols, min_size=1, max_size=25), st.floats(0.0, 0.95))
def test_butina_partitions(ms, threshold):
    fps = [fingerprint(m) for m in ms]
    clusters = butina_clusters(fps, threshold)
    flat = sorted(i for c in clusters for i in c)
    assert flat == list(range(len(ms)))
    sim = similarity_matrix(fps)
    for c in clusters:
        for j in c[1:]:
            assert sim[c[0], j] > threshold


def test_butina_identical_items_share_cluster():
    fps = [fingerprint(m) for m in ["ABCABC", "ABCABC", "FFFFEE"]]
    assert butina_clusters(fps, 0.4) == [[0, 1], [2]]


def test_select_targets(universe):
    train, test = select_targets(universe, 200, 50)
    assert len(train) == 200 and len(test) == 50
    assert not set(train) & set(test)
    assert all(t not in universe.buyable and 5 <= len(t) <= 40 for t in train + test)
    assert (train, test) == select_targets(universe, 200, 50)
    assert (train, test) != select_targets(universe, 200, 50, seed=1)


def test_select_targets_capacity(small_universe):
    with pytest.raises(CapacityError):
        select_targets(small_universe, 100, 100)
