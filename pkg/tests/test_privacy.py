import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corgan import privacy as pv
from corgan.errors import ConfigurationError, ShapeError


def block_sets(n=60, m=90, seed=0):
    """Members, non-members and a third set on disjoint column blocks (cross cosine exactly 0)."""
    rng = np.random.default_rng(seed)
    out = []
    for b in range(3):
        x = np.zeros((n, m))
        block = slice(b * m // 3, (b + 1) * m // 3)
        x[:, block] = rng.random((n, m // 3)) < 0.4
        x[np.arange(n), b * m // 3] = 1.0  # no all-zero rows
        out.append(x)
    return out


def test_cosine_examples():
    assert pv.cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert pv.cosine_similarity([1, 0, 0], [0, 1, 0]) == 0.0
    assert pv.cosine_similarity([1, 1, 0], [1, 0, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert pv.cosine_similarity([0, 0, 0], [1, 0, 0]) == 0.0
    with pytest.raises(ShapeError):
        pv.cosine_similarity([1, 0], [1, 0, 0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 40))
def test_max_similarity_matches_pairwise(seed, chunk):
    rng = np.random.default_rng(seed)
    K = (rng.random((5, 7)) < 0.4).astype(float)
    S = (rng.random((9, 7)) < 0.4).astype(float)
    brute = [max(pv.cosine_similarity(k, s) for s in S) for k in K]
    np.testing.assert_allclose(pv.max_cosine_similarity(K, S, chunk=chunk), brute, atol=1e-12)


def test_thresholds_positive_and_seeded():
    t = pv.draw_thresholds(100, 0.5, 0.01, np.random.default_rng(0))
    assert len(t) == 100 and np.all(t > 0)
    np.testing.assert_array_equal(t, pv.draw_thresholds(100, 0.5, 0.01, np.random.default_rng(0)))
    wide = pv.draw_thresholds(500, 0.0, 1.0, np.random.default_rng(1))  # half the raw draws are redrawn
    assert len(wide) == 500 and np.all(wide > 0)


def test_exact_copy_limit():
    mem, non, _ = block_sets()
    rep = pv.run_attack(pv.AttackSetup(mem, non, mem.copy()))
    assert len(rep.rows) == 100
    for r in rep.rows:
        assert r.precision == 1.0 and r.recall == 1.0
    assert rep.best.precision == rep.best.recall == 1.0


def test_no_match_limit():
    mem, non, other = block_sets()
    rep = pv.run_attack(pv.AttackSetup(mem, non, other))
    assert rep.best is None
    for r in rep.rows:
        assert r.flagged == 0 and r.recall == 0.0 and r.precision == 0.0


def test_best_attack_is_max_f1_lowest_threshold():
    members = np.array([0.9, 0.52, 0.49])
    nonmembers = np.array([0.51, 0.1, 0.1])
    rows = pv.evaluate_thresholds(members, nonmembers, [0.48, 0.5, 0.515, 0.53])
    assert [r.tp for r in rows] == [3, 2, 2, 1]
    assert [r.fp for r in rows] == [1, 1, 0, 0]
    assert max(r.f1 for r in rows) == pytest.approx(6 / 7)  # 3 TP, 1 FP: precision 0.75, recall 1


def test_best_attack_tie_prefers_lower_threshold():
    rep = pv.run_attack(pv.AttackSetup(np.eye(4)[:2], np.eye(4)[2:], np.eye(4)[:2], n_thresholds=20))
    assert rep.best.f1 == 1.0
    assert rep.best.threshold == min(r.threshold for r in rep.rows)


def test_threshold_equality_counts_as_match():
    rows = pv.evaluate_thresholds(np.array([0.5]), np.array([0.2]), [0.5])
    assert rows[0].tp == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_in_threshold_and_report_recomputes(seed):
    rng = np.random.default_rng(seed)
    tr = (rng.random((40, 15)) < 0.3).astype(float)
    te = (rng.random((40, 15)) < 0.3).astype(float)
    syn = (rng.random((60, 15)) < 0.3).astype(float)
    rep = pv.run_attack(pv.AttackSetup.sample(tr, te, syn, 20, seed=seed, threshold_std=0.1))
    th = [r.threshold for r in rep.rows]
    assert th == sorted(th)
    for a, b in zip(rep.rows, rep.rows[1:]):
        assert b.recall <= a.recall and b.flagged <= a.flagged
    for r in rep.rows:
        tp = int(np.sum(rep.member_scores >= r.threshold))
        fp = int(np.sum(rep.nonmember_scores >= r.threshold))
        assert (r.tp, r.fp) == (tp, fp)
        assert r.recall == tp / 20
        assert r.precision == (tp / (tp + fp) if tp + fp else 0.0)
        assert 0 <= r.precision <= 1 and 0 <= r.recall <= 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_more_synthetic_never_lowers_recall(seed):
    rng = np.random.default_rng(seed)
    mem = (rng.random((10, 12)) < 0.3).astype(float)
    non = (rng.random((10, 12)) < 0.3).astype(float)
    syn = (rng.random((50, 12)) < 0.3).astype(float)
    small = pv.run_attack(pv.AttackSetup(mem, non, syn[:10], seed=seed))
    large = pv.run_attack(pv.AttackSetup(mem, non, syn, seed=seed))
    assert np.all(large.member_scores >= small.member_scores)
    for a, b in zip(small.rows, large.rows):
        assert a.threshold == b.threshold and b.recall >= a.recall


def test_run_attack_deterministic():
    rng = np.random.default_rng(3)
    tr, te, syn = ((rng.random((50, 10)) < 0.3).astype(float) for _ in range(3))
    a = pv.run_attack(pv.AttackSetup.sample(tr, te, syn, 10, seed=4))
    b = pv.run_attack(pv.AttackSetup.sample(tr, te, syn, 10, seed=4))
    assert a.rows == b.rows


def test_setup_validation():
    mem, non, syn = block_sets(10, 30)
    with pytest.raises(ConfigurationError):
        pv.AttackSetup(mem, non[:5], syn)
    with pytest.raises(ShapeError):
        pv.AttackSetup(mem, non, syn[:, :20])
    with pytest.raises(ValueError):
        pv.run_attack(pv.AttackSetup(mem, non, np.zeros((0, 30))))
    with pytest.raises(ConfigurationError):
        pv.AttackSetup.sample(mem, non, syn, 11)


def test_known_record_sweep(caplog):
    mem, non, _ = block_sets(60, 90)
    table = pv.sweep_known_records([40, 10, 21], mem, non, mem)
    assert table.keys == [40, 10, 20]
    assert "odd" in caplog.text
    for rep in table.reports:
        assert rep.best.precision == 1.0
    with pytest.raises(ConfigurationError):
        pv.sweep_known_records([200], mem, non, mem)


def test_volume_sweep(tmp_path, caplog):
    mem, non, _ = block_sets(60, 90)
    pool = np.vstack([mem, mem])
    calls = []

    def gen(size):
        calls.append(size)
        return pool[:size]

    table = pv.sweep_synthetic_volume([10, 50, 0, 50, 120], mem, non, gen, U=20)
    assert table.keys == [10, 50, 120] and calls == [10, 50, 120]
    assert "skipping" in caplog.text
    # same known records throughout, nested synthetic sets: scores can only grow
    for a, b in zip(table.reports, table.reports[1:]):
        assert np.all(b.member_scores >= a.member_scores)
    table.write_csv(tmp_path / "v.csv")
    assert (tmp_path / "v.csv").read_text().splitlines()[0].startswith("n_synthetic,")
    with pytest.raises(ConfigurationError):
        pv.sweep_synthetic_volume([5], mem, non, {5: pool[:4]}, U=20)


def test_report_csv(tmp_path):
    mem, non, _ = block_sets(20, 30)
    rep = pv.run_attack(pv.AttackSetup(mem, non, mem, n_thresholds=7))
    rep.write_csv(tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "threshold,tp,fp,fn,precision,recall,f1" and len(lines) == 8
