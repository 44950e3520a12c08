import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from phondrift import verify as V
from phondrift.errors import DataError, DegenerateInputError


def test_cosine_examples():
    a = np.array([1.0, 2.0, 3.0])
    assert V.cosine_similarity(a, a) == pytest.approx(1.0)
    assert V.cosine_similarity([1, 0], [0, 1]) == 0.0
    b = np.array([0.5, -1.0, 2.0])
    assert V.cosine_similarity(3.7 * a, b) == pytest.approx(V.cosine_similarity(a, b), abs=1e-15)
    with pytest.raises(DegenerateInputError):
        V.cosine_similarity([0, 0], [1, 0])


@pytest.mark.parametrize("n", [2, 3, 7, 109])
def test_pair_counts(n):
    rng = np.random.default_rng(n)
    clean = {f"s{i}": rng.normal(size=4) for i in range(n)}
    adv = {f"s{i}": rng.normal(size=4) for i in range(n)}
    s = V.make_pairs(clean, adv)
    assert len(s.genuine) == n
    assert len(s.impostor) == n * (n - 1)
    assert s.n_samples == n * n
    assert len(s.trials) == n * n


def test_pairs_identical_embeddings():
    e = np.array([0.3, 0.4])
    s = V.make_pairs({k: e for k in "abc"}, {k: e for k in "abc"})
    assert all(x == pytest.approx(1.0) for x in s.genuine + s.impostor)
    assert s.n_samples == 9


def test_pairs_key_mismatch_and_too_few():
    with pytest.raises(DataError, match="c"):
        V.make_pairs({"a": [1, 0], "b": [0, 1]}, {"a": [1, 0], "c": [0, 1]})
    with pytest.raises(DataError):
        V.make_pairs({"a": [1, 0]}, {"a": [1, 0]})


def test_genuine_is_same_speaker():
    clean = {"a": [1.0, 0.0], "b": [0.0, 1.0]}
    adv = {"a": [1.0, 0.1], "b": [0.1, 1.0]}
    s = V.make_pairs(clean, adv)
    for c, a, score, g in s.trials:
        assert g == (c == a)


def test_dprime_sentinels():
    s = V.ScoreSet([0.9, 0.9], [0.1, 0.1])
    assert V.d_prime(s).d_prime == math.inf
    s = V.ScoreSet([0.1, 0.1], [0.9, 0.9])
    assert V.d_prime(s).d_prime == -math.inf
    s = V.ScoreSet([0.5, 0.5], [0.5, 0.5])
    assert V.d_prime(s).d_prime == 0.0
    s = V.ScoreSet([0.2, 0.8], [0.4, 0.6])
    assert V.d_prime(s).d_prime == 0.0
    with pytest.raises(DegenerateInputError):
        V.d_prime(V.ScoreSet([0.5], [0.1, 0.2]))


def test_dprime_population_variance():
    s = V.ScoreSet([0.9, 0.7], [0.3, 0.1])
    st_ = V.d_prime(s)
    assert st_.var_gen == pytest.approx(0.01)
    assert st_.d_prime == pytest.approx(0.6 / 0.1)


def test_dprime_monte_carlo():
    rng = np.random.default_rng(0)
    s = V.ScoreSet(rng.normal(0.8, 0.1, 100_000).tolist(), rng.normal(0.2, 0.1, 100_000).tolist())
    assert 5.95 <= V.d_prime(s).d_prime <= 6.05


scores = st.lists(st.floats(-1, 1, allow_subnormal=False), min_size=2, max_size=40)


@settings(max_examples=80)
@given(scores, scores, st.floats(0.01, 100), st.floats(-10, 10))
def test_dprime_affine_invariance(gen, imp, a, b):
    assume(np.std(gen) + np.std(imp) > 1e-3)
    s = V.ScoreSet(gen, imp)
    t = V.ScoreSet([a * x + b for x in gen], [a * x + b for x in imp])
    d0, d1 = V.d_prime(s).d_prime, V.d_prime(t).d_prime
    assert d1 == pytest.approx(d0, abs=1e-9 * max(1.0, abs(d0)))


def test_tmr_hand_case():
    gen = [0.9, 0.8, 0.7]
    imp = [0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005]
    tmr, tau = V.tmr_at_fmr(V.ScoreSet(gen, imp), 0.05)
    assert tmr == 1.0
    assert 0.6 < tau <= 0.7


def test_tmr_perfect_separation():
    s = V.ScoreSet([0.8, 0.9, 0.95], [0.1, 0.2, 0.3, 0.4])
    for f in (0.001, 0.1, 0.5, 0.9):
        assert V.tmr_at_fmr(s, f)[0] == 1.0


def test_tmr_identical_distributions():
    vals = np.linspace(0, 1, 1000).tolist()
    for f in (0.01, 0.1, 0.25):
        tmr, _ = V.tmr_at_fmr(V.ScoreSet(vals, vals), f)
        assert tmr == pytest.approx(f, abs=1e-3)
        assert tmr <= f


def test_tmr_achieved_fmr_conservative():
    rng = np.random.default_rng(5)
    s = V.ScoreSet(rng.normal(0.6, 0.2, 50).tolist(), rng.normal(0.3, 0.2, 500).tolist())
    tmr, tau = V.tmr_at_fmr(s, 0.01)
    assert np.mean(np.array(s.impostor) >= tau) <= 0.01


def test_tmr_bad_target():
    with pytest.raises(ValueError):
        V.tmr_at_fmr(V.ScoreSet([1.0], [0.0]), 0.0)


@settings(max_examples=60)
@given(scores, scores, st.sampled_from(["exp", "cube", "affine"]),
       st.sampled_from([0.001, 0.05, 0.3]))
def test_tmr_rank_invariance(gen, imp, kind, f):
    fn = {"exp": math.exp, "cube": lambda x: x ** 3 + x, "affine": lambda x: 3 * x - 1}[kind]
    # the transform must stay strictly increasing after rounding
    pts = sorted(set(gen + imp))
    mapped = [fn(x) for x in pts]
    assume(all(u < v for u, v in zip(mapped, mapped[1:])))
    a = V.tmr_at_fmr(V.ScoreSet(gen, imp), f)[0]
    b = V.tmr_at_fmr(V.ScoreSet([fn(x) for x in gen], [fn(x) for x in imp]), f)[0]
    assert a == b


def test_roc_endpoints_and_monotone():
    rng = np.random.default_rng(1)
    s = V.ScoreSet(rng.normal(0.6, 0.2, 30).tolist(), rng.normal(0.3, 0.2, 60).tolist())
    pts = V.roc_points(s)
    assert pts[0][:2] == (1.0, 1.0)
    assert pts[-1][:2] == (0.0, 0.0)
    fmr = [p[0] for p in pts]
    tmr = [p[1] for p in pts]
    assert all(a >= b for a, b in zip(fmr, fmr[1:]))
    assert all(a >= b for a, b in zip(tmr, tmr[1:]))


def test_roc_perfect_and_single_value():
    pts = V.roc_points(V.ScoreSet([0.9, 0.8], [0.1, 0.2]))
    assert (0.0, 1.0) in [p[:2] for p in pts]
    pts = V.roc_points(V.ScoreSet([0.5, 0.5], [0.5]))
    assert [p[:2] for p in pts] == [(1.0, 1.0), (0.0, 0.0)]


def test_scoreset_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    s = V.make_pairs({k: rng.normal(size=3) for k in "abc"}, {k: rng.normal(size=3) for k in "abc"})
    s.write_csv(tmp_path / "s.csv")
    r = V.ScoreSet.read_csv(tmp_path / "s.csv")
    assert r.genuine == s.genuine and r.impostor == s.impostor


def test_summarize_fields(tmp_path):
    rng = np.random.default_rng(3)
    s = V.make_pairs({k: rng.normal(size=3) for k in "abcd"}, {k: rng.normal(size=3) for k in "abcd"})
    rec = V.summarize(s)
    assert (rec["n_samples"], rec["n_genuine"], rec["n_impostor"]) == (16, 4, 12)
    assert {"tmr_at_fmr", "d_prime", "mu_gen", "mu_imp", "var_gen", "var_imp"} <= set(rec)
    V.write_stats_json(rec, tmp_path / "x.json")
    assert (tmp_path / "x.json").read_text().startswith("{")
