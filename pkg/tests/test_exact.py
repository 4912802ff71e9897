from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from divtest.divergence import CHI2, JS, KL, SQL2, evaluate, parse_divergence
from divtest.exact import (
    BudgetExceeded,
    ErrorReport,
    calibrate_exact,
    error_report,
    exact_type1,
    exact_type2,
    lemma1_sup_gap_exact,
    statistic_distribution,
)
from divtest.simplex import log_type_class_probs, make_distribution, type_matrix

HALF = make_distribution([1, 1])


def brute_force(d, r, p1, p2, n):
    """Sum over every pair of length-n sequences, no types involved."""
    k = p1.k
    alpha = beta = 0.0
    for xs in itertools.product(range(k), repeat=n):
        tx = np.bincount(xs, minlength=k) / n
        px = float(np.prod(p1.probs[list(xs)]))
        for ys in itertools.product(range(k), repeat=n):
            ty = np.bincount(ys, minlength=k) / n
            w = px * float(np.prod(p2.probs[list(ys)]))
            if evaluate(d, tx, ty) < r:
                beta += w
            else:
                alpha += w
    return alpha, beta


def test_stat_distribution_example():
    sd = statistic_distribution(JS, HALF, 1)
    np.testing.assert_allclose(sd.values, [0.0, math.log(2)], atol=1e-15)
    np.testing.assert_allclose(np.exp(sd.log_probs), [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("d", [JS, KL, SQL2, CHI2, parse_divergence("renyi:0.5")])
@pytest.mark.parametrize("n", [1, 4, 12])
def test_stat_distribution_invariants(d, n):
    p = make_distribution([0.2, 0.5, 0.3])
    sd = statistic_distribution(d, p, n)
    assert abs(logsumexp(sd.log_probs)) <= 1e-9
    assert np.all(np.diff(sd.values) > 0)
    assert sd.values[0] >= 0
    assert np.all(np.isfinite(sd.values[:-1]))


def test_zero_atom_equals_tie_probability():
    p = make_distribution([0.2, 0.5, 0.3])
    n = 6
    sd = statistic_distribution(JS, p, n)
    tie = float(np.exp(2 * log_type_class_probs(type_matrix(n, 3), p.probs)).sum())
    assert sd.values[0] == 0.0
    assert math.exp(sd.log_probs[0]) == pytest.approx(tie, rel=1e-12)


def test_type1_examples():
    assert exact_type1(JS, math.log(2) + 1e-9, HALF, 5) == -math.inf
    assert math.exp(exact_type1(JS, 1e-9, HALF, 1)) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        exact_type1(JS, 0.0, HALF, 3)


def test_type2_examples():
    p1, p2 = make_distribution([0.9, 0.1]), make_distribution([0.1, 0.9])
    assert math.exp(exact_type2(JS, 1e-9, p1, p2, 1)) == pytest.approx(0.18, abs=1e-15)
    assert exact_type2(JS, 1.0, p1, p2, 4) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("d", [JS, KL, SQL2, parse_divergence("fdiv:hellinger")])
def test_engine_matches_sequence_brute_force(d):
    p1, p2 = make_distribution([0.2, 0.5, 0.3]), make_distribution([0.6, 0.1, 0.3])
    n = 3
    sd = statistic_distribution(d, p1, n)
    for r in sd.values[1:4]:
        if not math.isfinite(r):
            continue
        alpha, _ = brute_force(d, r, p1, p1, n)
        _, beta = brute_force(d, r, p1, p2, n)
        assert math.exp(exact_type1(d, r, p1, n)) == pytest.approx(alpha, rel=1e-10)
        assert math.exp(exact_type2(d, r, p1, p2, n)) == pytest.approx(beta, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 15), r=st.floats(1e-4, 0.7), w=st.lists(st.floats(0.05, 1), min_size=3, max_size=3))
def test_null_complement(n, r, w):
    p = make_distribution(w)
    a = math.exp(exact_type1(JS, r, p, n))
    b = math.exp(exact_type2(JS, r, p, p, n))
    assert a + b == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 12), r=st.floats(1e-3, 0.5))
def test_symmetric_divergence_swap(n, r):
    p1, p2 = make_distribution([0.7, 0.2, 0.1]), make_distribution([0.3, 0.3, 0.4])
    for d in (JS, SQL2):
        assert exact_type2(d, r, p1, p2, n) == pytest.approx(exact_type2(d, r, p2, p1, n), abs=1e-12)


def test_type1_nonincreasing_in_r():
    sd = statistic_distribution(JS, make_distribution([0.3, 0.7]), 20)
    tails = sd.log_tails()
    assert np.all(np.diff(tails) <= 1e-12)
    rs = np.linspace(1e-4, 0.7, 25)
    vals = [exact_type1(JS, r, make_distribution([0.3, 0.7]), 20) for r in rs]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_type2_is_one_above_all_values():
    p1, p2 = make_distribution([0.4, 0.6]), make_distribution([0.8, 0.2])
    assert exact_type2(JS, 1.0, p1, p2, 10) == pytest.approx(0.0, abs=1e-12)


def test_calibrate_examples():
    assert calibrate_exact(JS, HALF, 1, 0.5) == pytest.approx(math.log(2), abs=1e-15)
    for eps in (0.0, 1.0):
        with pytest.raises(ValueError):
            calibrate_exact(JS, HALF, 3, eps)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 25), eps=st.floats(0.01, 0.99))
def test_calibrated_threshold_controls_type1(n, eps):
    p = make_distribution([0.35, 0.65])
    sd = statistic_distribution(JS, p, n)
    r = calibrate_exact(JS, p, n, eps)
    assert math.exp(exact_type1(JS, r, p, n)) <= eps * (1 + 1e-12)
    # the next smaller achievable value would break the bound
    below = sd.values[(sd.values < r) & (sd.values > 0)]
    if below.size:
        assert math.exp(sd.log_tail(below[-1])) > eps


def test_calibrate_infinite_atom():
    # P(stat = inf) = P(types with disjoint support under KL) is large at n = 1
    p = make_distribution([0.5, 0.5])
    assert calibrate_exact(KL, p, 1, 0.1) == math.inf


def test_budget():
    with pytest.raises(BudgetExceeded):
        statistic_distribution(JS, make_distribution([1, 1, 1, 1]), 60)
    with pytest.raises(BudgetExceeded):
        exact_type2(JS, 0.1, HALF, HALF, 100, budget=1000)


def test_worker_count_independence():
    p1, p2 = make_distribution([0.3, 0.3, 0.4]), make_distribution([0.6, 0.2, 0.2])
    a = statistic_distribution(JS, p1, 25, workers=1)
    b = statistic_distribution(JS, p1, 25, workers=4)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.log_probs, b.log_probs)
    assert exact_type2(JS, 0.05, p1, p2, 25, workers=1) == exact_type2(JS, 0.05, p1, p2, 25, workers=3)


def test_lemma1_gap_examples():
    g10 = lemma1_sup_gap_exact(JS, HALF, 10)
    g80 = lemma1_sup_gap_exact(JS, HALF, 80)
    assert 0 <= g80 < g10 <= 1


def test_csv_and_json_export(tmp_path):
    sd = statistic_distribution(JS, HALF, 1)
    text = sd.to_csv(tmp_path / "d.csv")
    assert text.splitlines()[0] == "value,probability"
    assert (tmp_path / "d.csv").read_text() == text
    rep = error_report(JS, 0.1, HALF, HALF, make_distribution([0.9, 0.1]), 5)
    assert isinstance(rep, ErrorReport)
    data = json.loads(rep.to_json())
    assert data["log_alpha"] <= 0 and data["log_beta"] <= 0
    assert set(data) >= {"log_alpha", "log_beta", "threshold", "n"}


def test_streaming_path_matches_table(monkeypatch):
    import divtest.exact as ex

    p1, p2 = make_distribution([0.3, 0.3, 0.4]), make_distribution([0.6, 0.2, 0.2])
    ref = statistic_distribution(JS, p1, 14)
    ref_beta = exact_type2(JS, 0.04, p1, p2, 14)
    monkeypatch.setattr(ex, "_CACHE_MAX_PAIRS", 0)
    monkeypatch.setattr(ex, "CHUNK_PAIRS", 500)
    for workers in (1, 3):
        sd = statistic_distribution(JS, p1, 14, workers=workers)
        np.testing.assert_allclose(sd.values, ref.values, atol=1e-12)
        np.testing.assert_allclose(sd.log_probs, ref.log_probs, atol=1e-12)
        assert exact_type2(JS, 0.04, p1, p2, 14, workers=workers) == pytest.approx(ref_beta, abs=1e-12)
