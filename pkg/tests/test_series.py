import numpy as np
import pytest

from bdwalk.errors import ValidationError
from bdwalk.series import (
    Method,
    SeriesAccumulator,
    SeriesPolicy,
    Verdict,
    run_policy,
)


def blocks_from(terms, block=1000):
    arr = np.asarray(terms, dtype=float)
    for start in range(0, len(arr), block):
        yield arr[start : start + block]


def test_geometric_series_holds():
    policy = SeriesPolicy()
    terms = 0.5 ** np.arange(2000)
    verdict = run_policy(blocks_from(terms), policy)
    assert verdict.status is Verdict.HOLDS
    assert verdict.method is Method.RATIO_POLICY
    assert verdict.partial_sum == pytest.approx(2.0, rel=1e-12)
    assert verdict.tail_bound < policy.tail_rel_tol * verdict.partial_sum


def test_constant_terms_fail_flat():
    verdict = run_policy(blocks_from(np.full(5000, 2.0)), SeriesPolicy())
    assert verdict.status is Verdict.FAILS
    assert verdict.method is Method.CAP
    assert "stopped decreasing" in verdict.note


def test_growing_terms_fail():
    verdict = run_policy(blocks_from(1.5 ** np.arange(200)), SeriesPolicy())
    assert verdict.status is Verdict.FAILS


def test_cap_rule_fires_on_large_partial_sums():
    policy = SeriesPolicy(divergence_cap=100.0)
    # strictly decreasing terms, so only the cap can catch the divergence
    terms = 10.0 / np.sqrt(np.arange(1, 2000))
    verdict = run_policy(blocks_from(terms), policy)
    assert verdict.status is Verdict.FAILS
    assert "cap" in verdict.note


def test_harmonic_is_undetermined():
    policy = SeriesPolicy(max_terms=20_000)
    terms = 1.0 / np.arange(1.0, 30_000.0)
    verdict = run_policy(blocks_from(terms), policy)
    assert verdict.status is Verdict.UNDETERMINED
    assert verdict.terms_used >= policy.max_terms
    assert verdict.partial_sum > 0


def test_ratio_just_above_threshold_is_undetermined():
    # ratio 0.9995 > 1 - 1e-3: convergent, but the policy must not claim it
    policy = SeriesPolicy(max_terms=5_000)
    terms = 0.9995 ** np.arange(6_000)
    verdict = run_policy(blocks_from(terms), policy)
    assert verdict.status is Verdict.UNDETERMINED


def test_flat_detection_tolerates_rounding_jitter():
    rng = np.random.default_rng(0)
    terms = 1.0 + 1e-15 * rng.standard_normal(2000)
    verdict = run_policy(blocks_from(terms), SeriesPolicy())
    assert verdict.status is Verdict.FAILS


def test_oscillating_ratios_are_undetermined():
    terms = np.tile([1.0, 0.9], 3000)  # ratio alternates 0.9, 1.111
    verdict = run_policy(blocks_from(terms), SeriesPolicy(max_terms=5000))
    assert verdict.status is Verdict.UNDETERMINED


def test_infinite_term_fails():
    acc = SeriesAccumulator(SeriesPolicy())
    assert acc.feed(1.0) is None
    verdict = acc.feed(float("inf"))
    assert verdict is not None and verdict.status is Verdict.FAILS


def test_negative_and_nan_terms_rejected():
    acc = SeriesAccumulator(SeriesPolicy())
    with pytest.raises(ValidationError):
        acc.feed(-1.0)
    with pytest.raises(ValidationError):
        acc.feed(float("nan"))


def test_holds_requires_small_tail_bound():
    # ratios below the threshold but with terms so flat-ish that the bound
    # stays large for a while: verdict must wait until the bound shrinks
    policy = SeriesPolicy(window=64)
    terms = 0.99 ** np.arange(20_000)  # 0.99 < 1 - 1e-3
    verdict = run_policy(blocks_from(terms), policy)
    assert verdict.status is Verdict.HOLDS
    assert verdict.tail_bound < policy.tail_rel_tol * verdict.partial_sum
    assert verdict.partial_sum == pytest.approx(100.0, rel=1e-9)


def test_record_serialization():
    verdict = run_policy(blocks_from(0.5 ** np.arange(2000)), SeriesPolicy())
    rec = verdict.to_record("explosion", lam=1.0)
    assert rec["question"] == "explosion"
    assert rec["status"] == "Holds"
    assert rec["method"] == "RatioPolicy"
    assert rec["lambda"] == 1.0
