import math

import numpy as np
import pytest

from bdwalk.chain import ChainSpec
from bdwalk.criteria import (
    Classification,
    ExplosionOutcome,
    ImplosionOutcome,
    classify,
    closed_form_verdicts,
    explosion_partial_nested,
    explosion_partial_reordered,
    explosion_series,
    implosion_partial_nested,
    implosion_partial_reordered,
    implosion_series,
    log_speed_measure,
    scale_divergence,
    speed_measure,
)
from bdwalk.series import Method, SeriesPolicy, Verdict
from bdwalk.waiting import (
    DeterministicWait,
    ExponentialWait,
    GammaBase,
    ScaledWait,
    StableWait,
    StateRule,
    WaitingSpec,
)


def markov(beta, coeff=1.0):
    return WaitingSpec(ExponentialWait(StateRule.power(beta, coeff)))


def stable(alpha, beta, c=1.0):
    return WaitingSpec(StableWait(alpha, c, StateRule.power(beta)))


class TestSpeedMeasure:
    def test_state_zero(self):
        chain = ChainSpec.homogeneous(0.7)
        spec = WaitingSpec(ExponentialWait(StateRule.constant(1.0)))
        assert speed_measure(chain, spec, 0) == pytest.approx(0.5, rel=1e-14)

    def test_state_one(self):
        chain = ChainSpec.homogeneous(0.7)  # q_1 = 0.3
        spec = WaitingSpec(ExponentialWait(StateRule.constant(4.0)))
        assert speed_measure(chain, spec, 1) == pytest.approx(2 / 3, rel=1e-13)

    def test_symmetric_telescoping(self):
        chain = ChainSpec.homogeneous(0.5)
        spec = WaitingSpec(DeterministicWait(StateRule.constant(1.3)))
        deficit = 1.0 - math.exp(-1.3)
        for i in (1, 2, 5, 9):
            assert speed_measure(chain, spec, i) == pytest.approx(2 * deficit, rel=1e-12)

    def test_log_array_matches_scalars(self):
        chain = ChainSpec.homogeneous(0.4)
        spec = WaitingSpec(ExponentialWait(StateRule.power(1.0)))
        logs = log_speed_measure(chain, spec, 6)
        for i in range(6):
            assert math.exp(logs[i]) == pytest.approx(speed_measure(chain, spec, i), rel=1e-12)


class TestExplosionSeries:
    def test_markov_square_rates_explode(self):
        verdict = explosion_series(ChainSpec.homogeneous(0.7), markov(2.0))
        assert verdict.status is Verdict.HOLDS
        assert verdict.method is Method.CLOSED_FORM

    def test_markov_linear_rates_diverge(self):
        verdict = explosion_series(ChainSpec.homogeneous(0.7), markov(1.0))
        assert verdict.status is Verdict.FAILS

    def test_symmetric_fails_for_any_waiting(self):
        for spec in (markov(3.0), stable(0.5, 5.0), WaitingSpec(DeterministicWait(StateRule.constant(1.0)))):
            verdict = explosion_series(ChainSpec.homogeneous(0.5), spec)
            assert verdict.status is Verdict.FAILS

    def test_drift_down_fails(self):
        verdict = explosion_series(ChainSpec.homogeneous(0.3), markov(2.0))
        assert verdict.status is Verdict.FAILS

    def test_numeric_geometric_rates_hold(self):
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("exp(i / 2)")))
        verdict = explosion_series(ChainSpec.homogeneous(0.7), spec)
        assert verdict.status is Verdict.HOLDS
        assert verdict.method is Method.RATIO_POLICY
        assert verdict.tail_bound is not None

    def test_necessity_filter_fires(self):
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("i + 1")))
        policy = SeriesPolicy(deficit_horizon=20_000, max_terms=30_000)
        verdict = explosion_series(ChainSpec.homogeneous(0.7), spec, policy)
        assert verdict.status is Verdict.FAILS
        assert "deficit" in verdict.note

    def test_numeric_polynomial_rates_undetermined(self):
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("(i + 1) ** 2")))
        policy = SeriesPolicy(max_terms=20_000, deficit_horizon=20_000)
        verdict = explosion_series(ChainSpec.homogeneous(0.7), spec, policy)
        assert verdict.status is Verdict.UNDETERMINED
        assert verdict.partial_sum > 0
        assert verdict.terms_used >= policy.max_terms

    def test_undetermined_recurrence_propagates(self):
        chain = ChainSpec.from_callable(
            lambda i: (0.52, 0.48) if i % 2 == 0 else (0.48, 0.52)
        )
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("(i + 1) ** 2")))
        policy = SeriesPolicy(max_terms=4000, deficit_horizon=4000)
        verdict = explosion_series(chain, spec, policy)
        assert verdict.status is Verdict.UNDETERMINED
        assert "recurrence" in verdict.note


class TestImplosionSeries:
    def test_drift_down_square_rates(self):
        verdict = implosion_series(ChainSpec.homogeneous(0.3), markov(2.0))
        assert verdict.status is Verdict.HOLDS

    def test_symmetric_cubic_rates(self):
        verdict = implosion_series(ChainSpec.homogeneous(0.5), markov(3.0))
        assert verdict.status is Verdict.HOLDS

    def test_symmetric_linear_rates_fail(self):
        verdict = implosion_series(ChainSpec.homogeneous(0.5), markov(1.0))
        assert verdict.status is Verdict.FAILS

    def test_transient_declared_fails(self):
        verdict = implosion_series(ChainSpec.homogeneous(0.7), markov(3.0))
        assert verdict.status is Verdict.FAILS
        assert verdict.method is Method.CLOSED_FORM

    def test_numeric_drift_down(self):
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("exp(i / 2)")))
        verdict = implosion_series(ChainSpec.homogeneous(0.3), spec)
        assert verdict.status is Verdict.HOLDS
        assert verdict.method is Method.RATIO_POLICY

    def test_numeric_symmetric(self):
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("exp(i / 2)")))
        verdict = implosion_series(ChainSpec.homogeneous(0.5), spec)
        assert verdict.status is Verdict.HOLDS

    def test_numeric_transient_blowup_fails(self):
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("(i + 1) ** 3")))
        policy = SeriesPolicy(max_terms=20_000, deficit_horizon=20_000)
        verdict = implosion_series(ChainSpec.homogeneous(0.7), spec, policy)
        assert verdict.status is Verdict.FAILS


class TestScaleDivergence:
    def test_recurrent_holds(self):
        verdict = scale_divergence(ChainSpec.homogeneous(0.5))
        assert verdict.status is Verdict.HOLDS
        assert math.isinf(verdict.partial_sum)

    def test_transient_fails_with_limit(self):
        verdict = scale_divergence(ChainSpec.homogeneous(0.7))
        assert verdict.status is Verdict.FAILS
        assert verdict.partial_sum == pytest.approx(7 / 4, rel=1e-12)


MARKOV_GRID = {
    # (p, beta) -> (explosion, implosion)
    (0.3, 0.5): ("NonExplosive", "NonImploding"),
    (0.3, 1.5): ("NonExplosive", "Implodes"),
    (0.3, 2.5): ("NonExplosive", "Implodes"),
    (0.3, 3.0): ("NonExplosive", "Implodes"),
    (0.5, 0.5): ("NonExplosive", "NonImploding"),
    (0.5, 1.5): ("NonExplosive", "NonImploding"),
    (0.5, 2.5): ("NonExplosive", "Implodes"),
    (0.5, 3.0): ("NonExplosive", "Implodes"),
    (0.7, 0.5): ("NonExplosive", "NonImploding"),
    (0.7, 1.5): ("Explodes", "NonImploding"),
    (0.7, 2.5): ("Explodes", "NonImploding"),
    (0.7, 3.0): ("Explodes", "NonImploding"),
}


class TestClassify:
    @pytest.mark.parametrize("p,beta", sorted(MARKOV_GRID))
    def test_markov_grid(self, p, beta):
        result = classify(ChainSpec.homogeneous(p), markov(beta))
        want_exp, want_imp = MARKOV_GRID[(p, beta)]
        assert result.explosion_verdict.value == want_exp
        assert result.implosion_verdict.value == want_imp

    def test_stable_examples(self):
        result = classify(ChainSpec.homogeneous(0.7), stable(0.5, 3.0))
        assert result.explosion_verdict is ExplosionOutcome.EXPLODES
        assert result.implosion_verdict is ImplosionOutcome.NON_IMPLODING
        result = classify(ChainSpec.homogeneous(0.3), stable(0.5, 3.0))
        assert result.explosion_verdict is ExplosionOutcome.NON_EXPLOSIVE
        assert result.implosion_verdict is ImplosionOutcome.IMPLODES

    def test_stable_symmetric_threshold(self):
        # symmetric: index-weighted series needs alpha*beta > 2
        assert classify(ChainSpec.homogeneous(0.5), stable(0.5, 5.0)).implosion_verdict \
            is ImplosionOutcome.IMPLODES
        assert classify(ChainSpec.homogeneous(0.5), stable(0.5, 4.0)).implosion_verdict \
            is ImplosionOutcome.NON_IMPLODING  # exact boundary diverges
        assert classify(ChainSpec.homogeneous(0.8), stable(0.8, 2.5)).implosion_verdict \
            is ImplosionOutcome.NON_IMPLODING  # 0.8*2.5 = 2 exactly

    def test_boundary_beta_exact(self):
        result = classify(ChainSpec.homogeneous(0.5), markov(2.0))
        assert result.implosion_verdict is ImplosionOutcome.NON_IMPLODING
        result = classify(ChainSpec.homogeneous(0.6), markov(1.0))
        assert result.explosion_verdict is ExplosionOutcome.NON_EXPLOSIVE

    def test_scaled_family_matches_markov_thresholds(self):
        base = GammaBase(2.0, 0.5)
        for p, beta in MARKOV_GRID:
            spec = WaitingSpec(ScaledWait(base, StateRule.power(beta)))
            result = classify(ChainSpec.homogeneous(p), spec)
            want_exp, want_imp = MARKOV_GRID[(p, beta)]
            assert result.explosion_verdict.value == want_exp
            assert result.implosion_verdict.value == want_imp

    def test_lambda_invariance_closed(self):
        for p, beta in sorted(MARKOV_GRID):
            verdicts = set()
            for lam in (0.5, 1.0, 2.0):
                r = classify(ChainSpec.homogeneous(p), markov(beta), lam=lam)
                verdicts.add((r.explosion_verdict, r.implosion_verdict))
            assert len(verdicts) == 1

    def test_lambda_invariance_numeric(self):
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("exp(i / 2)")))
        verdicts = set()
        for lam in (0.5, 1.0, 2.0):
            r = classify(ChainSpec.homogeneous(0.7), spec, lam=lam)
            verdicts.add((r.explosion_verdict, r.implosion_verdict))
        assert len(verdicts) == 1

    def test_never_both(self):
        for p in (0.3, 0.5, 0.7):
            for beta in (0.5, 1.5, 2.5, 3.0):
                for alpha in (None, 0.3, 0.5, 0.8):
                    spec = markov(beta) if alpha is None else stable(alpha, beta)
                    r = classify(ChainSpec.homogeneous(p), spec)
                    both = (
                        r.explosion_verdict is ExplosionOutcome.EXPLODES
                        and r.implosion_verdict is ImplosionOutcome.IMPLODES
                    )
                    assert not both

    def test_undeclared_rule_undetermined_with_partials(self):
        chain = ChainSpec.from_callable(
            lambda i: (0.52, 0.48) if i % 2 == 0 else (0.48, 0.52)
        )
        spec = WaitingSpec(ExponentialWait(StateRule.from_expression("(i + 1) ** 2")))
        policy = SeriesPolicy(max_terms=4000, deficit_horizon=4000)
        result = classify(chain, spec, policy)
        assert not result.determinate
        rec = result.to_record()
        assert rec["overall"]["explosion"] == "Undetermined"

    def test_closed_form_marker(self):
        assert closed_form_verdicts(
            ChainSpec.homogeneous(0.7), markov(2.0)
        ) is not None
        undeclared = WaitingSpec(ExponentialWait(StateRule.from_expression("(i+1)**2")))
        assert closed_form_verdicts(ChainSpec.homogeneous(0.7), undeclared) is None

    def test_closed_and_policy_agree_when_determinate(self):
        # numeric policy on geometric rates vs the closed form on the same
        # declared family: both must say Holds/Fails identically
        for p in (0.3, 0.5, 0.7):
            declared = WaitingSpec(ExponentialWait(StateRule.power(2.0, 1.0)))
            numeric = WaitingSpec(
                ExponentialWait(StateRule.from_expression("exp(i / 2)"))
            )
            closed = classify(ChainSpec.homogeneous(p), declared)
            num = classify(ChainSpec.homogeneous(p), numeric)
            # exp(i/2) rates dominate (i+1)^2, so Holds statements must agree
            if closed.explosion.status is Verdict.HOLDS:
                assert num.explosion.status is Verdict.HOLDS
            if closed.implosion_series.status is Verdict.HOLDS:
                assert num.implosion_series.status is Verdict.HOLDS

    def test_record_shape(self):
        result = classify(ChainSpec.homogeneous(0.7), markov(2.0))
        rec = result.to_record()
        assert set(rec["series"]) == {"explosion", "implosion", "scale_divergence"}
        assert rec["series"]["explosion"]["status"] == "Holds"
        assert isinstance(result, Classification)


class TestReorderingEquivalence:
    @pytest.mark.parametrize(
        "chain,spec",
        [
            (ChainSpec.homogeneous(0.6), "markov"),
            (ChainSpec.homogeneous(0.45), "stable"),
            (ChainSpec.rational([3.0, 1.0], [4.0, 2.0]), "markov"),
        ],
    )
    def test_partial_sums_agree(self, chain, spec):
        waiting = markov(2.0) if spec == "markov" else stable(0.5, 2.0)
        for upto in (10, 50, 200):
            nested = explosion_partial_nested(chain, waiting, upto)
            reordered = explosion_partial_reordered(chain, waiting, upto)
            assert nested == pytest.approx(reordered, rel=1e-10)
            nested_i = implosion_partial_nested(chain, waiting, upto)
            reordered_i = implosion_partial_reordered(chain, waiting, upto)
            assert nested_i == pytest.approx(reordered_i, rel=1e-10)
