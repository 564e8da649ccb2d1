"""Explosion and implosion classification for the continuous-time walk.

The two regularity questions are zero-one dichotomies governed by series
built from the scale increments and the speed measure:

* explosion (infinitely many states in finite time) holds iff the weighted
  series of speed-measure partial sums against the scale increments is
  finite; after reordering, that series is  sum_i deficit_i * I_i  with
  I_i the forward scale tail seen from state i;
* implosion (entrance from infinity in finite time) holds iff the analogous
  backward-weighted series is finite AND the scale increments themselves sum
  to infinity (recurrence).

Declared families (homogeneous-type step ratios plus monomial waiting-time
scale rules) are decided exactly from p-series thresholds; everything else
runs through the shared numeric series policy and may honestly return
Undetermined.  Verdicts never depend on the transform argument; the default
is 1 and the CLI exposes it so tests can confirm the invariance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainClass, ChainSpec, RecurrenceResult, recurrence_class
from .errors import InvariantViolation, ValidationError
from .series import (
    Method,
    SeriesAccumulator,
    SeriesPolicy,
    SeriesVerdict,
    Verdict,
    closed_form_verdict,
)
from .waiting import WaitingSpec

# tolerance bands: step-ratio limits near 1 and p-series exponents near their
# critical value are treated as boundary cases
_RATIO_EPS = 1e-12
_EXP_EPS = 1e-9
# closed forms assume both jump directions keep non-vanishing weight; step
# ratios outside this range leave the deficit mixture exponent undetermined
_RATIO_FLOOR = 1e-9
_RATIO_CEIL = 1e9


class ExplosionOutcome(enum.Enum):
    EXPLODES = "Explodes"
    NON_EXPLOSIVE = "NonExplosive"
    UNDETERMINED = "Undetermined"


class ImplosionOutcome(enum.Enum):
    IMPLODES = "Implodes"
    NON_IMPLODING = "NonImploding"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Classification:
    explosion: SeriesVerdict
    implosion_series: SeriesVerdict
    scale_divergence: SeriesVerdict
    explosion_verdict: ExplosionOutcome
    implosion_verdict: ImplosionOutcome
    lam: float

    def to_record(self) -> dict:
        return {
            "overall": {
                "explosion": self.explosion_verdict.value,
                "implosion": self.implosion_verdict.value,
            },
            "series": {
                "explosion": self.explosion.to_record("explosion", self.lam),
                "implosion": self.implosion_series.to_record("implosion", self.lam),
                "scale_divergence": self.scale_divergence.to_record(
                    "scale_divergence", None
                ),
            },
        }

    @property
    def determinate(self) -> bool:
        return (
            self.explosion_verdict is not ExplosionOutcome.UNDETERMINED
            and self.implosion_verdict is not ImplosionOutcome.UNDETERMINED
        )


# ---------------------------------------------------------------------------
# speed measure


def speed_measure(chain: ChainSpec, waiting: WaitingSpec, i: int,
                  lam: float | None = None) -> float:
    """Speed-measure weight of state i (may overflow to inf; log form below)."""
    if i < 0:
        raise ValidationError("state index must be >= 0")
    return float(np.exp(log_speed_measure(chain, waiting, i + 1, lam)[i]))


def log_speed_measure(chain: ChainSpec, waiting: WaitingSpec, n: int,
                      lam: float | None = None) -> np.ndarray:
    """log of the speed-measure weights for states 0..n-1.

    Weight i is the transform deficit at i times the transition product
    (p_1...p_{i-1})/(q_1...q_i), i.e. deficit / (q_i * scale increment i-1).
    """
    deficits = waiting.deficit_array(chain, n, lam)
    out = np.empty(n)
    out[0] = math.log(deficits[0])
    if n > 1:
        logs = chain.scale.log_increments(n)  # increments 0..n-1
        q = chain.q_array(n)
        idx = np.arange(1, n)
        out[1:] = np.log(deficits[1:]) - np.log(q[1:]) - logs[idx - 1]
    return out


# ---------------------------------------------------------------------------
# closed forms for declared families


def _pseries_verdict(s: float, threshold: float, boundary_exact: bool,
                     what: str) -> SeriesVerdict | None:
    """Verdict for sum (i+1)^(threshold - 1 - s): converges iff s > threshold."""
    if s > threshold + _EXP_EPS:
        return closed_form_verdict(Verdict.HOLDS, f"{what}: exponent {s} > {threshold}")
    if s < threshold - _EXP_EPS or boundary_exact:
        return closed_form_verdict(Verdict.FAILS, f"{what}: exponent {s} <= {threshold}")
    return None  # boundary with a slowly-varying factor in play


def _closed_explosion(chain: ChainSpec, waiting: WaitingSpec) -> SeriesVerdict | None:
    tail = chain.tail_info()
    if tail is None:
        return None
    ratio = tail.ratio_limit
    if ratio > 1.0 + _RATIO_EPS:
        return closed_form_verdict(
            Verdict.FAILS, "step ratios exceed 1: forward scale tails diverge"
        )
    if abs(ratio - 1.0) <= _RATIO_EPS:
        if tail.drift_coeff is not None and 4.0 * tail.drift_coeff <= 1.0 + _EXP_EPS:
            return closed_form_verdict(
                Verdict.FAILS, "recurrent chain: forward scale tails diverge"
            )
        return None  # transient critical drift: thresholds shift, stay numeric
    declared = waiting.declared_exponents()
    if declared is None or ratio < _RATIO_FLOOR:
        return None
    s, exact = declared
    return _pseries_verdict(s, 1.0, exact, "deficit series")


def _closed_implosion(chain: ChainSpec, waiting: WaitingSpec) -> SeriesVerdict | None:
    tail = chain.tail_info()
    if tail is None:
        return None
    ratio = tail.ratio_limit
    declared = waiting.declared_exponents()
    if declared is None or not (_RATIO_FLOOR <= ratio <= _RATIO_CEIL):
        return None
    s, exact = declared
    if ratio > 1.0 + _RATIO_EPS:
        # backward scale tails are bounded: the series behaves like the
        # plain deficit series
        return _pseries_verdict(s, 1.0, exact, "deficit series")
    if abs(ratio - 1.0) <= _RATIO_EPS:
        if tail.drift_coeff is not None and tail.drift_coeff == 0.0:
            # symmetric-type tails: backward sums grow linearly
            return _pseries_verdict(s, 2.0, exact, "index-weighted deficit series")
        return None
    # transient chain: backward weights blow up geometrically against any
    # monomial deficit decay
    return closed_form_verdict(
        Verdict.FAILS, "transient chain: backward scale weights diverge"
    )


def closed_form_verdicts(chain: ChainSpec, waiting: WaitingSpec,
                         lam: float | None = None) -> Classification | None:
    """Exact classification for declared families, or None when not applicable."""
    explosion = _closed_explosion(chain, waiting)
    implosion = _closed_implosion(chain, waiting)
    if explosion is None or implosion is None:
        return None
    rec = recurrence_class(chain)
    if rec.status is ChainClass.UNDETERMINED:
        return None
    scale_div = _recurrence_to_verdict(rec)
    return _assemble(explosion, implosion, scale_div, lam if lam is not None else waiting.lam)


# ---------------------------------------------------------------------------
# numeric paths


class _DeficitWatch:
    """Necessity filter: deficits must dip below the floor early enough."""

    def __init__(self, policy: SeriesPolicy):
        self.policy = policy
        self.ever_below = False
        self.count = 0

    def update(self, deficits: np.ndarray) -> SeriesVerdict | None:
        if not self.ever_below and deficits.size:
            self.ever_below = bool(deficits.min() < self.policy.deficit_floor)
        self.count += deficits.size
        if self.count >= self.policy.deficit_horizon and not self.ever_below:
            return SeriesVerdict(
                Verdict.FAILS, Method.CAP, math.nan, self.count,
                note=(
                    "transform deficit stayed above "
                    f"{self.policy.deficit_floor} through index {self.count}"
                ),
            )
        return None


def _windows(start: int, stop: int, policy: SeriesPolicy):
    """(lo, hi) windows from ``start`` to ``stop``, ramping 256 -> policy.block.

    Small early windows let verdicts fire before far states are evaluated,
    which matters when user rules overflow far out.
    """
    size = min(256, policy.block)
    lo = start
    while lo < stop:
        hi = min(lo + size, stop)
        yield lo, hi
        lo = hi
        size = min(2 * size, policy.block)


def _recurrence_to_verdict(rec: RecurrenceResult) -> SeriesVerdict:
    """Scale-divergence verdict: Holds means the increments sum to infinity."""
    if rec.status is ChainClass.RECURRENT:
        return SeriesVerdict(Verdict.HOLDS, rec.method, math.inf,
                             rec.diagnostics.terms_used if rec.diagnostics else 0,
                             note="scale increments sum to infinity")
    if rec.status is ChainClass.TRANSIENT:
        return SeriesVerdict(Verdict.FAILS, rec.method, rec.r,
                             rec.diagnostics.terms_used if rec.diagnostics else 0,
                             note="scale increments have a finite sum")
    diag = rec.diagnostics
    return SeriesVerdict(Verdict.UNDETERMINED, Method.INCONCLUSIVE,
                         diag.partial_sum if diag else math.nan,
                         diag.terms_used if diag else 0,
                         note="recurrence undetermined")


def _forward_tail_logs(chain: ChainSpec, n_terms: int,
                       policy: SeriesPolicy) -> np.ndarray | SeriesVerdict:
    """log of the forward scale tails sum_{k>=i} increment_k for i < n_terms.

    Requires geometric decay of the increments near the working horizon so
    the beyond-horizon remainder can be bounded; horizons grow up to 4x the
    term budget before giving up.
    """
    table = chain.scale
    horizon = max(2 * policy.window, policy.block)
    max_horizon = 4 * n_terms + 8 * policy.window
    while True:
        horizon = min(horizon, max_horizon)
        logs = table.log_increments(horizon + 1)
        ratios = np.exp(np.diff(logs[-(policy.window + 1):]))
        rho = float(ratios.max())
        if rho < 1.0 - policy.ratio_epsilon and horizon >= n_terms + policy.window:
            log_tail = logs[horizon] + math.log(rho / (1.0 - rho))
            rev = np.logaddexp.accumulate(logs[::-1])[::-1]
            return np.logaddexp(rev, log_tail)[:n_terms]
        if horizon >= max_horizon:
            return SeriesVerdict(
                Verdict.UNDETERMINED, Method.INCONCLUSIVE, math.nan, 0,
                note="forward scale tails not geometrically bounded within the horizon",
            )
        horizon *= 2


def explosion_series(chain: ChainSpec, waiting: WaitingSpec,
                     policy: SeriesPolicy | None = None,
                     lam: float | None = None) -> SeriesVerdict:
    """Verdict on finiteness of the explosion series (reordered form)."""
    policy = policy or SeriesPolicy()
    lam = waiting.lam if lam is None else lam
    closed = _closed_explosion(chain, waiting)
    if closed is not None:
        return closed

    rec = recurrence_class(chain, policy=policy)
    if rec.status is ChainClass.RECURRENT:
        return SeriesVerdict(Verdict.FAILS, rec.method, math.nan, 0,
                             note="recurrent chain: forward scale tails diverge")
    watch = _DeficitWatch(policy)
    if rec.status is ChainClass.UNDETERMINED:
        # the necessity filter can still force a Fails
        for lo, hi in _windows(0, policy.deficit_horizon, policy):
            deficits = waiting.deficit_array(chain, hi, lam)[lo:hi]
            verdict = watch.update(deficits)
            if verdict is not None:
                return verdict
            if watch.ever_below:
                break
        return SeriesVerdict(Verdict.UNDETERMINED, Method.INCONCLUSIVE, math.nan, 0,
                             note="recurrence of the embedded chain undetermined")

    tails = _forward_tail_logs(chain, policy.max_terms, policy)
    if isinstance(tails, SeriesVerdict):
        return tails
    logs = chain.scale.log_increments(policy.max_terms)
    log_p = np.log(chain.p_array(policy.max_terms))
    acc = SeriesAccumulator(policy)
    for lo, hi in _windows(0, policy.max_terms, policy):
        deficits = waiting.deficit_array(chain, hi, lam)[lo:hi]
        verdict = watch.update(deficits)
        if verdict is not None:
            verdict.partial_sum = acc.total
            verdict.terms_used = acc.terms_used
            return verdict
        with np.errstate(over="ignore", under="ignore"):
            block = deficits * np.exp(tails[lo:hi] - logs[lo:hi] - log_p[lo:hi])
        verdict = acc.feed_block(block)
        if verdict is not None:
            return verdict
    return acc.finish()


def implosion_series(chain: ChainSpec, waiting: WaitingSpec,
                     policy: SeriesPolicy | None = None,
                     lam: float | None = None) -> SeriesVerdict:
    """Verdict on finiteness of the implosion series (reordered form).

    Term i is the speed-measure weight times the canonical scale, i.e.
    deficit_i * u_i / (q_i * increment_{i-1}); the backward inner sums are
    finite, so no tail bounding is needed.
    """
    policy = policy or SeriesPolicy()
    lam = waiting.lam if lam is None else lam
    closed = _closed_implosion(chain, waiting)
    if closed is not None:
        return closed

    table = chain.scale
    watch = _DeficitWatch(policy)
    acc = SeriesAccumulator(policy)
    logs = table.log_increments(policy.max_terms + 1)
    prefix = np.logaddexp.accumulate(logs)  # prefix[j] = log u_{j+1}
    q = chain.q_array(policy.max_terms + 1)
    for lo, hi in _windows(1, policy.max_terms + 1, policy):
        deficits = waiting.deficit_array(chain, hi, lam)[lo:hi]
        verdict = watch.update(deficits)
        if verdict is not None:
            verdict.partial_sum = acc.total
            verdict.terms_used = acc.terms_used
            return verdict
        idx = np.arange(lo, hi)
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            log_terms = (np.log(deficits) + prefix[idx - 1]
                         - np.log(q[idx]) - logs[idx - 1])
            block = np.exp(log_terms)
        verdict = acc.feed_block(block)
        if verdict is not None:
            return verdict
    return acc.finish()


def scale_divergence(chain: ChainSpec,
                     policy: SeriesPolicy | None = None) -> SeriesVerdict:
    """Holds iff the scale increments sum to infinity (recurrent chain)."""
    return _recurrence_to_verdict(recurrence_class(chain, policy=policy))


def _assemble(explosion: SeriesVerdict, implosion: SeriesVerdict,
              scale_div: SeriesVerdict, lam: float) -> Classification:
    if explosion.status is Verdict.HOLDS:
        expl = ExplosionOutcome.EXPLODES
    elif explosion.status is Verdict.FAILS:
        expl = ExplosionOutcome.NON_EXPLOSIVE
    else:
        expl = ExplosionOutcome.UNDETERMINED
    if implosion.status is Verdict.HOLDS and scale_div.status is Verdict.HOLDS:
        impl = ImplosionOutcome.IMPLODES
    elif implosion.status is Verdict.FAILS or scale_div.status is Verdict.FAILS:
        impl = ImplosionOutcome.NON_IMPLODING
    else:
        impl = ImplosionOutcome.UNDETERMINED
    if expl is ExplosionOutcome.EXPLODES and impl is ImplosionOutcome.IMPLODES:
        raise InvariantViolation(
            "classification claims both explosion and implosion; "
            "the dichotomies exclude each other"
        )
    return Classification(explosion, implosion, scale_div, expl, impl, lam)


def classify(chain: ChainSpec, waiting: WaitingSpec,
             policy: SeriesPolicy | None = None,
             lam: float | None = None) -> Classification:
    """Answer both regularity questions, exactly where declared, else numerically."""
    policy = policy or SeriesPolicy()
    lam = waiting.lam if lam is None else lam
    explosion = explosion_series(chain, waiting, policy, lam)
    implosion = implosion_series(chain, waiting, policy, lam)
    scale_div = scale_divergence(chain, policy)
    return _assemble(explosion, implosion, scale_div, lam)


# ---------------------------------------------------------------------------
# finite triangular partial sums (both orders of summation)
#
# Over the index triangle {(i, k): 0 <= i <= k <= N} the nested and the
# reordered forms are the same finite sum; keeping both makes the reordering
# testable.


def explosion_partial_nested(chain: ChainSpec, waiting: WaitingSpec, upto: int,
                             lam: float | None = None) -> float:
    nu = np.exp(log_speed_measure(chain, waiting, upto + 1, lam))
    inc = np.exp(chain.scale.log_increments(upto + 1))
    return float(np.sum(np.cumsum(nu) * inc))


def explosion_partial_reordered(chain: ChainSpec, waiting: WaitingSpec, upto: int,
                                lam: float | None = None) -> float:
    deficits = waiting.deficit_array(chain, upto + 1, lam)
    inc = np.exp(chain.scale.log_increments(upto + 1))
    suffix = np.cumsum(inc[::-1])[::-1]
    p = chain.p_array(upto + 1)
    return float(np.sum(deficits * suffix / (inc * p)))


def implosion_partial_nested(chain: ChainSpec, waiting: WaitingSpec, upto: int,
                             lam: float | None = None) -> float:
    nu = np.exp(log_speed_measure(chain, waiting, upto + 1, lam))
    inc = np.exp(chain.scale.log_increments(upto + 1))
    tail_nu = np.cumsum(nu[::-1])[::-1]  # tail_nu[k] = sum_{i >= k} nu_i
    return float(np.sum(tail_nu[1:] * inc[:-1]))


def implosion_partial_reordered(chain: ChainSpec, waiting: WaitingSpec, upto: int,
                                lam: float | None = None) -> float:
    deficits = waiting.deficit_array(chain, upto + 1, lam)
    inc = np.exp(chain.scale.log_increments(upto + 1))
    u = np.concatenate([[0.0], np.cumsum(inc)])  # u[i] = canonical scale of i
    q = chain.q_array(upto + 1)
    idx = np.arange(1, upto + 1)
    return float(np.sum(deficits[idx] * u[idx] / (q[idx] * inc[idx - 1])))
