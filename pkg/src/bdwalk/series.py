"""Numeric convergence policy for positive-term series.

Convergence of a series is not decidable from finitely many terms, so the
library uses one conservative, auditable policy everywhere:

* declared convergent only when the term ratios stay below ``1 - ratio_epsilon``
  for ``window`` consecutive terms AND the geometric tail bound implied by the
  worst ratio in that window is below ``tail_rel_tol`` of the partial sum;
* declared divergent only when the partial sum exceeds ``divergence_cap`` or
  the terms stop decreasing (ratios >= 1 - flat_tol) for a whole window;
* otherwise undetermined, with the partial sum and term count as diagnostics.

Closed forms for declared families bypass the policy entirely and are tagged
with their own method.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


class Verdict(enum.Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    UNDETERMINED = "Undetermined"


class Method(enum.Enum):
    CLOSED_FORM = "ClosedForm"
    RATIO_POLICY = "RatioPolicy"
    CAP = "Cap"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SeriesPolicy:
    ratio_epsilon: float = 1e-3
    window: int = 256
    tail_rel_tol: float = 1e-12
    divergence_cap: float = 1e12
    flat_tol: float = 1e-12
    max_terms: int = 100_000
    # necessity filter: the per-state transform deficit must dip below
    # deficit_floor by index deficit_horizon or the series is declared divergent
    deficit_floor: float = 1e-6
    deficit_horizon: int = 100_000
    block: int = 4096

    def replace(self, **kw) -> "SeriesPolicy":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass
class SeriesVerdict:
    status: Verdict
    method: Method
    partial_sum: float
    terms_used: int
    tail_bound: float | None = None
    note: str = ""

    def to_record(self, question: str, lam: float | None = None) -> dict:
        return {
            "question": question,
            "status": self.status.value,
            "method": self.method.value,
            "partial_sum": None if math.isnan(self.partial_sum) else self.partial_sum,
            "terms_used": self.terms_used,
            "tail_bound": self.tail_bound,
            "lambda": lam,
            "note": self.note,
        }


def closed_form_verdict(status: Verdict, note: str = "") -> SeriesVerdict:
    return SeriesVerdict(status, Method.CLOSED_FORM, math.nan, 0, None, note)


@dataclass
class SeriesAccumulator:
    """Streaming evaluator implementing the policy; feed terms, get a verdict.

    ``feed`` returns a verdict as soon as one of the policy rules fires and
    ``None`` while the evidence is still inconclusive; ``finish`` closes the
    stream with an undetermined verdict.
    """

    policy: SeriesPolicy
    total: float = 0.0
    _comp: float = 0.0
    terms_used: int = 0
    _prev: float = math.nan
    _ratio_run: int = 0
    _flat_run: int = 0
    _zero_run: int = 0
    _ring: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    _ring_pos: int = 0

    def __post_init__(self):
        self._ring = np.zeros(self.policy.window)

    def _add(self, t: float) -> None:
        y = t - self._comp
        s = self.total + y
        self._comp = (s - self.total) - y
        self.total = s

    def feed(self, term: float) -> SeriesVerdict | None:
        pol = self.policy
        if not (term >= 0.0):  # catches NaN and negatives
            raise ValidationError(f"series terms must be >= 0, got {term!r}")
        self._add(term)
        self.terms_used += 1
        if self.total > pol.divergence_cap:
            return SeriesVerdict(
                Verdict.FAILS, Method.CAP, self.total, self.terms_used,
                note="partial sum exceeded the divergence cap",
            )
        if term == 0.0:
            # a full window of exact zeros: the remaining mass is below float
            # resolution, treat the tail as negligible
            self._zero_run += 1
            if self._zero_run >= pol.window:
                return SeriesVerdict(
                    Verdict.HOLDS, Method.RATIO_POLICY, self.total, self.terms_used,
                    tail_bound=0.0, note="terms underflowed to zero over a full window",
                )
        else:
            self._zero_run = 0
        prev = self._prev
        self._prev = term
        if not math.isnan(prev) and prev > 0.0 and math.isfinite(term):
            ratio = term / prev
            self._ring[self._ring_pos] = ratio
            self._ring_pos = (self._ring_pos + 1) % pol.window
            if ratio < 1.0 - pol.ratio_epsilon:
                self._ratio_run += 1
            else:
                self._ratio_run = 0
            if ratio >= 1.0 - pol.flat_tol:
                self._flat_run += 1
            else:
                self._flat_run = 0
            if self._flat_run >= pol.window:
                return SeriesVerdict(
                    Verdict.FAILS, Method.CAP, self.total, self.terms_used,
                    note="terms stopped decreasing over a full window",
                )
            if self._ratio_run >= pol.window:
                rho = float(self._ring.max())
                tail = term * rho / (1.0 - rho)
                if tail < pol.tail_rel_tol * self.total:
                    return SeriesVerdict(
                        Verdict.HOLDS, Method.RATIO_POLICY, self.total,
                        self.terms_used, tail_bound=tail,
                    )
        elif math.isinf(term):
            return SeriesVerdict(
                Verdict.FAILS, Method.CAP, self.total, self.terms_used,
                note="term overflowed to infinity",
            )
        return None

    def feed_block(self, terms: np.ndarray) -> SeriesVerdict | None:
        for t in terms:
            verdict = self.feed(float(t))
            if verdict is not None:
                return verdict
        return None

    def finish(self, note: str = "inconclusive within the term budget") -> SeriesVerdict:
        return SeriesVerdict(
            Verdict.UNDETERMINED, Method.INCONCLUSIVE, self.total, self.terms_used,
            note=note,
        )


def run_policy(blocks, policy: SeriesPolicy) -> SeriesVerdict:
    """Drive an accumulator over an iterable of term blocks."""
    acc = SeriesAccumulator(policy)
    for block in blocks:
        verdict = acc.feed_block(np.asarray(block, dtype=float))
        if verdict is not None:
            return verdict
        if acc.terms_used >= policy.max_terms:
            break
    return acc.finish()
