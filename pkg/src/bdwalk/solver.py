"""Exact finite linear systems for hitting-time transforms and profits.

Three tridiagonal systems drive the module, all solved by direct Thomas
elimination (diagonally dominant in the transform variables since the
per-jump transforms lie in (0, 1)):

* hitting transform: h_i = p_i phi^+_i h_{i+1} + q_i phi^-_i h_{i-1} with
  h_n = 1, giving E_i exp(-lam * time to reach n);
* expected-profit: y_i = A_i + p_i y_{i+1} + q_i y_{i-1} with y_n = 0,
  the total profit collected before reaching n (and its interval variant
  absorbing at both ends);
* the profit system also has a telescoped closed-form solution built from
  scale products, kept as an independent oracle for the elimination.

The comparison bounds sandwich the transform complement between profit
solutions (lower bound scaled by the smallest solved transform value), and
the descent-tail profits give the per-state contributions to the implosion
series together with windowed interval solves to check them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .chain import ChainClass, ChainSpec, recurrence_class
from .errors import InvariantViolation, NotApplicableError, NumericError, ValidationError
from .waiting import WaitingSpec

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SolveResult:
    values: np.ndarray
    residual: float  # max absolute equation residual
    kind: str
    offset: int = 0  # state index of values[0]

    def value_at(self, state: int) -> float:
        return float(self.values[state - self.offset])


def _thomas(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
            rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system; lower[0] and upper[-1] are ignored."""
    n = len(diag)
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        if denom == 0.0:
            raise NumericError(f"singular elimination at row {i}")
        cp[i] = upper[i] / denom if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _residual(lower, diag, upper, rhs, x) -> float:
    r = diag * x - rhs
    r[1:] += lower[1:] * x[:-1]
    r[:-1] += upper[:-1] * x[1:]
    return float(np.max(np.abs(r)))


def _check_residual(lower, diag, upper, rhs, x, kind: str) -> float:
    res = _residual(lower, diag, upper, rhs, x)
    scale = max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(rhs))))
    if res > RESIDUAL_TOL * scale:
        raise NumericError(f"{kind} solve residual {res} exceeds tolerance")
    return res


def solve_hitting_transform(chain: ChainSpec, waiting: WaitingSpec, n: int,
                            lam: float | None = None) -> SolveResult:
    """Transforms of the first-hitting time of state n from each start below.

    Returns values for states 0..n (the boundary value at n is exactly 1);
    interior values are strictly positive and at most 1, up to underflow for
    strongly left-drifting chains at large n.
    """
    if n < 1:
        raise ValidationError("boundary state must be >= 1")
    lam = waiting.lam if lam is None else lam
    p = chain.p_array(n)
    q = 1.0 - p
    phi_plus = waiting.plus.laplace_array(n, lam)
    phi_minus = waiting.minus.laplace_array(n, lam)
    diag = np.ones(n)
    upper = np.zeros(n)
    lower = np.zeros(n)
    upper[: n - 1] = -(p * phi_plus)[: n - 1]
    lower[1:] = -(q * phi_minus)[1:]
    rhs = np.zeros(n)
    rhs[n - 1] = p[n - 1] * phi_plus[n - 1]
    x = _thomas(lower, diag, upper, rhs)
    res = _check_residual(lower, diag, upper, rhs, x, "hitting transform")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise InvariantViolation("hitting transforms must lie in [0, 1]")
    return SolveResult(np.concatenate([x, [1.0]]), res, "hitting_transform")


def solve_two_sided(chain: ChainSpec, waiting: WaitingSpec, l: int, r: int,
                    lam: float | None = None) -> SolveResult:
    """Complement transforms of the two-sided exit time of (l, r).

    Value at state i is 1 - E_i exp(-lam * (exit time)); both boundary values
    are exactly 0 and interior values lie in [0, 1).
    """
    if not 0 <= l < r - 1:
        raise ValidationError("need 0 <= l < r - 1 for an interior state")
    lam = waiting.lam if lam is None else lam
    m = r - l - 1
    idx = np.arange(l + 1, r)
    p = chain.p_array(r)[idx]
    q = 1.0 - p
    phi_plus = waiting.plus.laplace_array(r, lam)[idx]
    phi_minus = waiting.minus.laplace_array(r, lam)[idx]
    deficits = waiting.deficit_array(chain, r, lam)[idx]
    diag = np.ones(m)
    upper = np.zeros(m)
    lower = np.zeros(m)
    upper[: m - 1] = -(p * phi_plus)[: m - 1]
    lower[1:] = -(q * phi_minus)[1:]
    rhs = deficits.copy()
    x = _thomas(lower, diag, upper, rhs)
    res = _check_residual(lower, diag, upper, rhs, x, "two-sided transform")
    if np.any(x < 0.0) or np.any(x >= 1.0):
        raise InvariantViolation("interior exit-transform complements must lie in [0, 1)")
    return SolveResult(np.concatenate([[0.0], x, [0.0]]), res, "two_sided", offset=l)


def solve_profit(chain: ChainSpec, site_profits, n: int) -> SolveResult:
    """Expected total profit collected before reaching state n.

    ``site_profits`` gives the non-negative per-visit profit at states
    0..n-1 (a value for state n is accepted and ignored).
    """
    if n < 1:
        raise ValidationError("boundary state must be >= 1")
    a = np.asarray(site_profits, dtype=float)
    if len(a) not in (n, n + 1):
        raise ValidationError(f"need {n} or {n + 1} per-state profits, got {len(a)}")
    if np.any(a < 0.0) or np.any(~np.isfinite(a)):
        raise ValidationError("per-state profits must be non-negative and finite")
    a = a[:n]
    p = chain.p_array(n)
    q = 1.0 - p
    diag = np.ones(n)
    upper = np.zeros(n)
    lower = np.zeros(n)
    upper[: n - 1] = -p[: n - 1]
    lower[1:] = -q[1:]
    rhs = a.copy()
    x = _thomas(lower, diag, upper, rhs)
    res = _check_residual(lower, diag, upper, rhs, x, "profit")
    if np.any(x < -1e-12):
        raise InvariantViolation("profits must be non-negative")
    return SolveResult(np.concatenate([np.maximum(x, 0.0), [0.0]]), res, "profit")


def solve_interval_profit(chain: ChainSpec, site_profits, l: int, r: int) -> SolveResult:
    """Expected profit collected strictly inside (l, r) before exiting it."""
    if not 0 <= l < r - 1:
        raise ValidationError("need 0 <= l < r - 1 for an interior state")
    m = r - l - 1
    a = np.asarray(site_profits, dtype=float)
    if len(a) != m:
        raise ValidationError(f"need {m} interior profits, got {len(a)}")
    if np.any(a < 0.0):
        raise ValidationError("per-state profits must be non-negative")
    idx = np.arange(l + 1, r)
    p = chain.p_array(r)[idx]
    q = 1.0 - p
    diag = np.ones(m)
    upper = np.zeros(m)
    lower = np.zeros(m)
    upper[: m - 1] = -p[: m - 1]
    lower[1:] = -q[1:]
    rhs = a.copy()
    x = _thomas(lower, diag, upper, rhs)
    res = _check_residual(lower, diag, upper, rhs, x, "interval profit")
    return SolveResult(np.concatenate([[0.0], x, [0.0]]), res, "interval_profit", offset=l)


def profit_closed_form(chain: ChainSpec, site_profits, j: int, n: int) -> float:
    """Telescoped closed-form solution of the profit system at state j.

    Accumulates, in log space, the scale-weighted inner sums
    sum_{i<=k} A_i / (increment_i * p_i) against the increments, then sums
    the k-terms from j to n-1 exactly.  Independent of the elimination path.
    """
    if not 0 <= j <= n:
        raise ValidationError("need 0 <= j <= n")
    a = np.asarray(site_profits, dtype=float)[:n]
    if np.any(a < 0.0):
        raise ValidationError("per-state profits must be non-negative")
    if j == n:
        return 0.0
    logs = chain.scale.log_increments(n)
    p = chain.p_array(n)
    with np.errstate(divide="ignore"):
        inner = np.log(a) - logs - np.log(p)
    running = np.logaddexp.accumulate(inner)
    with np.errstate(over="ignore"):
        w = np.exp(logs + running)
    return math.fsum(w[j:n])


@dataclass(frozen=True)
class ComparisonBounds:
    complement: np.ndarray  # 1 - hitting transform
    upper: np.ndarray  # profit solve with the transform deficits
    lower: np.ndarray  # upper scaled by the smallest transform value
    scale_constant: float


def comparison_bounds(chain: ChainSpec, waiting: WaitingSpec, n: int,
                      lam: float | None = None,
                      scale_constant: float | None = None) -> ComparisonBounds:
    """Sandwich lower <= complement <= upper for the hitting-transform complement.

    The upper profit uses per-visit profits equal to the transform deficits;
    the lower bound multiplies it by the smallest solved transform value
    (a finite-horizon surrogate for the unknown infinite-horizon constant).
    Violations beyond 1e-12 raise InvariantViolation.
    """
    lam = waiting.lam if lam is None else lam
    transform = solve_hitting_transform(chain, waiting, n, lam)
    complement = 1.0 - transform.values
    deficits = waiting.deficit_array(chain, n, lam)
    upper = solve_profit(chain, deficits, n).values
    c = float(transform.values.min()) if scale_constant is None else scale_constant
    if not 0.0 <= c <= 1.0:
        raise ValidationError("scale constant must lie in [0, 1]")
    lower = c * upper
    if np.any(complement > upper + 1e-12):
        raise InvariantViolation("profit upper bound violated")
    if np.any(lower > complement + 1e-12):
        raise InvariantViolation("scaled lower bound violated")
    return ComparisonBounds(complement, upper, lower, c)


# ---------------------------------------------------------------------------
# descent-tail profits (implosion side)


@dataclass(frozen=True)
class DescentProfit:
    """Per-state contributions to the implosion tail seen from a base state.

    ``site_profit[k]`` is the expected profit collected at state
    ``start + 1 + k`` during a descent from far above down to ``start``;
    ``partial[k]`` accumulates them and increases to the implosion tail
    value.
    """

    start: int
    site_profit: np.ndarray
    partial: np.ndarray


def descent_tail_profit(chain: ChainSpec, waiting: WaitingSpec, start: int,
                        horizon: int, lam: float | None = None,
                        verify_window: int | None = None) -> DescentProfit:
    """Site profits and partial sums of the implosion tail above ``start``.

    Requires a recurrent chain (descent from far above must be possible);
    an undetermined recurrence only warns.  With ``verify_window`` = r, the
    interval profit system on (start, r) is solved and checked against the
    exit-probability-weighted site profits at the window midpoint.
    """
    if start < 0 or horizon <= start + 1:
        raise ValidationError("need horizon > start + 1 >= 1")
    rec = recurrence_class(chain)
    if rec.status is ChainClass.TRANSIENT:
        raise NotApplicableError(
            "descent profits need a recurrent chain; this one escapes to infinity"
        )
    if rec.status is ChainClass.UNDETERMINED:
        warnings.warn("recurrence undetermined: descent profits are diagnostic only",
                      stacklevel=2)
    lam = waiting.lam if lam is None else lam
    table = chain.scale
    logs = table.log_increments(horizon)
    deficits = waiting.deficit_array(chain, horizon, lam)
    q = chain.q_array(horizon)
    idx = np.arange(start + 1, horizon)
    # scale sums from `start` up to j-1, accumulated in log space
    shifted = np.logaddexp.accumulate(logs[start:horizon])
    scale_sums = shifted[idx - 1 - start]
    with np.errstate(over="ignore"):
        site = np.exp(np.log(deficits[idx]) - np.log(q[idx]) - logs[idx - 1] + scale_sums)
    partial = np.cumsum(site)
    result = DescentProfit(start, site, partial)
    if verify_window is not None:
        _verify_descent_window(chain, waiting, result, verify_window, lam)
    return result


def interval_profit_estimate(chain: ChainSpec, waiting: WaitingSpec, start: int,
                             at: int, horizon: int, lam: float | None = None) -> float:
    """Exit-probability-weighted site profits: the one-sided interval profit.

    Expected profit collected above ``start`` before descending to it when
    starting from ``at``, truncated at ``horizon``.
    """
    profit = descent_tail_profit(chain, waiting, start, horizon, lam)
    table = chain.scale
    j = np.arange(start + 1, horizon)
    weights = np.ones(len(j))
    above = j > at
    if np.any(above):
        log_num = table.log_scale_diff(start, at)
        log_den = np.array([table.log_scale_diff(start, jj) for jj in j[above]])
        weights[above] = np.exp(log_num - log_den)
    return float(np.sum(profit.site_profit * weights))


def _verify_descent_window(chain, waiting, profit: DescentProfit, window: int,
                           lam: float) -> None:
    if window <= profit.start + 2:
        raise ValidationError("verification window must extend past start + 2")
    horizon = profit.start + 1 + len(profit.site_profit)
    mid = (profit.start + window) // 2
    deficits = waiting.deficit_array(chain, window, lam)
    solved = solve_interval_profit(
        chain, deficits[profit.start + 1 : window], profit.start, window
    )
    estimate = interval_profit_estimate(chain, waiting, profit.start, mid, horizon, lam)
    got = solved.value_at(mid)
    if not math.isclose(got, estimate, rel_tol=1e-6, abs_tol=1e-12):
        raise InvariantViolation(
            f"windowed interval profit {got} disagrees with weighted site profits "
            f"{estimate} at state {mid}"
        )
