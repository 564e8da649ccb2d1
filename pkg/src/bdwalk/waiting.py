"""Per-state waiting-time distributions: exact transforms and samplers.

Each model kind pairs an exact Laplace-transform evaluator with a sampler
driven by uniform variates, so that the scalar and the vectorised simulation
engines consume random streams identically:

* exponential with a per-state rate rule (1 uniform per draw),
* a fixed base distribution with finite mean, scaled per state (1 uniform,
  through the base's inverse CDF),
* regularly-varying tails with exponent in (0, 1), sampled through a
  user-supplied inverse tail or by rejection from a declared Pareto envelope,
* one-sided stable laws with transform exp(-c (lambda/a_i)^alpha), sampled by
  the exponential/uniform (Kanter) construction, and
* deterministic values (no randomness).

Waiting times are supported on (0, inf); transforms lie strictly in (0, 1)
for positive arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import NumericError, SamplingError, ValidationError
from .expr import compile_expression

QUAD_TOL = 1e-10
_TINY = 2.0**-53
_REJECTION_CAP = 10**6


# ---------------------------------------------------------------------------
# per-state parameter rules


class StateRule:
    """Positive per-state parameter a_i with optional declared monomial form.

    A declared monomial ``coeff * (i+1)**beta`` unlocks exact closed-form
    series verdicts downstream; undeclared rules fall back to the numeric
    policy.  Values are validated lazily and cached as a growable array.
    """

    def __init__(self, fn: Callable, *, monomial: tuple[float, float] | None = None,
                 source: str | None = None):
        self._fn = fn
        self.monomial = monomial  # (coeff, beta) for coeff * (i+1)**beta
        self.source = source
        self._cache = np.empty(0)

    @classmethod
    def constant(cls, value: float) -> "StateRule":
        value = float(value)
        return cls(lambda i: np.full(np.shape(i), value) if np.ndim(i) else value,
                   monomial=(value, 0.0), source=repr(value))

    @classmethod
    def power(cls, beta: float, coeff: float = 1.0) -> "StateRule":
        """Declared monomial rule coeff * (i+1)**beta."""
        beta, coeff = float(beta), float(coeff)
        if coeff <= 0:
            raise ValidationError("monomial coefficient must be positive")

        def fn(i):
            x = np.asarray(i, dtype=float)
            out = coeff * (x + 1.0) ** beta
            return out if np.ndim(i) else float(out)

        return cls(fn, monomial=(coeff, beta), source=f"{coeff}*(i+1)**{beta}")

    @classmethod
    def from_expression(cls, source: str) -> "StateRule":
        raw = compile_expression(source, "i")

        def fn(i):
            x = np.asarray(i, dtype=float)
            out = np.broadcast_to(np.asarray(raw(x), dtype=float), x.shape)
            return out if np.ndim(i) else float(out)

        return cls(fn, source=source)

    @classmethod
    def from_callable(cls, fn: Callable) -> "StateRule":
        def wrapped(i):
            if np.ndim(i):
                return np.array([float(fn(int(j))) for j in np.asarray(i).ravel()])
            return float(fn(int(i)))

        return cls(wrapped)

    def values(self, n: int) -> np.ndarray:
        """Validated values for states 0..n-1 (cached)."""
        if n > len(self._cache):
            idx = np.arange(len(self._cache), n)
            block = np.asarray(self._fn(idx), dtype=float)
            if np.any(~(block > 0.0)) or np.any(~np.isfinite(block)):
                bad = int(idx[~((block > 0.0) & np.isfinite(block))][0])
                raise ValidationError(f"rule value at state {bad} is not a positive finite number")
            self._cache = np.concatenate([self._cache, block])
        return self._cache[:n]

    def __call__(self, i: int) -> float:
        return float(self.values(i + 1)[i])


# ---------------------------------------------------------------------------
# base distributions for the scaled-family kind


class GammaBase:
    """Gamma(shape, scale) base: closed-form transform and inverse CDF."""

    def __init__(self, shape: float, scale: float = 1.0):
        if shape <= 0 or scale <= 0:
            raise ValidationError("gamma base needs positive shape and scale")
        self.shape = float(shape)
        self.scale = float(scale)
        self.mean = self.shape * self.scale

    def laplace(self, lam: float) -> float:
        return (1.0 + self.scale * lam) ** (-self.shape)

    def deficit(self, lam):
        return -np.expm1(-self.shape * np.log1p(self.scale * lam))

    def ppf(self, u):
        from scipy.special import gammaincinv

        return gammaincinv(self.shape, u) * self.scale


class CustomBase:
    """User base distribution given by a density and optional extras.

    Without a closed-form ``laplace``, transforms are computed by adaptive
    quadrature on (0, inf) with the substitution t = x/(1+x) and absolute
    tolerance 1e-10.  Sampling needs ``ppf`` (for the uniform-slot path) or
    ``sampler`` (generator-based, scalar engine only).
    """

    def __init__(self, mean: float, density: Callable | None = None,
                 laplace: Callable | None = None, ppf: Callable | None = None,
                 sampler: Callable | None = None):
        if mean <= 0 or not math.isfinite(mean):
            raise ValidationError("base mean must be positive and finite")
        self.mean = float(mean)
        self.density = density
        self._laplace = laplace
        self._ppf = ppf
        self.sampler = sampler

    def laplace(self, lam: float) -> float:
        if self._laplace is not None:
            return float(self._laplace(lam))
        if self.density is None:
            raise ValidationError("custom base needs a density or a closed transform")
        return _quad_laplace_density(self.density, lam)

    @property
    def ppf(self):
        return self._ppf


def _quad_laplace_density(density: Callable, lam: float) -> float:
    def integrand(t):
        x = t / (1.0 - t)
        return math.exp(-lam * x) * float(density(x)) / (1.0 - t) ** 2

    value, err = integrate.quad(integrand, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL,
                                limit=200)
    if err > 100 * QUAD_TOL:
        raise NumericError(
            f"transform quadrature did not reach tolerance: estimate {value}, error {err}"
        )
    return value


def _quad_tail_deficit(tail: Callable, lam: float) -> float:
    """1 - E exp(-lam X) = lam * integral of exp(-lam x) P(X > x)."""

    def integrand(t):
        x = t / (1.0 - t)
        return math.exp(-lam * x) * min(1.0, tail(x)) / (1.0 - t) ** 2

    value, err = integrate.quad(integrand, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL,
                                limit=200)
    if err > 100 * QUAD_TOL:
        raise NumericError(
            f"tail quadrature did not reach tolerance: estimate {value}, error {err}"
        )
    return lam * value


def _quad_laplace_tail(tail: Callable, lam: float) -> float:
    return 1.0 - _quad_tail_deficit(tail, lam)


# ---------------------------------------------------------------------------
# distribution models


class DistModel:
    """Common surface of all waiting-time models."""

    kind: str = "?"
    slots: int = 1  # uniforms consumed per draw (uniform-slot path)
    rejective: bool = False

    def laplace_array(self, n: int, lam: float) -> np.ndarray:
        raise NotImplementedError

    def laplace(self, i: int, lam: float) -> float:
        if i < 0:
            raise ValidationError("state index must be >= 0")
        _check_lambda(lam)
        return float(self.laplace_array(i + 1, lam)[i])

    def deficit_array(self, n: int, lam: float) -> np.ndarray:
        """1 - transform, in a cancellation-free form where the kind allows."""
        return 1.0 - self.laplace_array(n, lam)

    @property
    def supports_uniforms(self) -> bool:
        return True

    def tau_from_uniforms(self, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (m, slots) to waiting times at ``states``."""
        raise NotImplementedError

    def sample(self, i: int, rng) -> float:
        """One draw at state ``i`` from a random stream (or numpy Generator)."""
        from .streams import as_stream

        stream = as_stream(rng)
        state = np.array([i])
        if self.rejective:
            for _ in range(_REJECTION_CAP):
                u = stream.next_uniforms(self.slots).reshape(1, self.slots)
                tau, ok = self._round_from_uniforms(state, u)
                if ok[0]:
                    return float(tau[0])
            raise SamplingError(f"rejection sampling exceeded {_REJECTION_CAP} attempts")
        u = stream.next_uniforms(self.slots).reshape(1, self.slots)
        return float(self.tau_from_uniforms(state, u)[0])

    def declared_exponent(self) -> tuple[float, bool] | None:
        """(decay exponent of the transform deficit, boundary_exact) if declared.

        The deficit 1 - E exp(-lam tau_i) behaves like (i+1)**(-s); the flag
        says whether p-series boundary cases are decidable for this kind.
        """
        return None


def _check_lambda(lam: float) -> None:
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValidationError(f"transform argument must be positive and finite, got {lam}")


@dataclass
class ExponentialWait(DistModel):
    rate: StateRule

    kind = "exponential"
    slots = 1

    def laplace_array(self, n, lam):
        _check_lambda(lam)
        a = self.rate.values(n)
        return a / (lam + a)

    def deficit_array(self, n, lam):
        _check_lambda(lam)
        a = self.rate.values(n)
        return lam / (lam + a)

    def tau_from_uniforms(self, states, u):
        a = self.rate.values(int(states.max()) + 1)[states]
        return -np.log1p(-u[:, 0]) / a

    def declared_exponent(self):
        if self.rate.monomial is None:
            return None
        return self.rate.monomial[1], True


@dataclass
class ScaledWait(DistModel):
    """Base waiting time with finite mean, divided by the per-state scale."""

    base: GammaBase | CustomBase
    scale: StateRule

    kind = "scaled"
    slots = 1

    def laplace_array(self, n, lam):
        _check_lambda(lam)
        a = self.scale.values(n)
        try:
            out = np.asarray(self.base.laplace(lam / a), dtype=float)
            if out.shape == a.shape:
                return out
        except (TypeError, ValueError):
            pass  # base transform is scalar-only (e.g. quadrature)
        return np.array([self.base.laplace(lam / ai) for ai in a])

    def deficit_array(self, n, lam):
        _check_lambda(lam)
        if hasattr(self.base, "deficit"):
            a = self.scale.values(n)
            return np.asarray(self.base.deficit(lam / a), dtype=float)
        return 1.0 - self.laplace_array(n, lam)

    @property
    def supports_uniforms(self):
        return self.base.ppf is not None

    def tau_from_uniforms(self, states, u):
        if self.base.ppf is None:
            raise ValidationError("base distribution has no inverse CDF")
        a = self.scale.values(int(states.max()) + 1)[states]
        return np.asarray(self.base.ppf(u[:, 0]), dtype=float) / a

    def sample(self, i, rng):
        if self.base.ppf is None:
            if getattr(self.base, "sampler", None) is None:
                raise ValidationError("base distribution has no inverse CDF or sampler")
            from .streams import as_stream

            return float(self.base.sampler(as_stream(rng))) / self.scale(i)
        return super().sample(i, rng)

    def declared_exponent(self):
        if self.scale.monomial is None:
            return None
        return self.scale.monomial[1], True


@dataclass
class StableWait(DistModel):
    """One-sided stable waiting times: E exp(-lam tau_i) = exp(-c (lam/a_i)^alpha)."""

    alpha: float
    c: float
    scale: StateRule

    kind = "stable"
    slots = 2

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"stable exponent must lie in (0, 1), got {self.alpha}")
        if self.c <= 0:
            raise ValidationError("stable constant must be positive")

    def laplace_array(self, n, lam):
        _check_lambda(lam)
        a = self.scale.values(n)
        return np.exp(-self.c * (lam / a) ** self.alpha)

    def deficit_array(self, n, lam):
        _check_lambda(lam)
        a = self.scale.values(n)
        return -np.expm1(-self.c * (lam / a) ** self.alpha)

    def tau_from_uniforms(self, states, u):
        # Kanter construction for the unit law with transform exp(-lam^alpha)
        alpha = self.alpha
        v = math.pi * np.clip(u[:, 0], _TINY, 1.0 - _TINY)
        e = -np.log1p(-np.clip(u[:, 1], 0.0, 1.0 - _TINY))
        e = np.maximum(e, _TINY)
        x = (np.sin(alpha * v) / np.sin(v) ** (1.0 / alpha)
             * (np.sin((1.0 - alpha) * v) / e) ** ((1.0 - alpha) / alpha))
        a = self.scale.values(int(states.max()) + 1)[states]
        return self.c ** (1.0 / alpha) * x / a

    def declared_exponent(self):
        if self.scale.monomial is None:
            return None
        return self.alpha * self.scale.monomial[1], True


@dataclass
class RegVarWait(DistModel):
    """Waiting times whose tail varies regularly with exponent -alpha.

    The law is defined through its tail P(X > x) = min(1, x**-alpha * sv(x))
    scaled per state; the transform is evaluated by quadrature against that
    tail.  Sampling uses ``inverse_tail`` (tail level -> quantile) when given,
    a pure Pareto inverse when ``sv`` is absent, or rejection from a declared
    Pareto envelope (density, envelope constant, support start).
    """

    alpha: float
    scale: StateRule
    sv: Callable | None = None
    inverse_tail: Callable | None = None
    density: Callable | None = None
    envelope_c: float | None = None
    envelope_xm: float = 1.0

    kind = "regvar"

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"tail exponent must lie in (0, 1), got {self.alpha}")
        if self.inverse_tail is None and self.sv is None and self.density is None:
            # pure Pareto tail on [1, inf)
            self.inverse_tail = lambda u: u ** (-1.0 / self.alpha)
        if self.density is not None and (self.envelope_c is None or self.envelope_c <= 0):
            raise ValidationError("envelope rejection needs a positive envelope constant")

    @property
    def slots(self):  # type: ignore[override]
        return 2 if self._uses_rejection else 1

    @property
    def rejective(self):  # type: ignore[override]
        return self._uses_rejection

    @property
    def _uses_rejection(self) -> bool:
        return self.inverse_tail is None and self.density is not None

    def _tail(self, x: float) -> float:
        sv = self.sv(x) if self.sv is not None else 1.0
        return min(1.0, x ** (-self.alpha) * sv) if x > 0 else 1.0

    def laplace_array(self, n, lam):
        _check_lambda(lam)
        a = self.scale.values(n)
        # tau = X / a_i, so E exp(-lam tau) is the base transform at lam / a_i
        return np.array([_quad_laplace_tail(self._tail, lam / ai) for ai in a])

    def deficit_array(self, n, lam):
        # the tail integral gives the deficit directly, without cancellation
        _check_lambda(lam)
        a = self.scale.values(n)
        return np.array([_quad_tail_deficit(self._tail, lam / ai) for ai in a])

    @property
    def supports_uniforms(self):
        return True

    def tau_from_uniforms(self, states, u):
        if self._uses_rejection:
            raise ValidationError("rejection-based model draws in rounds, not fixed slots")
        a = self.scale.values(int(states.max()) + 1)[states]
        levels = np.clip(u[:, 0], _TINY, 1.0)
        x = np.asarray(self.inverse_tail(levels), dtype=float)
        return x / a

    def _round_from_uniforms(self, states, u):
        """One rejection round: proposal from the Pareto envelope, then accept."""
        alpha, xm, c_env = self.alpha, self.envelope_xm, self.envelope_c
        y = xm * (1.0 - np.clip(u[:, 0], 0.0, 1.0 - _TINY)) ** (-1.0 / alpha)
        g = alpha * xm**alpha * y ** (-alpha - 1.0)
        f = np.asarray([self.density(v) for v in y], dtype=float)
        accept = u[:, 1] * c_env * g <= f
        a = self.scale.values(int(states.max()) + 1)[states]
        return y / a, accept

    def declared_exponent(self):
        if self.scale.monomial is None:
            return None
        # a slowly-varying factor can flip boundary cases either way
        return self.alpha * self.scale.monomial[1], self.sv is None


@dataclass
class DeterministicWait(DistModel):
    value: StateRule

    kind = "deterministic"
    slots = 0

    def laplace_array(self, n, lam):
        _check_lambda(lam)
        return np.exp(-lam * self.value.values(n))

    def deficit_array(self, n, lam):
        _check_lambda(lam)
        return -np.expm1(-lam * self.value.values(n))

    def tau_from_uniforms(self, states, u):
        return self.value.values(int(states.max()) + 1)[states]

    def declared_exponent(self):
        if self.value.monomial is None:
            return None
        # deficit 1 - exp(-lam v_i) ~ lam v_i needs the values to shrink
        return -self.value.monomial[1], True


# ---------------------------------------------------------------------------
# the two-sided waiting specification


@dataclass(frozen=True)
class JumpTransform:
    """Transforms of one state's waiting times at a fixed argument."""

    plus: float
    minus: float
    mixed: float  # p * plus + q * minus
    deficit: float  # 1 - mixed

    def validate(self) -> None:
        for name, value in (("plus", self.plus), ("minus", self.minus)):
            if not (0.0 < value < 1.0):
                raise ValidationError(f"transform {name}={value} outside (0, 1)")


class WaitingSpec:
    """Right/left waiting-time models plus the default transform argument."""

    def __init__(self, plus: DistModel, minus: DistModel | None = None,
                 lam: float = 1.0):
        _check_lambda(lam)
        self.plus = plus
        self.minus = minus if minus is not None else plus
        self.lam = float(lam)
        self._deficit_cache: dict[float, np.ndarray] = {}

    def transform(self, chain, i: int, lam: float | None = None) -> JumpTransform:
        """Mixed transform at state ``i``: state 0 uses only the right model."""
        lam = self.lam if lam is None else lam
        plus = self.plus.laplace(i, lam)
        minus = self.minus.laplace(i, lam)
        p = chain.p(i)
        deficit = float(p * self.plus.deficit_array(i + 1, lam)[i]
                        + (1.0 - p) * self.minus.deficit_array(i + 1, lam)[i])
        return JumpTransform(plus, minus, p * plus + (1.0 - p) * minus, deficit)

    def deficit_array(self, chain, n: int, lam: float | None = None) -> np.ndarray:
        """1 - E exp(-lam tau_i) for i = 0..n-1, cached per argument.

        Mixes the per-side deficits, which keeps precision when transforms
        are within an ulp of 1.
        """
        lam = self.lam if lam is None else lam
        cached = self._deficit_cache.get(lam)
        if cached is None or len(cached) < n:
            p = chain.p_array(n)
            plus = self.plus.deficit_array(n, lam)
            minus = self.minus.deficit_array(n, lam)
            cached = p * plus + (1.0 - p) * minus
            self._deficit_cache[lam] = cached
        return cached[:n]

    def declared_exponents(self) -> tuple[float, bool] | None:
        """Combined deficit decay exponent when both sides declare one."""
        d_plus = self.plus.declared_exponent()
        d_minus = self.minus.declared_exponent()
        if d_plus is None or d_minus is None:
            return None
        s = min(d_plus[0], d_minus[0])
        # boundary decidability is governed by every side at the binding exponent
        exact = all(exp > s or ok for exp, ok in (d_plus, d_minus))
        return s, exact
