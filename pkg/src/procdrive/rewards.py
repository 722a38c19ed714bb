"""Process-oriented reward shaping for continuous-control driving tasks.

A reward is assembled from per-feature evaluation functions, each mapping a
scalar feature (speed, lane offset, commanded acceleration, collision risk)
into (0, 1]. The per-step reward is the product of all evaluations, so a bad
score on any single feature drags the whole step down. At episode-ending
steps the product is additionally divided by (1 - gamma), which makes the
value of finishing match the value of collecting the per-step reward forever
and keeps the greedy policy from loitering near the goal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Mapping, Union

# Evaluations are clamped below by this so products stay strictly positive
# even when exp() underflows to 0.0. Configurable via eval_value(floor=...).
VALUE_FLOOR = 1e-30


class TerminalKind(Enum):
    NON_TERMINAL = "non_terminal"
    GOAL = "goal"
    FAILURE = "failure"


class ConfigError(ValueError):
    """Raised for malformed reward/scenario configuration."""


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def _require_positive(name: str, value: float) -> float:
    value = _require_finite(name, value)
    if value <= 0.0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class Target:
    """Bell around a single target value: exp(-(f - o)^2 / alpha)."""

    o: float
    alpha: float

    FORM = "target"

    def __post_init__(self):
        _require_finite("o", self.o)
        _require_positive("alpha", self.alpha)

    def value(self, f: float) -> float:
        d = f - self.o
        return math.exp(-(d * d) / self.alpha)

    def boundaries(self) -> tuple[float, ...]:
        return (self.o,)


@dataclass(frozen=True)
class AsymTarget:
    """Bell with different widths below and above the target.

    exp(-(f - o)^2 / alpha_lo) for f < o, exp(-(f - o)^2 / alpha_hi) for
    f >= o. Useful when overshooting is worse than undershooting.
    """

    o: float
    alpha_lo: float
    alpha_hi: float

    FORM = "asym_target"

    def __post_init__(self):
        _require_finite("o", self.o)
        _require_positive("alpha_lo", self.alpha_lo)
        _require_positive("alpha_hi", self.alpha_hi)

    def value(self, f: float) -> float:
        d = f - self.o
        alpha = self.alpha_lo if f < self.o else self.alpha_hi
        return math.exp(-(d * d) / alpha)

    def boundaries(self) -> tuple[float, ...]:
        return (self.o,)


@dataclass(frozen=True)
class LowerThreshold:
    """1 above tau, falling bell below it: penalises only small values."""

    tau: float
    alpha: float

    FORM = "lower_threshold"

    def __post_init__(self):
        _require_finite("tau", self.tau)
        _require_positive("alpha", self.alpha)

    def value(self, f: float) -> float:
        if f >= self.tau:
            return 1.0
        d = f - self.tau
        return math.exp(-(d * d) / self.alpha)

    def boundaries(self) -> tuple[float, ...]:
        return (self.tau,)


@dataclass(frozen=True)
class UpperThreshold:
    """1 below tau, falling bell above it: penalises only large values."""

    tau: float
    alpha: float

    FORM = "upper_threshold"

    def __post_init__(self):
        _require_finite("tau", self.tau)
        _require_positive("alpha", self.alpha)

    def value(self, f: float) -> float:
        if f < self.tau:
            return 1.0
        d = f - self.tau
        return math.exp(-(d * d) / self.alpha)

    def boundaries(self) -> tuple[float, ...]:
        return (self.tau,)


@dataclass(frozen=True)
class Band:
    """1 on [tau_lo, tau_hi], falling bells outside the band."""

    tau_lo: float
    tau_hi: float
    alpha_lo: float
    alpha_hi: float

    FORM = "band"

    def __post_init__(self):
        _require_finite("tau_lo", self.tau_lo)
        _require_finite("tau_hi", self.tau_hi)
        _require_positive("alpha_lo", self.alpha_lo)
        _require_positive("alpha_hi", self.alpha_hi)
        if self.tau_lo > self.tau_hi:
            raise ValueError(
                f"tau_lo must be <= tau_hi, got {self.tau_lo!r} > {self.tau_hi!r}"
            )

    def value(self, f: float) -> float:
        if f < self.tau_lo:
            d = f - self.tau_lo
            return math.exp(-(d * d) / self.alpha_lo)
        if f < self.tau_hi:
            return 1.0
        d = f - self.tau_hi
        return math.exp(-(d * d) / self.alpha_hi)

    def boundaries(self) -> tuple[float, ...]:
        return (self.tau_lo, self.tau_hi)


@dataclass(frozen=True)
class TwoTarget:
    """Two preferred values o1 (score 1) and o2 (score k1), with a plateau k2
    between them.

    Four branches, switching at o1, the midpoint m = (o1 + o2)/2, and o2:

        f <  o1:        exp(-(f - o1)^2 / alpha1)
        o1 <= f < m:    (1 - k2) * exp(-(f - o1)^2 / alpha2) + k2
        m  <= f < o2:   (k1 - k2) * exp(-(f - o2)^2 / alpha3) + k2
        f >= o2:        k1 * exp(-(f - o2)^2 / alpha4)

    The two inner bells are meant to have decayed to ~0 at the midpoint; the
    form is exactly continuous at o1 and o2 but only approximately (to within
    the decayed tails) at m.
    """

    o1: float
    o2: float
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    k1: float
    k2: float

    FORM = "two_target"

    def __post_init__(self):
        _require_finite("o1", self.o1)
        _require_finite("o2", self.o2)
        for name in ("alpha1", "alpha2", "alpha3", "alpha4"):
            _require_positive(name, getattr(self, name))
        _require_finite("k1", self.k1)
        _require_finite("k2", self.k2)
        if self.o1 >= self.o2:
            raise ValueError(f"o1 must be < o2, got {self.o1!r} >= {self.o2!r}")
        if not (0.0 <= self.k2 <= self.k1 <= 1.0):
            raise ValueError(
                f"need 0 <= k2 <= k1 <= 1, got k1={self.k1!r} k2={self.k2!r}"
            )
        if self.k1 == 0.0:
            raise ValueError("k1 must be > 0 so values stay positive past o2")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.o1 + self.o2)

    def value(self, f: float) -> float:
        if f < self.o1:
            d = f - self.o1
            return math.exp(-(d * d) / self.alpha1)
        if f < self.midpoint:
            d = f - self.o1
            return (1.0 - self.k2) * math.exp(-(d * d) / self.alpha2) + self.k2
        if f < self.o2:
            d = f - self.o2
            return (self.k1 - self.k2) * math.exp(-(d * d) / self.alpha3) + self.k2
        d = f - self.o2
        return self.k1 * math.exp(-(d * d) / self.alpha4)

    def boundaries(self) -> tuple[float, ...]:
        return (self.o1, self.midpoint, self.o2)


EvalFunction = Union[Target, AsymTarget, LowerThreshold, UpperThreshold, Band, TwoTarget]

EVAL_FORMS: dict[str, type] = {
    cls.FORM: cls
    for cls in (Target, AsymTarget, LowerThreshold, UpperThreshold, Band, TwoTarget)
}


def eval_value(spec: EvalFunction, f: float, floor: float = VALUE_FLOOR) -> float:
    """Evaluate one function at feature value f, clamped into (0, 1].

    Args:
        spec: one of the six evaluation-function dataclasses.
        f: scalar feature value; must be finite.
        floor: lower clamp applied so underflowed exp() never returns 0.

    Returns:
        Value in [floor, 1].
    """
    f = _require_finite("feature value", f)
    v = spec.value(f)
    return v if v > floor else floor


@dataclass(frozen=True)
class RewardTerm:
    feature: str
    fn: EvalFunction

    def __post_init__(self):
        if not self.feature:
            raise ConfigError("reward term needs a non-empty feature id")


@dataclass(frozen=True)
class RewardSpec:
    """An ordered product of per-feature evaluation terms plus the discount."""

    terms: tuple[RewardTerm, ...]
    gamma: float

    def __post_init__(self):
        if not self.terms:
            raise ConfigError("reward spec needs at least one term")
        seen = set()
        for term in self.terms:
            if term.feature in seen:
                raise ConfigError(f"duplicate reward term for feature {term.feature!r}")
            seen.add(term.feature)
        g = _require_finite("gamma", self.gamma)
        if not (0.0 < g < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {g!r}")

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(t.feature for t in self.terms)


def temp_reward(spec: RewardSpec, features: Mapping[str, float],
                floor: float = VALUE_FLOOR) -> float:
    """Product of all evaluation terms at the given feature values.

    Args:
        spec: the reward specification.
        features: map feature id -> scalar value; must cover every term.

    Returns:
        Per-step reward in (0, 1].

    Raises:
        ConfigError: a term's feature id is missing from the map.
        ValueError: a supplied feature value is non-finite.
    """
    r = 1.0
    for term in spec.terms:
        try:
            f = features[term.feature]
        except KeyError:
            raise ConfigError(
                f"feature {term.feature!r} missing from feature map "
                f"(have {sorted(features)})"
            ) from None
        r *= eval_value(term.fn, f, floor)
    return r if r > floor else floor


def shape_reward(r_tmp: float, kind: TerminalKind, gamma: float) -> float:
    """Scale the per-step reward at episode-ending transitions.

    Non-terminal steps pass r_tmp through. Goal and failure terminals return
    r_tmp / (1 - gamma): the one-shot equivalent of receiving r_tmp on every
    future step, which stops "hover next to the goal forever" from beating
    "finish". Failure terminals rely on their features (off-track position,
    saturated collision risk) driving r_tmp itself toward zero.
    """
    r_tmp = _require_finite("r_tmp", r_tmp)
    if not (0.0 < r_tmp <= 1.0):
        raise ValueError(f"r_tmp must be in (0, 1], got {r_tmp!r}")
    gamma = _require_finite("gamma", gamma)
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must be in (0, 1), got {gamma!r}")
    if kind is TerminalKind.NON_TERMINAL:
        return r_tmp
    return r_tmp / (1.0 - gamma)


def q_closed_form(r_persist: float, r_goal: float, gamma: float,
                  scaled: bool) -> tuple[float, float]:
    """Closed-form action values for the two-choice stay/finish toy chain.

    One state, two actions: "stay" collects r_persist forever
    (q_stay = r_persist / (1 - gamma)), "finish" ends the episode with
    r_goal, either raw (unscaled) or divided by (1 - gamma) (scaled).
    Demonstrates the argmax flip that motivates terminal scaling:
    (0.9, 1.0, 0.99) gives (90, 1) unscaled but (90, 100) scaled.
    """
    gamma = _require_finite("gamma", gamma)
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must be in (0, 1), got {gamma!r}")
    q_stay = _require_finite("r_persist", r_persist) / (1.0 - gamma)
    r_goal = _require_finite("r_goal", r_goal)
    q_goal = r_goal / (1.0 - gamma) if scaled else r_goal
    return q_stay, q_goal


def baseline_lillicrap(v: float, theta: float, collided: bool) -> float:
    """Projected-speed baseline reward: v * cos(theta), -1 on collision."""
    if collided:
        return -1.0
    return _require_finite("v", v) * math.cos(_require_finite("theta", theta))


def baseline_perot(v: float, theta: float, track_pos: float) -> float:
    """Speed-minus-offset baseline reward: v * (cos(theta) - |track_pos|)."""
    v = _require_finite("v", v)
    theta = _require_finite("theta", theta)
    track_pos = _require_finite("track_pos", track_pos)
    return v * (math.cos(theta) - abs(track_pos))


def continuity_scan(spec: EvalFunction, lo: float, hi: float,
                    step: float) -> float:
    """Largest jump between adjacent grid evaluations of spec on [lo, hi].

    Used to demonstrate that each form is (numerically) continuous: the max
    jump should shrink proportionally with the step size away from any
    genuine discontinuity.
    """
    lo = _require_finite("lo", lo)
    hi = _require_finite("hi", hi)
    step = _require_positive("step", step)
    if lo >= hi:
        raise ValueError(f"need lo < hi, got {lo!r} >= {hi!r}")
    worst = 0.0
    prev = eval_value(spec, lo)
    f = lo
    while f < hi:
        f = min(f + step, hi)
        cur = eval_value(spec, f)
        jump = abs(cur - prev)
        if jump > worst:
            worst = jump
        prev = cur
    return worst


def spec_to_dict(fn: EvalFunction) -> dict:
    """Flatten an evaluation function into {'form': ..., params...}."""
    d = {"form": fn.FORM}
    for fld in fields(fn):
        d[fld.name] = getattr(fn, fld.name)
    return d


def spec_from_dict(d: Mapping) -> EvalFunction:
    """Inverse of spec_to_dict; raises ConfigError on unknown form or keys."""
    d = dict(d)
    try:
        form = d.pop("form")
    except KeyError:
        raise ConfigError("evaluation function needs a 'form' key") from None
    try:
        cls = EVAL_FORMS[form]
    except KeyError:
        raise ConfigError(
            f"unknown evaluation form {form!r} (known: {sorted(EVAL_FORMS)})"
        ) from None
    expected = {fld.name for fld in fields(cls)}
    extra = set(d) - expected
    if extra:
        raise ConfigError(f"unexpected keys {sorted(extra)} for form {form!r}")
    missing = expected - set(d)
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)} for form {form!r}")
    try:
        return cls(**{k: float(v) for k, v in d.items()})
    except ValueError as exc:
        raise ConfigError(f"bad parameters for form {form!r}: {exc}") from exc
