"""Unit and property tests for the evaluation-function reward core.

Expected numbers were computed independently (closed-form exponents evaluated
by hand) and frozen here; the implementation must reproduce them.
"""
import math

import numpy as np
import pytest

from procdrive.rewards import (
    AsymTarget,
    Band,
    ConfigError,
    EVAL_FORMS,
    EvalFunction,
    LowerThreshold,
    RewardSpec,
    RewardTerm,
    Target,
    TerminalKind,
    TwoTarget,
    UpperThreshold,
    VALUE_FLOOR,
    baseline_lillicrap,
    baseline_perot,
    continuity_scan,
    eval_value,
    q_closed_form,
    shape_reward,
    spec_from_dict,
    spec_to_dict,
    temp_reward,
)

# The parameter sets used by the shipped circuit / highway reward configs.
CIRCUIT_SPEED = Target(o=250.0, alpha=20000.0)
CIRCUIT_POS = Band(tau_lo=-0.5, tau_hi=0.5, alpha_lo=0.2, alpha_hi=0.2)
CIRCUIT_AX = Band(tau_lo=-30.0, tau_hi=10.0, alpha_lo=20.0, alpha_hi=20.0)
CIRCUIT_AY = Band(tau_lo=-40.0, tau_hi=40.0, alpha_lo=20.0, alpha_hi=20.0)
HIGHWAY_SPEED = AsymTarget(o=110.0, alpha_lo=2000.0, alpha_hi=1000.0)
HIGHWAY_POS = TwoTarget(o1=-0.5, o2=0.5, alpha1=0.05, alpha2=0.04,
                        alpha3=0.04, alpha4=0.05, k1=0.95, k2=0.9)
HIGHWAY_AX = Band(tau_lo=-1.0, tau_hi=1.0, alpha_lo=30.0, alpha_hi=30.0)
HIGHWAY_AY = Band(tau_lo=-5.0, tau_hi=5.0, alpha_lo=30.0, alpha_hi=30.0)
HIGHWAY_RISK = Target(o=0.0, alpha=0.1)

SHIPPED_FNS = [CIRCUIT_SPEED, CIRCUIT_POS, CIRCUIT_AX, CIRCUIT_AY,
               HIGHWAY_SPEED, HIGHWAY_POS, HIGHWAY_AX, HIGHWAY_AY,
               HIGHWAY_RISK]


def random_eval_fn(rng) -> EvalFunction:
    """Draw a valid random evaluation function of a random form."""
    form = rng.choice(list(EVAL_FORMS))
    alpha = lambda: float(10.0 ** rng.uniform(-2, 4))
    off = lambda: float(rng.uniform(-100.0, 100.0))
    if form == "target":
        return Target(off(), alpha())
    if form == "asym_target":
        return AsymTarget(off(), alpha(), alpha())
    if form == "lower_threshold":
        return LowerThreshold(off(), alpha())
    if form == "upper_threshold":
        return UpperThreshold(off(), alpha())
    if form == "band":
        a, b = sorted((off(), off()))
        return Band(a, b, alpha(), alpha())
    a, b = sorted((off(), off()))
    if a == b:
        b = a + 1.0
    k1 = float(rng.uniform(0.05, 1.0))
    k2 = float(rng.uniform(0.0, k1))
    return TwoTarget(a, b, alpha(), alpha(), alpha(), alpha(), k1, k2)


def probe_points(fn: EvalFunction, rng, n: int = 8):
    """Feature values around the boundaries plus wide-range draws."""
    pts = []
    for b in fn.boundaries():
        pts += [b, b - 1e-9, b + 1e-9, b - 3.7, b + 3.7]
    pts += list(rng.uniform(-500.0, 500.0, size=n))
    return pts


# ---------------------------------------------------------------- values


def test_target_is_one_exactly_at_target():
    assert eval_value(Target(250.0, 20000.0), 250.0) == 1.0
    assert eval_value(Target(-3.25, 0.5), -3.25) == 1.0


def test_target_frozen_value():
    assert eval_value(CIRCUIT_SPEED, 200.0) == pytest.approx(
        0.8824969025845955, abs=1e-15)


def test_band_frozen_value():
    assert eval_value(CIRCUIT_POS, 0.7) == pytest.approx(
        0.8187307530779819, abs=1e-15)
    assert eval_value(CIRCUIT_POS, 0.3) == 1.0
    assert eval_value(CIRCUIT_POS, -0.5) == 1.0


def test_asym_target_frozen_values():
    assert eval_value(HIGHWAY_SPEED, 130.0) == pytest.approx(
        0.6703200460356393, abs=1e-15)
    assert eval_value(HIGHWAY_SPEED, 90.0) == pytest.approx(
        0.8187307530779818, abs=1e-15)
    assert eval_value(HIGHWAY_SPEED, 110.0) == 1.0


def test_two_target_anchor_values():
    # Peak 1.0 at the first target, k1 at the second.
    assert eval_value(HIGHWAY_POS, -0.5) == pytest.approx(1.0, abs=1e-15)
    assert eval_value(HIGHWAY_POS, 0.5) == pytest.approx(0.95, abs=1e-15)
    # Inner branch coefficients (1-k2) and (k1-k2) riding on the k2 plateau.
    assert eval_value(HIGHWAY_POS, -0.25) == pytest.approx(
        0.9209611387151098, abs=1e-15)
    assert eval_value(HIGHWAY_POS, 0.0) == pytest.approx(
        0.9000965227068114, abs=1e-15)
    assert eval_value(HIGHWAY_POS, 0.25) == pytest.approx(
        0.910480569357555, abs=1e-15)
    # Outer bells.
    assert eval_value(HIGHWAY_POS, -0.7) == pytest.approx(
        0.4493289641172218, abs=1e-15)
    assert eval_value(HIGHWAY_POS, 0.7) == pytest.approx(
        0.42686251591136065, abs=1e-15)


def test_risk_term_value():
    risk = math.exp(-1.0)  # single vehicle 20 m dead ahead
    assert eval_value(HIGHWAY_RISK, risk) == pytest.approx(
        0.25837252700499735, abs=1e-15)


def test_thresholds():
    lo = LowerThreshold(5.0, 2.0)
    assert eval_value(lo, 5.0) == 1.0
    assert eval_value(lo, 17.3) == 1.0
    assert eval_value(lo, 4.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    hi = UpperThreshold(5.0, 2.0)
    assert eval_value(hi, 4.0) == 1.0
    assert eval_value(hi, -100.0) == 1.0
    assert eval_value(hi, 6.0) == pytest.approx(math.exp(-0.5), abs=1e-15)


def test_floor_keeps_values_positive():
    v = eval_value(Target(0.0, 1e-3), 1000.0)  # exp(-1e9) underflows
    assert v == VALUE_FLOOR
    assert v > 0.0


# ---------------------------------------------------------------- validation


@pytest.mark.parametrize("bad", [
    lambda: Target(0.0, 0.0),
    lambda: Target(0.0, -1.0),
    lambda: Target(float("nan"), 1.0),
    lambda: AsymTarget(0.0, 1.0, 0.0),
    lambda: Band(1.0, -1.0, 1.0, 1.0),
    lambda: Band(0.0, 1.0, 1.0, float("inf")),
    lambda: TwoTarget(1.0, -1.0, 1, 1, 1, 1, 0.9, 0.5),
    lambda: TwoTarget(-1.0, 1.0, 1, 1, 1, 1, 0.5, 0.9),
    lambda: TwoTarget(-1.0, 1.0, 1, 1, 1, 1, 1.5, 0.5),
])
def test_invalid_parameters_raise(bad):
    with pytest.raises(ValueError):
        bad()


def test_non_finite_feature_raises():
    with pytest.raises(ValueError):
        eval_value(Target(0.0, 1.0), float("nan"))
    with pytest.raises(ValueError):
        eval_value(Target(0.0, 1.0), float("inf"))


# ---------------------------------------------------------------- properties


def test_range_property_random_specs():
    rng = np.random.default_rng(20260821)
    for _ in range(1000):
        fn = random_eval_fn(rng)
        for f in probe_points(fn, rng):
            v = eval_value(fn, float(f))
            assert 0.0 < v <= 1.0, (fn, f, v)


def _branch_limit_pairs(fn: EvalFunction):
    """Independent left/right branch formulas evaluated at each boundary.

    Returns (boundary, left_limit, right_limit, exact) tuples where exact
    says the form is mathematically continuous there. The TwoTarget midpoint
    is continuous only up to its decayed bell tails.
    """
    e = math.exp
    if isinstance(fn, Target):
        return [(fn.o, 1.0, 1.0, True)]
    if isinstance(fn, AsymTarget):
        return [(fn.o, e(-0.0 / fn.alpha_lo), e(-0.0 / fn.alpha_hi), True)]
    if isinstance(fn, LowerThreshold):
        return [(fn.tau, e(-0.0 / fn.alpha), 1.0, True)]
    if isinstance(fn, UpperThreshold):
        return [(fn.tau, 1.0, e(-0.0 / fn.alpha), True)]
    if isinstance(fn, Band):
        return [(fn.tau_lo, e(-0.0 / fn.alpha_lo), 1.0, True),
                (fn.tau_hi, 1.0, e(-0.0 / fn.alpha_hi), True)]
    assert isinstance(fn, TwoTarget)
    m = fn.midpoint
    q = (m - fn.o1) ** 2
    return [
        (fn.o1, 1.0, (1 - fn.k2) * e(-0.0 / fn.alpha2) + fn.k2, True),
        (m,
         (1 - fn.k2) * e(-q / fn.alpha2) + fn.k2,
         (fn.k1 - fn.k2) * e(-q / fn.alpha3) + fn.k2,
         False),
        (fn.o2, (fn.k1 - fn.k2) + fn.k2, fn.k1, True),
    ]


def test_branch_continuity_random_specs():
    rng = np.random.default_rng(7)
    tiny = 1e-12
    for _ in range(400):
        fn = random_eval_fn(rng)
        for b, left, right, exact in _branch_limit_pairs(fn):
            if exact:
                assert abs(left - right) <= 1e-9, (fn, b)
            # each branch formula matches the implementation on its own side
            assert eval_value(fn, b) == pytest.approx(right, abs=1e-12)
            scale = max(1.0, abs(b))
            assert eval_value(fn, b - scale * tiny) == pytest.approx(
                left, rel=1e-6, abs=1e-9)


def test_two_target_midpoint_jump_is_tail_sized():
    # The paper-shaped lane term: inherent midpoint jump is the difference of
    # two decayed bell tails, orders below the 1e-2 scan tolerance.
    b = HIGHWAY_POS.midpoint
    jump = abs(eval_value(HIGHWAY_POS, b - 1e-12) - eval_value(HIGHWAY_POS, b))
    assert jump == pytest.approx(9.652270681137498e-05, abs=1e-12)
    assert jump < 1e-2


def test_continuity_scan_shipped_parameter_sets():
    for fn in SHIPPED_FNS:
        for b in fn.boundaries():
            worst = continuity_scan(fn, b - 0.5, b + 0.5, 1e-3)
            assert worst < 1e-2, (fn, b, worst)


def test_continuity_scan_shrinks_with_step():
    worst_coarse = continuity_scan(HIGHWAY_POS, -1.0, 1.0, 1e-3)
    worst_fine = continuity_scan(HIGHWAY_POS, -1.0, 1.0, 1e-4)
    # Away from the (tail-sized) midpoint jump the scan scales with step.
    assert worst_fine < worst_coarse


def test_maxima_locations():
    t = Target(3.0, 0.7)
    grid = np.linspace(-2.0, 8.0, 1001)
    vals = [eval_value(t, float(f)) for f in grid]
    assert max(vals) <= 1.0
    assert eval_value(t, 3.0) == 1.0
    assert all(v < 1.0 for f, v in zip(grid, vals) if f != 3.0)

    b = Band(-1.0, 2.0, 0.5, 0.5)
    for f in np.linspace(-1.0, 2.0, 77):
        assert eval_value(b, float(f)) == 1.0
    assert eval_value(b, -1.001) < 1.0
    assert eval_value(b, 2.001) < 1.0


def test_product_composition_properties():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        fns = [random_eval_fn(rng) for _ in range(k)]
        terms = tuple(RewardTerm(f"f{i}", fn) for i, fn in enumerate(fns))
        spec = RewardSpec(terms, gamma=0.99)
        feats = {f"f{i}": float(rng.uniform(-200, 200)) for i in range(k)}
        r = temp_reward(spec, feats)
        assert 0.0 < r <= 1.0
        # appending one more factor never increases the product
        extra = random_eval_fn(rng)
        spec2 = RewardSpec(terms + (RewardTerm("fx", extra),), gamma=0.99)
        feats["fx"] = float(rng.uniform(-200, 200))
        assert temp_reward(spec2, feats) <= r + 1e-18


def test_temp_reward_missing_feature_names_it():
    spec = RewardSpec((RewardTerm("velocity", CIRCUIT_SPEED),), gamma=0.99)
    with pytest.raises(ConfigError, match="velocity"):
        temp_reward(spec, {"track_position": 0.0})


def test_reward_spec_validation():
    term = RewardTerm("velocity", CIRCUIT_SPEED)
    with pytest.raises(ConfigError):
        RewardSpec((), gamma=0.99)
    with pytest.raises(ConfigError):
        RewardSpec((term, term), gamma=0.99)
    with pytest.raises(ValueError):
        RewardSpec((term,), gamma=1.0)
    with pytest.raises(ValueError):
        RewardSpec((term,), gamma=0.0)


# ---------------------------------------------------------------- shaping


def test_terminal_scaling_values():
    assert shape_reward(0.9, TerminalKind.NON_TERMINAL, 0.99) == 0.9
    assert shape_reward(0.9, TerminalKind.GOAL, 0.99) == pytest.approx(
        90.0, abs=1e-9)
    assert shape_reward(0.9, TerminalKind.FAILURE, 0.99) == pytest.approx(
        90.0, abs=1e-9)


def test_scaling_identity():
    rng = np.random.default_rng(3)
    for _ in range(200):
        r = float(rng.uniform(1e-6, 1.0))
        gamma = float(rng.uniform(0.5, 0.9999))
        for kind in (TerminalKind.GOAL, TerminalKind.FAILURE):
            back = shape_reward(r, kind, gamma) * (1.0 - gamma)
            assert abs(back - r) <= 1e-12


def test_shape_reward_domain():
    with pytest.raises(ValueError):
        shape_reward(0.0, TerminalKind.GOAL, 0.99)
    with pytest.raises(ValueError):
        shape_reward(1.5, TerminalKind.GOAL, 0.99)
    with pytest.raises(ValueError):
        shape_reward(0.5, TerminalKind.GOAL, 1.0)


def test_q_closed_form_worked_example():
    q_stay, q_goal = q_closed_form(0.9, 1.0, 0.99, scaled=False)
    assert abs(q_stay - 90.0) <= 1e-9
    assert abs(q_goal - 1.0) <= 1e-9
    assert q_stay > q_goal  # loitering wins without scaling
    q_stay, q_goal = q_closed_form(0.9, 1.0, 0.99, scaled=True)
    assert abs(q_stay - 90.0) <= 1e-9
    assert abs(q_goal - 100.0) <= 1e-9
    assert q_goal > q_stay  # scaling restores the goal preference


def test_argmax_flip_property():
    rng = np.random.default_rng(5)
    for _ in range(200):
        gamma = float(rng.uniform(0.95, 0.999))
        r_p = float(rng.uniform(0.5, 0.99))
        r_g = float(rng.uniform(r_p + 1e-6, 1.0))
        q_stay_u, q_goal_u = q_closed_form(r_p, r_g, gamma, scaled=False)
        assert q_stay_u > q_goal_u
        q_stay_s, q_goal_s = q_closed_form(r_p, r_g, gamma, scaled=True)
        assert q_goal_s > q_stay_s


# ---------------------------------------------------------------- baselines


def test_baseline_lillicrap():
    assert baseline_lillicrap(30.0, 0.1, collided=True) == -1.0
    assert baseline_lillicrap(30.0, 0.0, collided=False) == 30.0
    assert baseline_lillicrap(30.0, math.pi / 2, collided=False) == (
        pytest.approx(0.0, abs=1e-12))


def test_baseline_perot():
    assert baseline_perot(20.0, math.pi / 3, 0.25) == pytest.approx(
        5.0, abs=1e-12)
    # offset enters as a magnitude
    assert baseline_perot(20.0, math.pi / 3, -0.25) == pytest.approx(
        5.0, abs=1e-12)


# ---------------------------------------------------------------- dict I/O


def test_spec_dict_round_trip():
    rng = np.random.default_rng(13)
    for _ in range(100):
        fn = random_eval_fn(rng)
        assert spec_from_dict(spec_to_dict(fn)) == fn


def test_spec_from_dict_errors():
    with pytest.raises(ConfigError, match="unknown"):
        spec_from_dict({"form": "bell", "o": 0.0, "alpha": 1.0})
    with pytest.raises(ConfigError, match="missing"):
        spec_from_dict({"form": "target", "o": 0.0})
    with pytest.raises(ConfigError, match="unexpected"):
        spec_from_dict({"form": "target", "o": 0.0, "alpha": 1.0, "zz": 2.0})
    with pytest.raises(ConfigError):
        spec_from_dict({"o": 0.0, "alpha": 1.0})
