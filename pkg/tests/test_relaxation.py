import numpy as np
import pytest

from lirpa import (
    DomainError,
    ReluLowerMode,
    exp_relaxation,
    log_relaxation,
    mul_relaxation,
    relu_relaxation,
)


def _check_unary_sandwich(rel, fn, l, u, samples=500, beyond=False):
    rng = np.random.default_rng(0)
    l = np.atleast_1d(np.asarray(l, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo, hi = (l - 2.0, u + 2.0) if beyond else (l, u)
    xs = lo[:, None] + (hi - lo)[:, None] * rng.uniform(0, 1, (l.shape[0], samples))
    xs[:, 0] = lo
    xs[:, 1] = hi
    fx = fn(xs)
    lower = rel.lower_slope[:, None] * xs + rel.lower_intercept[:, None]
    upper = rel.upper_slope[:, None] * xs + rel.upper_intercept[:, None]
    assert np.all(lower <= fx + 1e-9)
    assert np.all(fx <= upper + 1e-9)


def test_relu_crossing_golden():
    rel = relu_relaxation(np.array([-5.0]), np.array([7.0]), ReluLowerMode.ZERO)
    assert rel.upper_slope[0] == pytest.approx(7.0 / 12.0, abs=1e-12)
    assert rel.upper_intercept[0] == pytest.approx(35.0 / 12.0, abs=1e-12)
    assert rel.lower_slope[0] == 0.0 and rel.lower_intercept[0] == 0.0


def test_relu_stable_active_is_identity():
    for mode in ReluLowerMode:
        rel = relu_relaxation(np.array([1.0]), np.array([3.0]), mode)
        assert rel.upper_slope[0] == 1.0 and rel.upper_intercept[0] == 0.0
        assert rel.lower_slope[0] == 1.0 and rel.lower_intercept[0] == 0.0


def test_relu_stable_inactive_is_zero():
    rel = relu_relaxation(np.array([-3.0]), np.array([-1.0]))
    assert rel.upper_slope[0] == 0.0 and rel.upper_intercept[0] == 0.0
    assert rel.lower_slope[0] == 0.0


def test_relu_adaptive_tie_picks_zero_slope():
    # u == |l| is not a strict win for the identity lower line
    rel = relu_relaxation(np.array([-1.5]), np.array([1.5]), ReluLowerMode.ADAPTIVE)
    assert rel.upper_slope[0] == pytest.approx(0.5, abs=1e-12)
    assert rel.upper_intercept[0] == pytest.approx(0.75, abs=1e-12)
    assert rel.lower_slope[0] == 0.0


def test_relu_adaptive_slope_selection():
    rel = relu_relaxation(np.array([-1.0, -3.0]), np.array([2.0, 1.0]), ReluLowerMode.ADAPTIVE)
    assert rel.lower_slope[0] == 1.0  # u > |l|
    assert rel.lower_slope[1] == 0.0  # u <= |l|


def test_relu_rejects_inverted_interval():
    with pytest.raises(ValueError, match="exceeds"):
        relu_relaxation(np.array([1.0]), np.array([0.0]))


def test_relu_sampling_soundness():
    rng = np.random.default_rng(1)
    for mode in ReluLowerMode:
        for _ in range(50):
            l = rng.uniform(-5, 5, 6)
            u = l + rng.uniform(0, 5, 6)
            rel = relu_relaxation(l, u, mode)
            _check_unary_sandwich(rel, lambda x: np.maximum(x, 0.0), l, u)


def test_relu_zero_mode_dominates_interval_bound():
    # the zero-mode lower line equals the constant 0, and the chord stays
    # below the constant upper endpoint everywhere on the interval
    rng = np.random.default_rng(2)
    l = -rng.uniform(0.1, 5, 8)
    u = rng.uniform(0.1, 5, 8)
    rel = relu_relaxation(l, u, ReluLowerMode.ZERO)
    assert np.all(rel.lower_slope == 0.0) and np.all(rel.lower_intercept == 0.0)
    xs = np.linspace(l, u, 101).T
    chord = rel.upper_slope[:, None] * xs + rel.upper_intercept[:, None]
    assert np.all(chord <= np.maximum(u, 0.0)[:, None] + 1e-12)


def test_exp_point_interval_degenerates_to_tangent():
    rel = exp_relaxation(np.array([0.0]), np.array([0.0]))
    assert rel.upper_slope[0] == pytest.approx(1.0, abs=1e-12)
    assert rel.upper_intercept[0] == pytest.approx(1.0, abs=1e-12)
    assert rel.lower_slope[0] == pytest.approx(1.0, abs=1e-12)
    assert rel.lower_intercept[0] == pytest.approx(1.0, abs=1e-12)


def test_exp_chord_golden():
    rel = exp_relaxation(np.array([-1.5]), np.array([1.5]))
    slope = (np.exp(1.5) - np.exp(-1.5)) / 3.0
    assert rel.upper_slope[0] == pytest.approx(slope, abs=1e-9)
    assert rel.upper_intercept[0] == pytest.approx(np.exp(-1.5) + 1.5 * slope, abs=1e-9)


def test_exp_tangent_point_choice():
    # tangent sits at min(midpoint, log of chord slope), clamped into [l, u]
    l, u = np.array([-2.0]), np.array([3.0])
    rel = exp_relaxation(l, u)
    chord = (np.exp(u) - np.exp(l)) / (u - l)
    d = np.minimum(0.5 * (l + u), np.log(chord))
    assert rel.lower_slope[0] == pytest.approx(np.exp(d)[0], abs=1e-12)
    assert rel.lower_intercept[0] == pytest.approx((np.exp(d) * (1.0 - d))[0], abs=1e-12)


def test_exp_sampling_soundness_and_global_tangent():
    rng = np.random.default_rng(3)
    for _ in range(50):
        l = rng.uniform(-4, 2, 5)
        u = l + rng.uniform(0, 4, 5)
        rel = exp_relaxation(l, u)
        _check_unary_sandwich(rel, np.exp, l, u, samples=200)
        # convexity: the tangent holds beyond the interval too
        xs = np.linspace(l - 3, u + 3, 101).T
        lower = rel.lower_slope[:, None] * xs + rel.lower_intercept[:, None]
        assert np.all(lower <= np.exp(xs) + 1e-9)


def test_exp_rejects_nonfinite():
    with pytest.raises(DomainError):
        exp_relaxation(np.array([0.0]), np.array([np.inf]))


def test_log_requires_positive_domain():
    with pytest.raises(DomainError):
        log_relaxation(np.array([0.0]), np.array([1.0]))


def test_log_sampling_soundness():
    rng = np.random.default_rng(4)
    for _ in range(50):
        l = rng.uniform(0.05, 3, 5)
        u = l + rng.uniform(0, 4, 5)
        rel = log_relaxation(l, u)
        _check_unary_sandwich(rel, np.log, l, u, samples=200)


def test_mul_constant_x_operand_is_exact():
    rel = mul_relaxation(
        np.array([3.0]), np.array([3.0]), np.array([-1.0]), np.array([2.0])
    )
    for plane in ((rel.lower_x, rel.lower_y, rel.lower_const), (rel.upper_x, rel.upper_y, rel.upper_const)):
        assert plane[0][0] == 0.0 and plane[1][0] == 3.0 and plane[2][0] == 0.0


def test_mul_constant_y_operand_is_exact():
    rel = mul_relaxation(
        np.array([-1.0]), np.array([2.0]), np.array([4.0]), np.array([4.0])
    )
    for plane in ((rel.lower_x, rel.lower_y, rel.lower_const), (rel.upper_x, rel.upper_y, rel.upper_const)):
        assert plane[0][0] == 4.0 and plane[1][0] == 0.0 and plane[2][0] == 0.0


def test_mul_unit_box_planes():
    zero = np.array([0.0])
    one = np.array([1.0])
    rel = mul_relaxation(zero, one, zero, one)
    # z >= 0 below, z <= x above
    assert (rel.lower_x[0], rel.lower_y[0], rel.lower_const[0]) == (0.0, 0.0, 0.0)
    assert (rel.upper_x[0], rel.upper_y[0], rel.upper_const[0]) == (1.0, 0.0, 0.0)


def test_mul_grid_soundness():
    rng = np.random.default_rng(5)
    for _ in range(100):
        lx = rng.uniform(-3, 3, 4)
        ux = lx + rng.uniform(0, 3, 4)
        ly = rng.uniform(-3, 3, 4)
        uy = ly + rng.uniform(0, 3, 4)
        rel = mul_relaxation(lx, ux, ly, uy)
        ts = np.linspace(0, 1, 21)
        xs = lx[:, None] + (ux - lx)[:, None] * ts
        ys = ly[:, None] + (uy - ly)[:, None] * ts
        for a in range(21):
            for b in range(21):
                x, y = xs[:, a], ys[:, b]
                z = x * y
                lo = rel.lower_x * x + rel.lower_y * y + rel.lower_const
                hi = rel.upper_x * x + rel.upper_y * y + rel.upper_const
                assert np.all(lo <= z + 1e-9)
                assert np.all(z <= hi + 1e-9)


def test_relaxation_sampling_soundness_bulk():
    # 500 samples per neuron across fresh random intervals for each op
    rng = np.random.default_rng(6)
    l = rng.uniform(-3, 1, 16)
    u = l + rng.uniform(0, 3, 16)
    _check_unary_sandwich(relu_relaxation(l, u), lambda x: np.maximum(x, 0), l, u, samples=500)
    _check_unary_sandwich(exp_relaxation(l, u), np.exp, l, u, samples=500)
    lp = np.abs(l) + 0.1
    _check_unary_sandwich(log_relaxation(lp, lp + (u - l)), np.log, lp, lp + (u - l), samples=500)
