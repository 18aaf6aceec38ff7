import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gdpmeans.errors import DomainError, InfiniteWeight, RangeError
from gdpmeans.fgen import (
    Linear,
    LogSumExp,
    PowerMean,
    effective_beta,
    f_eval,
    f_inverse,
    f_mean,
    f_prime,
)


def test_power_linear_case():
    assert f_eval(PowerMean(1, 0), 1.0) == 0.0


def test_power_log_case():
    assert f_eval(PowerMean(0, 1), 0.0) == 0.0


def test_lse_linear_case():
    assert f_eval(LogSumExp(1), 7.0) == 7.0


def test_power_prime():
    assert f_prime(PowerMean(0.5, 0), 4.0) == pytest.approx(0.5)


def test_lse_prime_at_zero():
    assert f_prime(LogSumExp(2), 0.0) == 1.0


def test_linear_prime():
    np.testing.assert_array_equal(f_prime(Linear(), np.array([0.0, 3.0, 1e9])), 1.0)


def test_inverse_examples():
    assert f_inverse(PowerMean(1, 0), 0.0) == 1.0
    assert f_inverse(LogSumExp(1), 3.0) == 3.0


def test_mean_examples():
    assert f_mean(Linear(), [1, 4]) == 2.5
    assert f_mean(PowerMean(200, 0), [1, 4]) == pytest.approx(4, rel=0.01)
    assert f_mean(PowerMean(0, 0), [1, 4]) == pytest.approx(2.0, rel=1e-12)


def test_effective_beta_examples():
    assert effective_beta(5, 8) == 1.5
    assert effective_beta(1, 17) == 1.0
    assert effective_beta(-3, 4) == 0.0
    with pytest.raises(DomainError):
        effective_beta(2, 0)


def test_power_log_branch_rejects_zero():
    with pytest.raises(DomainError):
        f_eval(PowerMean(0, 0), 0.0)
    with pytest.raises(DomainError):
        f_eval(PowerMean(-1, 0), 0.0)


def test_infinite_weight_signal():
    with pytest.raises(InfiniteWeight):
        f_prime(PowerMean(0.5, 0), 0.0)
    assert PowerMean(0.5, 0).infinite_slope_at_zero
    assert not PowerMean(0.5, 1).infinite_slope_at_zero


def test_negative_argument_rejected():
    with pytest.raises(DomainError):
        f_eval(Linear(), -1.0)


def test_range_errors():
    with pytest.raises(RangeError):
        f_inverse(PowerMean(1, 0), -2.0)  # below f(0) = -1
    with pytest.raises(RangeError):
        f_inverse(LogSumExp(0.5), 2.5)  # f is bounded above by 2
    with pytest.raises(RangeError):
        f_inverse(Linear(), -1.0)


@pytest.mark.parametrize(
    "f,shape",
    [
        (Linear(), "linear"),
        (PowerMean(1, 3), "linear"),
        (PowerMean(0.2), "concave"),
        (PowerMean(-2), "concave"),
        (PowerMean(2), "convex"),
        (LogSumExp(1), "linear"),
        (LogSumExp(0), "concave"),
        (LogSumExp(4), "convex"),
    ],
)
def test_shape(f, shape):
    assert f.shape == shape


def test_power_mean_beta1_weights_match_linear():
    z = np.linspace(0, 9, 10)
    np.testing.assert_array_equal(PowerMean(1, 0).prime(z), Linear().prime(z))


# -- properties -------------------------------------------------------------


betas = st.floats(-2, 5, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(betas, st.sampled_from(["pow", "lse"]), st.lists(st.floats(0, 5), min_size=2, max_size=30))
def test_strictly_increasing(beta, kind, zs):
    f = PowerMean(beta, 1.0) if kind == "pow" else LogSumExp(beta)
    z = np.unique(np.round(zs, 6))
    if z.size < 2:
        return
    v = f.value(z)
    assert np.all(np.diff(v) > 0)


@settings(max_examples=200, deadline=None)
@given(betas, st.sampled_from(["pow", "lse"]), st.floats(0.05, 5))
def test_prime_matches_finite_difference(beta, kind, z):
    f = PowerMean(beta, 0.5) if kind == "pow" else LogSumExp(beta)
    h = 1e-6
    fd = (f.value(z + h) - f.value(z - h)) / (2 * h)
    assert float(f.prime(z)) == pytest.approx(float(fd), rel=1e-6, abs=1e-9)
    fd2 = (f.prime(z + h) - f.prime(z - h)) / (2 * h)
    assert float(f.second(z)) == pytest.approx(float(fd2), rel=1e-5, abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 5).filter(lambda b: abs(b - 1) > 0.05), st.sampled_from(["pow", "lse"]), st.floats(0, 4))
def test_second_difference_sign_follows_shape(beta, kind, z):
    f = PowerMean(beta, 1.0) if kind == "pow" else LogSumExp(beta)
    h = 1e-2
    second = float(f.value(z + 2 * h) - 2 * f.value(z + h) + f.value(z))
    sign = {"concave": -1, "convex": 1}[f.shape]
    assert math.copysign(1, second) == sign


@settings(max_examples=300, deadline=None)
@given(betas, st.sampled_from(["pow", "lse", "lin"]), st.floats(0, 50))
def test_inverse_round_trip(beta, kind, z):
    f = {"pow": PowerMean(beta, 1.0), "lse": LogSumExp(beta), "lin": Linear()}[kind]
    y = f.value(z)
    # skip where f has saturated in double precision and is no longer invertible
    assume(np.isfinite(y) and f.value(z * 1.001 + 1e-6) > y)
    assert float(f.value(f.inverse(y))) == pytest.approx(float(y), rel=1e-10, abs=1e-10)


def test_limit_continuity():
    z = np.linspace(0.1, 5, 20)
    for b in (1e-6, -1e-6):
        np.testing.assert_allclose(PowerMean(b, 1).value(z), PowerMean(0, 1).value(z), rtol=1e-4)
        np.testing.assert_allclose(LogSumExp(1 + b).value(z), LogSumExp(1).value(z), rtol=1e-4)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(-2, 200),
    st.sampled_from(["pow0", "pow1", "lse", "lin"]),
    st.lists(st.floats(0, 100), min_size=1, max_size=20),
)
def test_mean_between_min_and_max(beta, kind, values):
    f = {"pow0": PowerMean(beta, 0.0), "pow1": PowerMean(beta, 1.0), "lse": LogSumExp(beta), "lin": Linear()}[kind]
    m = f.mean(values)
    lo, hi = min(values), max(values)
    assert lo - 1e-9 * (1 + hi) <= m <= hi + 1e-9 * (1 + hi)


def test_weighted_mean():
    assert Linear().mean([1.0, 4.0], weights=[3, 1]) == pytest.approx(1.75)
    assert LogSumExp(1).mean([1.0, 4.0], weights=[1, 1]) == pytest.approx(2.5)


def test_lse_mean_no_overflow():
    m = LogSumExp(50).mean([0.0, 100.0])
    assert 99 < m <= 100


def test_scaled_terms_are_affine_rescaling():
    f = PowerMean(3.0)
    z = np.array([0.5, 1.0, 2.0])
    g0, g1, g2 = f.scaled_terms(z)
    v, p, s = f.value(z), f.prime(z), f.second(z)
    # g = c f + b with c > 0: ratios of first and second derivatives are constant
    assert np.allclose(g1 / p, g1[0] / p[0])
    assert np.allclose(g2 / s, g1[0] / p[0])
    assert np.allclose(np.diff(g0) / np.diff(v), g1[0] / p[0])
