import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lassophase import (
    MagnitudeLaw,
    ParameterError,
    SignalPrior,
    build,
    CovarianceSpec,
    expected_weighted_norm_sq,
)


def test_point_law_is_constant(rng):
    law = MagnitudeLaw(kind="point", value=2.5)
    out = law.sample(rng, 100)
    assert np.all(out == 2.5)


def test_point_law_consumes_no_rng():
    # the default point mass must not advance the generator, so signed
    # patterns are bitwise-invariant to the magnitude value
    g1 = np.random.default_rng(5)
    MagnitudeLaw(kind="point", value=1.0).sample(g1, 50)
    g2 = np.random.default_rng(5)
    assert g1.standard_normal() == g2.standard_normal()


def test_exponential_law_moments(rng):
    law = MagnitudeLaw(kind="exponential", value=2.0)
    out = law.sample(rng, 200_000)
    assert np.all(out > 0)
    assert abs(out.mean() - 2.0) < 0.02
    assert law.mean == 2.0
    assert law.second_moment == pytest.approx(8.0)


def test_law_validation():
    with pytest.raises(ParameterError):
        MagnitudeLaw(kind="point", value=0.0)
    with pytest.raises(ParameterError):
        MagnitudeLaw(kind="uniform", value=1.0)


@given(
    eps=st.floats(min_value=0.0, max_value=1.0),
    d_eps=st.floats(min_value=0.0, max_value=1.0),
)
def test_prior_mass_splits(eps, d_eps):
    prior = SignalPrior(eps, d_eps)
    assert prior.eps_plus == pytest.approx(eps * (1 + d_eps) / 2)
    assert prior.eps_minus == pytest.approx(eps - prior.eps_plus, abs=1e-15)
    assert prior.eps_minus <= prior.eps_plus <= eps


def test_prior_validation():
    with pytest.raises(ParameterError):
        SignalPrior(-0.1)
    with pytest.raises(ParameterError):
        SignalPrior(1.1)
    with pytest.raises(ParameterError):
        SignalPrior(0.5, d_epsilon=1.5)
    with pytest.raises(ParameterError):
        # the asymmetry is |eps+ - eps-| / eps, so it is never negative
        SignalPrior(0.5, d_epsilon=-0.2)


def test_moments_point_mass():
    prior = SignalPrior(0.2, 0.5, MagnitudeLaw(kind="point", value=3.0))
    # P(+3) = 0.15, P(-3) = 0.05
    assert prior.mean_entry == pytest.approx((0.15 - 0.05) * 3.0)
    assert prior.second_moment_entry == pytest.approx(0.2 * 9.0)


def test_sample_law_of_large_numbers():
    prior = SignalPrior(0.15, 0.4)
    g = np.random.default_rng(77)
    x = prior.sample(g, 100_000)
    frac_nz = np.mean(x != 0)
    frac_pos = np.mean(x > 0)
    assert abs(frac_nz - 0.15) < 0.01
    assert abs(frac_pos - prior.eps_plus) < 0.01


def test_sample_epsilon_zero_is_zero_vector():
    prior = SignalPrior(0.0)
    x = prior.sample(np.random.default_rng(0), 1000)
    assert np.all(x == 0)


def test_sample_d_epsilon_one_all_positive():
    prior = SignalPrior(0.3, 1.0)
    x = prior.sample(np.random.default_rng(0), 5000)
    assert np.all(x[x != 0] > 0)
    assert np.any(x != 0)


def test_sample_deterministic():
    prior = SignalPrior(0.15)
    a = prior.sample(np.random.default_rng(42), 256)
    b = prior.sample(np.random.default_rng(42), 256)
    assert np.array_equal(a, b)


def test_expected_weighted_norm_sq_identity():
    prior = SignalPrior(0.2, 0.0, MagnitudeLaw(kind="point", value=2.0))
    # identity: E||b||^2_I = p * second moment
    assert expected_weighted_norm_sq(prior, np.eye(10)) == pytest.approx(10 * 0.8)


def test_expected_weighted_norm_sq_correlated_monte_carlo():
    # E b' S b = m2 tr(S) + m1^2 (sum(S) - tr(S)); check by simulation
    prior = SignalPrior(0.3, 0.6, MagnitudeLaw(kind="point", value=1.5))
    model = build(CovarianceSpec(family="ar1", rho=0.5).with_dim(6))
    exact = expected_weighted_norm_sq(prior, model.matrix)
    g = np.random.default_rng(3)
    draws = np.array([
        (b := prior.sample(g, 6)) @ model.matrix @ b for _ in range(200_000)
    ])
    assert abs(draws.mean() - exact) < 4 * draws.std() / np.sqrt(len(draws))


def test_prior_dict_roundtrip():
    prior = SignalPrior(0.15, 0.3, MagnitudeLaw(kind="exponential", value=2.0))
    again = SignalPrior.from_dict(prior.to_dict())
    assert again == prior
