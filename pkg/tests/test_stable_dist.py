"""Tests for univariate and multivariate symmetric stable laws."""

import math
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats as sps
from stable_width.exceptions import DomainError
from stable_width.stable_dist import (
    GaussianCov,
    SpectralMeasure,
    StableParams,
    c_alpha,
    cf_multivariate_sas,
    cf_sas,
    draw_multivariate_sas,
    draw_sas,
    frac_abs_moment,
    moment_constant,
    moment_constants_table,
    sample_multivariate_sas,
    sample_sas,
    write_moment_table,
)
from stable_width.streams import RandomStream

alphas = st.floats(min_value=0.1, max_value=2.0)
ts = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)

def _gen(*key):
    return RandomStream(1234).child(*key).generator()

def test_c_alpha_values():
    """Closed-form constants at familiar indices."""
    assert c_alpha(2.0) == 1.0
    assert c_alpha(1.0) == pytest.approx(math.pi / 2, abs=1e-12)
    assert c_alpha(0.5) == pytest.approx(math.sqrt(math.pi / 2), abs=1e-12)

def test_c_alpha_matches_sine_integral():
    """At alpha = 1 the constant is the Dirichlet integral."""
    si_limit = special.sici(1e9)[0]
    assert c_alpha(1.0) == pytest.approx(si_limit, abs=1e-8)

@pytest.mark.parametrize("alpha", [0.0, -1.0, 2.5, float("nan")])
def test_c_alpha_domain(alpha):
    """alpha outside (0, 2] is rejected."""
    with pytest.raises(DomainError):
        c_alpha(alpha)

def test_stable_params_validation():
    """Negative or infinite scales are rejected."""
    with pytest.raises(DomainError):
        StableParams(1.5, -1.0)
    with pytest.raises(DomainError):
        StableParams(1.5, math.inf)
    assert StableParams(2.0, 1.5).variance == pytest.approx(4.5)
    assert StableParams(1.5, 1.0).variance == math.inf

def test_cf_examples():
    """Direct evaluation of exp(-|sigma t|^alpha)."""
    assert cf_sas(StableParams(2.0, 1.0), 0.0) == 1.0
    assert cf_sas(StableParams(2.0, 1.0), 1.0) == pytest.approx(math.exp(-1))
    assert cf_sas(StableParams(1.0, 2.0), 0.5) == pytest.approx(math.exp(-1))

@given(alpha=alphas, sigma=st.floats(min_value=0.0, max_value=10.0), t=ts)
def test_cf_even_and_homogeneous(alpha, sigma, t):
    """The CF is even in t and depends on sigma only through sigma * t."""
    params = StableParams(alpha, sigma)
    assert cf_sas(params, t) == pytest.approx(cf_sas(params, -t))
    assert cf_sas(params, t) == pytest.approx(cf_sas(StableParams(alpha, 1.0), sigma * t))

@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.5, 2.0])
def test_draws_match_cf(alpha):
    """The empirical CF of draws matches exp(-|t|^alpha)."""
    x = draw_sas(StableParams(alpha, 1.0), 100_000, _gen("cf", int(alpha * 10)))
    t = np.linspace(0.1, 3.0, 15)
    emp = np.cos(np.outer(t, x)).mean(axis=1)
    assert np.max(np.abs(emp - np.exp(-t**alpha))) < 0.015

def test_cauchy_draws_ks():
    """alpha = 1 draws are Cauchy."""
    x = draw_sas(StableParams(1.0, 1.0), 20_000, _gen("cauchy"))
    assert sps.kstest(x, "cauchy").pvalue > 1e-3

def test_gaussian_variance():
    """alpha = 2 is N(0, 2 sigma^2)."""
    x = draw_sas(StableParams(2.0, 1.5), 200_000, _gen("gauss"))
    assert np.var(x) == pytest.approx(4.5, rel=0.02)

def test_stability_under_convolution():
    """X1 + X2 for i.i.d. SaS(alpha, 1) is SaS(alpha, 2^(1/alpha))."""
    alpha = 1.3
    gen = _gen("conv")
    s = draw_sas(StableParams(alpha, 1.0), 100_000, gen) + draw_sas(StableParams(alpha, 1.0), 100_000, gen)
    t = np.linspace(0.05, 2.0, 12)
    emp = np.cos(np.outer(t, s)).mean(axis=1)
    assert np.max(np.abs(emp - cf_sas(StableParams(alpha, 2 ** (1 / alpha)), t))) < 0.015

def test_sample_sas_lineage():
    """sample_sas keeps the stream lineage."""
    batch = sample_sas(StableParams(1.5, 1.0), 10, RandomStream(3).child(1))
    assert batch.values.shape == (10,)
    assert batch.lineage == (3, (1,))

def test_frac_abs_moment():
    """Gaussian second moment, scale homogeneity and the domain."""
    assert frac_abs_moment(StableParams(2.0, 1.0), 2.0) == pytest.approx(2.0)
    one = frac_abs_moment(StableParams(1.5, 1.0), 1.0)
    assert frac_abs_moment(StableParams(1.5, 2.0), 1.0) == pytest.approx(2 * one)
    with pytest.raises(DomainError):
        frac_abs_moment(StableParams(1.5, 1.0), 1.5)
    with pytest.raises(DomainError):
        frac_abs_moment(StableParams(1.5, 1.0), 0.0)

def test_frac_abs_moment_monte_carlo():
    """Closed form agrees with a Monte Carlo average."""
    x = draw_sas(StableParams(1.5, 1.0), 1_000_000, _gen("moment"))
    assert np.mean(np.abs(x) ** 0.5) == pytest.approx(frac_abs_moment(StableParams(1.5, 1.0), 0.5), rel=0.01)

def test_moment_constants_table(tmp_path):
    """The Monte Carlo table skips nu >= alpha and tracks the closed form."""
    rows = moment_constants_table([1.5, 2.0], [0.5, 1.7], seeds=(1, 2), n_draws=200_000, chunk=50_000)
    assert [(r.alpha, r.nu) for r in rows] == [(1.5, 0.5), (2.0, 0.5), (2.0, 1.7)]
    for r in rows:
        assert r.K == pytest.approx(moment_constant(r.alpha, r.nu), rel=0.02)
    path = write_moment_table(rows, tmp_path / "k.csv")
    assert path.read_text().splitlines()[0] == "alpha,nu,K,seeds,n_draws"

def test_spectral_measure_validation():
    """Directions must be unit vectors and weights non-negative."""
    with pytest.raises(DomainError):
        SpectralMeasure.from_atoms(2, [([1.0, 1.0], 1.0)])
    with pytest.raises(DomainError):
        SpectralMeasure.from_atoms(2, [([1.0, 0.0], -1.0)])
    with pytest.raises(DomainError):
        SpectralMeasure.from_vectors([[0.0, 0.0]], [1.0])

def test_spectral_symmetrized():
    """Each atom splits into two antipodal halves."""
    gamma = SpectralMeasure.from_vectors([[3.0, 4.0]], [2.0])
    dirs, weights = gamma.symmetrized()
    np.testing.assert_allclose(dirs, [[0.6, 0.8], [-0.6, -0.8]])
    np.testing.assert_allclose(weights, [1.0, 1.0])
    assert gamma.total_mass == 2.0

def test_spectral_dict_round_trip():
    """to_dict and from_dict preserve atoms."""
    gamma = SpectralMeasure.from_vectors([[1.0, 1.0], [0.0, 2.0]], [0.5, 1.5])
    back = SpectralMeasure.from_dict(gamma.to_dict(1.5))
    np.testing.assert_allclose(back.directions, gamma.directions)
    np.testing.assert_allclose(back.weights, gamma.weights)
    with pytest.raises(DomainError):
        SpectralMeasure.from_dict({"atoms": []})

def test_multivariate_cf_examples():
    """t = 0 gives 1 and an atom on the first axis ignores t2."""
    gamma = SpectralMeasure.from_atoms(2, [([1.0, 0.0], 1.0)])
    assert cf_multivariate_sas(gamma, 1.5, [0.0, 0.0]) == 1.0
    assert cf_multivariate_sas(gamma, 1.5, [0.7, -4.0]) == pytest.approx(math.exp(-(0.7**1.5)))
    with pytest.raises(DomainError):
        cf_multivariate_sas(gamma, 1.5, [1.0, 2.0, 3.0])

@given(w=st.floats(min_value=0.01, max_value=5.0), alpha=alphas, t=ts)
@settings(max_examples=50)
def test_one_dimensional_reduction(w, alpha, t):
    """In dimension 1 the law is SaS(alpha, w^(1/alpha))."""
    gamma = SpectralMeasure.from_atoms(1, [([1.0], w)])
    assert cf_multivariate_sas(gamma, alpha, t) == pytest.approx(cf_sas(StableParams(alpha, w ** (1 / alpha)), t))

def test_multivariate_draws_match_cf():
    """Empirical joint CF of draws matches the spectral CF."""
    gamma = SpectralMeasure.from_vectors([[1.0, 0.0], [1.0, 1.0], [-1.0, 2.0]], [0.5, 1.0, 0.3])
    x = draw_multivariate_sas(gamma, 1.5, 100_000, _gen("mv"))
    grid = np.array([[0.3, 0.2], [1.0, -0.5], [-0.4, 0.9], [0.8, 0.8]])
    emp = np.cos(x @ grid.T).mean(axis=0)
    assert np.max(np.abs(emp - cf_multivariate_sas(gamma, 1.5, grid))) < 0.015
    batch = sample_multivariate_sas(gamma, 1.5, 5, 0)
    assert batch.values.shape == (5, 2)

def test_gaussian_cov():
    """Validation, CF and draws of the Gaussian branch."""
    with pytest.raises(DomainError):
        GaussianCov([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(DomainError):
        GaussianCov([[1.0, 2.0], [2.0, 1.0]])
    cov = GaussianCov([[2.0, 0.5], [0.5, 1.0]])
    assert cov.cf([1.0, 0.0]) == pytest.approx(math.exp(-1.0))
    x = cov.draw(100_000, _gen("cov"))
    np.testing.assert_allclose(np.cov(x.T), cov.matrix, atol=0.05)
