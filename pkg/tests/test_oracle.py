import json
import math

import numpy as np
import pytest
from scipy import stats

from gevre import gev
from gevre.blocks import BlockSeries
from gevre.errors import DataError, ParameterDomainError
from gevre.mcmc import McmcConfig, run_chain, summarize
from gevre.model import ModelSpec
from gevre.oracle import mle_fit, simulate_panel

TRUTH = gev.GevParams(3.0, 1.5, 0.2)


def loglik(p, x):
    return float(np.sum(stats.genextreme.logpdf(x, -p.eps, loc=p.mu, scale=p.sigma)))


@pytest.fixture(scope="module")
def big_sample():
    return gev.sample(TRUTH, 1000, np.random.default_rng(20))


def test_mle_recovers_truth(big_sample):
    fit = mle_fit(big_sample)
    assert fit.converged and not fit.boundary
    assert abs(fit.params.mu - 3.0) < 0.1
    assert abs(fit.params.sigma - 1.5) < 0.1
    assert abs(fit.params.eps - 0.2) < 0.05
    assert fit.n == 1000


def test_optimum_beats_truth(big_sample):
    fit = mle_fit(big_sample)
    assert fit.log_likelihood_at_max >= loglik(TRUTH, big_sample)
    # reported maximum is the scipy log-likelihood at the reported point
    assert fit.log_likelihood_at_max == pytest.approx(loglik(fit.params, big_sample), rel=1e-10)


def test_covariance_symmetric_psd(big_sample):
    cov = mle_fit(big_sample).covariance
    np.testing.assert_array_equal(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() > 0


def test_return_level_delta_method(big_sample):
    fit = mle_fit(big_sample)
    point, lo, hi = fit.return_level_ci(10)
    assert point == pytest.approx(gev.return_level(fit.params, 10), rel=1e-12)
    assert lo < point < hi
    assert lo < gev.return_level(TRUTH, 10) < hi
    out = json.loads(fit.to_json(ks=[10]))
    assert out["return_levels"]["10"]["lower95"] == lo


def test_mle_agrees_with_posterior_mean(big_sample):
    fit = mle_fit(big_sample)
    s = summarize(run_chain(ModelSpec(BlockSeries.from_values(big_sample)), McmcConfig(seed=2)))
    for name, v in (("mu", fit.params.mu), ("sigma", fit.params.sigma), ("eps", fit.params.eps)):
        assert abs(s[name].mean - v) < 3 * s[name].sd, name


def test_wald_coverage():
    hits = dict(mu=0, sigma=0, eps=0)
    seeds = np.random.SeedSequence(99).spawn(50)
    for ss in seeds:
        fit = mle_fit(gev.sample(TRUTH, 200, np.random.default_rng(ss)))
        for name in hits:
            lo, hi = fit.ci95[name]
            hits[name] += lo <= getattr(TRUTH, name) <= hi
    assert min(hits.values()) >= 42, hits


@pytest.mark.parametrize("values", [
    [5.0] * 10,
    [5.0] * 9 + [5.0 + 1e-12],
    [1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0],
])
def test_degenerate_input_never_crashes(values):
    fit = mle_fit(values)
    assert (not fit.converged) or fit.boundary or np.all(np.isfinite(fit.covariance))
    json.loads(fit.to_json(ks=[10]))


def test_constant_data_flagged():
    fit = mle_fit([5.0] * 10)
    assert not fit.converged or fit.boundary


def test_too_few_maxima():
    with pytest.raises(DataError, match="at least 10"):
        mle_fit(np.arange(9.0))


def test_mle_accepts_block_series(big_sample):
    a = mle_fit(big_sample[:100])
    b = mle_fit(BlockSeries.from_values(big_sample[:100]))
    assert a.params == b.params


# --- synthetic panels -----------------------------------------------------

def test_panel_tau_zero_matches_sample_exactly():
    p = simulate_panel({"mu": 18, "sigma": 3, "eps": 0.1, "tau": 0}, 1, 100, seed=7)
    expect = gev.sample(gev.GevParams(18, 3, 0.1), 100, np.random.default_rng(7))
    np.testing.assert_array_equal(p.data.values, expect)
    assert p.deltas == {"g01": 0.0}


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_panel_tau_zero_distribution(seed):
    p = simulate_panel((2.0, 1.0, -0.1, 0.0), 1, 500, seed)
    assert stats.kstest(p.data.values, stats.genextreme(0.1, loc=2.0, scale=1.0).cdf).pvalue > 0.01


def test_panel_tau_inflates_group_mean_variance():
    spreads = {}
    for tau in (0.0, 5.0):
        p = simulate_panel({"mu": 18, "sigma": 3, "eps": 0.1, "tau": tau}, 12, 50, seed=3)
        x = p.data.values.reshape(12, 50)
        spreads[tau] = x.mean(axis=1).var(ddof=1)
    # one-sided F test on the group-mean variances (11, 11 df)
    f = spreads[5.0] / spreads[0.0]
    assert stats.f.sf(f, 11, 11) < 0.01


def test_panel_replay_and_layout():
    a = simulate_panel({"mu": 0, "sigma": 1, "eps": 0, "tau": 2}, 3, 4, seed=11)
    b = simulate_panel({"mu": 0, "sigma": 1, "eps": 0, "tau": 2}, 3, 4, seed=11)
    assert a.data == b.data and a.deltas == b.deltas
    assert a.data.tag_values("group") == ["g01"] * 4 + ["g02"] * 4 + ["g03"] * 4
    assert a.data.labels[:2] == ["g01-0001", "g01-0002"]
    assert a.to_dict()["groups"] == 3


def test_panel_validation():
    with pytest.raises(DataError):
        simulate_panel((0, 1, 0, 0), 0, 5, 1)
    with pytest.raises(ParameterDomainError):
        simulate_panel((0, 1, 0, -1), 2, 5, 1)
    with pytest.raises(ParameterDomainError):
        simulate_panel((0, -1, 0, 0), 2, 5, 1)


def test_random_effects_are_recorded():
    p = simulate_panel({"mu": 0, "sigma": 1, "eps": 0, "tau": 3}, 5, 2000, seed=1)
    x = p.data.values.reshape(5, 2000)
    # group means minus the Gumbel mean track the drawn effects
    for g, row in zip(sorted(p.deltas), x):
        assert abs(row.mean() - 0.5772156649 - p.deltas[g]) < 0.15
    assert not math.isclose(np.std(list(p.deltas.values())), 0.0)
