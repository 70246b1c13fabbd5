import math

import numpy as np
import pytest

import oracles
from simulate import gaussian_data, poisson_data
from sustainq.bayes import (
    GaussianLogModel,
    Hdi,
    InsufficientData,
    ModelConfig,
    ModelNotApplicable,
    PoissonLogModel,
    decide_from_hdi,
    decide_impact,
    diagnose,
    effect_gaussian,
    effect_poisson,
    ess,
    fit,
    hdi,
    observations_from_arrays,
    posterior_predictive_check,
    prepare_observations,
    split_rhat,
    standardize,
)

FAST = ModelConfig(chains=4, draws=1000, warmup=500, seed=3)


# ---- standardization

def test_standardize_small_vector():
    z, mean, sd = standardize([1, 2, 3])
    assert np.allclose(z, [-1, 0, 1])
    assert (mean, sd) == (2.0, 1.0)


def test_standardize_constant_rejected():
    with pytest.raises(ValueError):
        standardize([4, 4, 4])


def test_standardize_inverse_round_trip():
    x = np.random.default_rng(0).gamma(2.0, 10.0, 50)
    z, mean, sd = standardize(x)
    assert np.max(np.abs(z * sd + mean - x)) < 1e-9


# ---- observation sets

def tables(xs, ys, predictor="STA-2", quality="SWQ-2.6"):
    metrics = {f"p{i}": {predictor: x} for i, x in enumerate(xs)}
    qual = {f"p{i}": {quality: y} for i, y in enumerate(ys)}
    return metrics, qual


def test_zero_outcomes_dropped_from_gaussian():
    m, q = tables(range(1, 16), [0, 0, 0] + [float(k) for k in range(1, 13)])
    obs = prepare_observations(m, q, "STA-2", "SWQ-2.6")
    assert (obs.n, obs.n_excluded) == (12, 3)


def test_poisson_rejects_excluded_predictors():
    m, q = tables(range(1, 16), range(15), "STA-4", "SWQ-2.2")
    with pytest.raises(ModelNotApplicable):
        prepare_observations(m, q, "STA-4", "SWQ-2.2")


def test_poisson_drops_nonpositive_predictor():
    m, q = tables([0] + list(range(1, 15)), range(15), "STA-2", "SWQ-2.2")
    obs = prepare_observations(m, q, "STA-2", "SWQ-2.2")
    assert (obs.n, obs.n_excluded) == (14, 1)
    assert np.allclose(obs.predictor(), np.log(obs.x))


def test_too_few_rows():
    m, q = tables(range(1, 10), range(1, 10))
    with pytest.raises(InsufficientData) as err:
        prepare_observations(m, q, "STA-2", "SWQ-2.6")
    assert err.value.n_included == 9


def test_missing_values_excluded():
    m, q = tables(range(1, 13), range(1, 13))
    m["p0"]["STA-2"] = None
    q["extra"] = {"SWQ-2.6": 3.0}
    obs = prepare_observations(m, q, "STA-2", "SWQ-2.6")
    assert (obs.n, obs.n_excluded) == (11, 2)


def test_dormancy_groups():
    m, q = tables([0, 1] * 6, range(1, 13), "STA-6", "SWQ-2.6")
    obs = prepare_observations(m, q, "STA-6", "SWQ-2.6")
    assert obs.predictor() is None
    assert obs.model().param_names == ("beta", "delta_dormant", "delta_non_dormant", "sigma")


# ---- HDI

def test_hdi_constant_samples():
    h = hdi(np.full(500, 2.5))
    assert (h.low, h.high) == (2.5, 2.5)


@pytest.mark.parametrize("seed", range(10))
def test_hdi_equals_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    xs = rng.standard_t(3, size=int(rng.integers(1, 400)))
    h = hdi(xs, 0.9)
    assert (h.low, h.high) == oracles.narrowest_window(xs, 0.9)


def test_hdi_narrower_than_equal_tailed_when_skewed():
    xs = np.random.default_rng(1).exponential(size=4000)
    h = hdi(xs)
    lo, hi = np.quantile(xs, [0.025, 0.975])
    assert h.high - h.low < hi - lo
    assert np.mean((xs >= h.low) & (xs <= h.high)) >= 0.95


def test_hdi_tie_goes_low():
    h = hdi([0.0, 1.0, 2.0, 3.0], 0.5)
    assert (h.low, h.high) == (0.0, 1.0)


def test_hdi_mass_bounds():
    with pytest.raises(ValueError):
        hdi([1.0, 2.0], 1.0)


# ---- diagnostics

def test_rhat_iid_chains_near_one():
    draws = np.random.default_rng(2).standard_normal((4, 3000))
    assert 0.99 <= split_rhat(draws) <= 1.01
    assert ess(draws) > 8000


def test_rhat_detects_separated_chains():
    draws = np.random.default_rng(2).standard_normal((4, 1000)) + np.arange(4)[:, None]
    assert split_rhat(draws) > 1.5
    assert not diagnose(draws).ok


def test_constant_chain_not_ok():
    d = diagnose(np.ones((4, 500)))
    assert d.ess == 0.0 and math.isnan(d.rhat) and not d.ok


def test_duplicated_draws_keep_distinct_count():
    # each draw repeated twice: lag-1 autocorrelation 1/2, so ESS stays at the distinct count
    base = np.random.default_rng(4).standard_normal((4, 2000))
    doubled = np.repeat(base, 2, axis=1)
    assert 0.9 < ess(doubled) / base.size < 1.1


# ---- decisions

def test_straddling_interval_is_no_evidence():
    d = decide_from_hdi(Hdi(-0.16, 0.29, 0.95), "STA-2", "SWQ-2.6")
    assert (d.direction, d.quality_impact, d.symbol()) == ("NoEvidence", "None", "✗")


def test_positive_interval_on_lower_is_better():
    d = decide_from_hdi(Hdi(0.13, 0.23, 0.95), "STA-3", "SWQ-2.3")
    assert (d.direction, d.quality_impact, d.symbol()) == ("Increase", "Degrades", "−")


def test_negative_interval_on_coverage_degrades():
    d = decide_from_hdi(Hdi(-0.5, -0.1, 0.95), "STA-3", "SWQ-2.1")
    assert (d.direction, d.quality_impact, d.symbol()) == ("Decrease", "Degrades", "−")


def test_zero_endpoint_is_no_evidence():
    assert decide_from_hdi(Hdi(0.0, 0.4, 0.95), "STA-3", "SWQ-2.6").direction == "NoEvidence"


def test_flip_rendering_only_for_flip_set():
    for sust, flipped in (("STA-2", "+"), ("STA-3", "−")):
        d = decide_from_hdi(Hdi(0.1, 0.2, 0.95), sust, "SWQ-2.6")
        assert d.symbol(flip=True) == flipped


def test_decision_invariances():
    rng = np.random.default_rng(9)
    for _ in range(50):
        lo, hi = sorted(rng.normal(0, 1, 2))
        d = decide_from_hdi(Hdi(lo, hi, 0.95), "STA-3", "SWQ-2.6")
        neg = decide_from_hdi(Hdi(-hi, -lo, 0.95), "STA-3", "SWQ-2.6")
        if d.direction == "NoEvidence":
            assert neg.direction == "NoEvidence"
        else:
            assert neg.direction != d.direction and neg.quality_impact != d.quality_impact
        # shifting away from zero never turns evidence into no evidence
        if lo > 0:
            assert decide_from_hdi(Hdi(lo + 1, hi + 1, 0.95), "STA-3", "SWQ-2.6").direction == "Increase"


# ---- effects

def test_gaussian_effect_percent():
    e = effect_gaussian(Hdi(-0.16, 0.29, 0.95))
    assert e.low == pytest.approx(-14.79, abs=0.1)
    assert e.high == pytest.approx(33.64, abs=0.1)
    assert e.unit == "percent"


def test_poisson_effect_tenth():
    e = effect_poisson(Hdi(0.13, 0.23, 0.95), predictor_mean=40.0)
    assert (e.low, e.high) == pytest.approx((0.013, 0.023), abs=1e-15)
    assert e.predictor_change == 4.0


# ---- model densities

def finite_difference(model, q, h=1e-6):
    grad = np.empty_like(q)
    for j in range(len(q)):
        up, down = q.copy(), q.copy()
        up[j] += h
        down[j] -= h
        grad[j] = (model.logp_grad(up)[0][0] - model.logp_grad(down)[0][0]) / (2 * h)
    return grad


@pytest.mark.parametrize("grouped", [False, True])
def test_gradients_match_finite_differences(grouped):
    rng = np.random.default_rng(5)
    x = rng.standard_normal(30)
    groups = (x > 0).astype(float) if grouped else None
    xs = None if grouped else x
    for model in (GaussianLogModel(rng.standard_normal(30), xs, groups),
                  PoissonLogModel(rng.poisson(3.0, 30), xs, groups)):
        q = rng.normal(0, 0.3, model.dim)
        _, grad = model.logp_grad(q)
        assert np.allclose(grad[0], finite_difference(model, q), rtol=1e-5, atol=1e-5)


def test_sigma_stays_in_prior_support():
    model = GaussianLogModel(np.zeros(5), np.arange(5.0))
    sig = model.constrain(np.array([[0, 0, -50.0], [0, 0, 50.0]]))[:, -1]
    assert 1e-3 <= sig[0] < sig[1] <= 10.0


# ---- fitting

def test_gaussian_fit_recovers_slope():
    post = fit(gaussian_data(0), FAST)
    assert post.converged
    assert abs(post.samples["alpha"].mean() - 0.5) < 0.1
    assert 0.5 in post.hdi("alpha")


def test_poisson_fit_recovers_slope():
    post = fit(poisson_data(0), FAST)
    assert post.converged
    assert abs(post.samples["alpha"].mean() - 0.3) < 0.1


def test_fit_is_reproducible():
    obs = gaussian_data(1, n=60)
    a, b = fit(obs, FAST), fit(obs, FAST)
    for name in a.param_names:
        assert np.array_equal(a.samples[name], b.samples[name])
    c = fit(obs, ModelConfig(chains=4, draws=1000, warmup=500, seed=4))
    assert not np.array_equal(a.samples["alpha"], c.samples["alpha"])


def test_standardization_makes_units_irrelevant():
    obs = gaussian_data(2, n=80)
    hours = observations_from_arrays(obs.x / 3600.0, obs.y, "gaussian")
    a, b = fit(obs, FAST), fit(hours, FAST)
    assert np.allclose(obs.predictor(), hours.predictor())
    diff = abs(a.samples["alpha"].mean() - b.samples["alpha"].mean())
    assert diff < 2 * max(a.diagnostics["alpha"].mcse, b.diagnostics["alpha"].mcse) + 1e-12


def test_dormancy_fit_gives_three_decisions():
    rng = np.random.default_rng(6)
    g = np.array([0, 1] * 30)
    y = np.exp(1.0 + 0.8 * g + 0.3 * rng.standard_normal(60))
    obs = observations_from_arrays(g, y, "gaussian", predictor_id="STA-6", quality_id="SWQ-2.6")
    decisions = decide_impact(fit(obs, FAST), "STA-6", "SWQ-2.6")
    by_id = {d.sust_id: d for d in decisions}
    assert set(by_id) == {"STA-6:dormant", "STA-6:non-dormant", "STA-6:contrast"}
    assert by_id["STA-6:contrast"].direction == "Increase"


def test_constant_outcome_handled():
    x = np.arange(1.0, 21.0)
    obs = observations_from_arrays(x, np.full(20, 5.0), "gaussian")
    post = fit(obs, FAST)
    # sigma collapses onto its lower bound; the slope is pinned at zero either way
    assert abs(post.samples["alpha"].mean()) < 0.01
    if post.converged:
        assert decide_impact(post, "X", "Y")[0].direction == "NoEvidence"


def test_all_zero_counts_handled():
    x = np.arange(1.0, 21.0)
    post = fit(observations_from_arrays(x, np.zeros(20), "poisson"), FAST)
    assert np.all(np.isfinite(post.samples["beta"]))
    assert post.samples["beta"].mean() < -1.0


def test_non_converged_fit_has_no_decision():
    post = fit(gaussian_data(3, n=40), FAST)
    post.converged = False
    assert decide_impact(post, "STA-2", "SWQ-2.6") == []


def test_mismatched_kind_rejected():
    from sustainq.bayes import fit_poisson
    with pytest.raises(ValueError):
        fit_poisson(gaussian_data(0, n=20), FAST)


# ---- posterior predictive check

def test_ppc_accepts_well_specified_model():
    obs = gaussian_data(4, n=100)
    check = posterior_predictive_check(fit(obs, FAST), obs, seed=1)
    assert not check.flagged


def test_ppc_flags_shifted_outcome():
    obs = gaussian_data(4, n=100)
    post = fit(obs, FAST)
    shifted = observations_from_arrays(obs.x, obs.y * math.exp(10.0), "gaussian")
    assert posterior_predictive_check(post, shifted, seed=1).flagged


def test_ppc_flags_zero_variance_replicates():
    obs = poisson_data(5, n=100)
    post = fit(obs, FAST)
    for name in post.param_names:
        post.samples[name] = np.zeros_like(post.samples[name])
    post.samples["beta"][:] = -40.0  # replicates are all zero
    assert posterior_predictive_check(post, obs, seed=1).flagged
