import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import fit_from_blocks
from riv.errors import CovarianceError, TuningError, ValidationError
from riv.mvn import cholesky_jittered
from riv.sampling import (
    SamplingConfig,
    SamplingReport,
    hull,
    initial_lambda,
    mvn_sample,
    sampled_interval,
    sampling_ci,
    scan_draws,
    tune_lambda,
)
from riv.searching import Interval, make_grid, searching_ci
from test_searching import random_instance


def test_zero_covariance_draws_equal_estimates():
    fit = fit_from_blocks([1.0, 2.0], [0.5, 0.7], s_ee=0, s_dd=0, s_ed=0)
    G, g = mvn_sample(fit, 5, np.random.default_rng(0))
    np.testing.assert_array_equal(G, np.tile(fit.Gamma_hat, (5, 1)))
    np.testing.assert_array_equal(g, np.tile(fit.gamma_hat, (5, 1)))


def test_draw_moments():
    fit = fit_from_blocks([0.3], [-0.2], n=1)
    M = 100_000
    G, g = mvn_sample(fit, M, np.random.default_rng(1))
    assert abs(G.mean() - 0.3) < 4 / math.sqrt(M)
    assert abs(g.mean() + 0.2) < 4 / math.sqrt(M)
    assert abs(np.corrcoef(G[:, 0], g[:, 0])[0, 1]) < 0.02


def test_draws_deterministic():
    fit = fit_from_blocks([1.0, 2.0], [0.5, 0.7], s_ed=0.3)
    a = mvn_sample(fit, 50, np.random.default_rng(7))
    b = mvn_sample(fit, 50, np.random.default_rng(7))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_cholesky_jitter_and_failure():
    singular = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = cholesky_jittered(singular)
    np.testing.assert_allclose(L @ L.T, singular, atol=1e-6)
    with pytest.raises(CovarianceError):
        cholesky_jittered(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(CovarianceError):
        cholesky_jittered(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_point_estimate_sample_matches_searching():
    fit, pts = random_instance(np.random.default_rng(4), p=5, B=300)
    V = list(range(5))
    ci = searching_ci(fit, V, pts, 1.2)
    iv = sampled_interval(fit, V, pts, 1.2, 1.0, (fit.Gamma_hat, fit.gamma_hat))
    assert (iv is None) == ci.empty
    if iv is not None:
        assert iv == (ci.lo, ci.hi)


def test_vanishing_lambda_empties_noisy_draws():
    fit = fit_from_blocks([1.0, 1.0, 1.0, 1.0, 1.0], np.ones(5), n=2000)
    grid = make_grid(0.8, 1.2, 2000)
    draws = mvn_sample(fit, 200, np.random.default_rng(0))
    lo, _ = scan_draws(fit, range(5), grid, 2.0, 1e-6, *draws)
    assert np.mean(lo < 0) > 0.95


def test_sampled_interval_rejects_bad_lambda():
    fit = fit_from_blocks([1.0], [1.0])
    with pytest.raises(ValidationError):
        sampled_interval(fit, [0], np.array([1.0]), 1.0, 0.0, (fit.Gamma_hat, fit.gamma_hat))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0), st.floats(0.05, 1.0))
def test_sampled_interval_matches_brute_force(seed, rho, lam):
    rng = np.random.default_rng(seed)
    fit, pts = random_instance(rng)
    V = list(range(fit.p_z))
    Gm, gm = (x[0] for x in mvn_sample(fit, 1, rng))
    iv = sampled_interval(fit, V, pts, rho, lam, (Gm, gm))
    VG, Vg, C = oracles.diag_blocks(fit, V)
    ref = oracles.scan(list(Gm), list(gm), VG, Vg, C, list(pts), rho, lam)
    assert iv == (None if ref is None else (pts[ref[0]], pts[ref[1]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_larger_lambda_contains(seed, l1, l2):
    l1, l2 = sorted((l1, l2))
    rng = np.random.default_rng(seed)
    fit, pts = random_instance(rng)
    V = list(range(fit.p_z))
    draws = mvn_sample(fit, 30, rng)
    a_lo, a_hi = scan_draws(fit, V, pts, 1.5, l1, *draws)
    b_lo, b_hi = scan_draws(fit, V, pts, 1.5, l2, *draws)
    for m in range(30):
        if a_lo[m] >= 0:
            assert b_lo[m] >= 0 and b_lo[m] <= a_lo[m] and a_hi[m] <= b_hi[m]


def test_initial_lambda_value():
    assert initial_lambda(2000, 1000, 10) == pytest.approx(0.1306, abs=5e-5)
    assert initial_lambda(2000, 1000, 10) == pytest.approx(
        (1 / 6) * (math.log(2000) / 1000) ** 0.05, rel=1e-14)


def test_tune_returns_initial_when_enough_nonempty():
    fit = fit_from_blocks(np.ones(4), np.ones(4), n=2000)
    grid = make_grid(0.8, 1.2, 2000)
    draws = mvn_sample(fit, 100, np.random.default_rng(0))
    cfg = SamplingConfig(M=100)
    lam, trace = tune_lambda(fit, range(4), grid, 1e6, cfg, draws)
    assert lam == initial_lambda(2000, 100, 4) and len(trace) == 1


def test_tune_picks_first_passing_step():
    fit = fit_from_blocks(np.ones(6), np.ones(6), n=2000)
    grid = make_grid(0.8, 1.2, 2000)
    cfg = SamplingConfig(M=300)
    draws = mvn_sample(fit, 300, np.random.default_rng(5))
    lam, trace = tune_lambda(fit, range(6), grid, 2.5, cfg, draws)
    assert trace[-1] == (lam, trace[-1][1]) and trace[-1][1] > 0.05
    assert all(f <= 0.05 for _, f in trace[:-1])
    for (a, _), (b, _) in zip(trace, trace[1:]):
        assert b == pytest.approx(1.25 * a)


def test_tune_exhausted():
    fit = fit_from_blocks([1.0, 2.0, 3.0], [1.0, 1.0, 1.0], n=10**6)
    grid = make_grid(0.0, 0.5, 100)
    cfg = SamplingConfig(M=20, max_tune_steps=4)
    draws = mvn_sample(fit, 20, np.random.default_rng(0))
    with pytest.raises(TuningError) as exc:
        tune_lambda(fit, range(3), grid, 1.0, cfg, draws)
    assert len(exc.value.fractions) == 4


def test_single_degenerate_draw_equals_searching():
    fit0, pts = random_instance(np.random.default_rng(11), p=4, B=200)
    fit = fit_from_blocks(fit0.Gamma_hat, fit0.gamma_hat, fit0.n, fit0.sigma_eps_sq,
                          fit0.sigma_delta_sq, fit0.sigma_eps_delta, fit0.Omega_hat)
    zero = fit.with_covariance(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))
    # thresholds still come from the original fit
    draws = mvn_sample(zero, 1, np.random.default_rng(0))
    rep = sampling_ci(fit, range(4), pts, 1.0, SamplingConfig(M=1, lam=1.0), draws=draws)
    ci = searching_ci(fit, range(4), pts, 1.0)
    assert rep.ci.empty == ci.empty
    if not ci.empty:
        assert (rep.ci.lo, rep.ci.hi) == (ci.lo, ci.hi)


def test_hull_of_supplied_intervals():
    ivs = [(0.9, 1.1), None, (0.95, 1.2)]
    assert hull(ivs) == (0.9, 1.2)
    rep = SamplingReport(0.5, ivs, Interval(0.9, 1.2), 3)
    assert rep.nonempty_count == 2 and rep.nonempty_indices == [0, 2]
    assert hull([None, None]) is None


def test_sampling_report_is_hull_and_deterministic():
    fit = fit_from_blocks([1.0, 1.0, 1.0, 1.1, 1.6], np.ones(5), n=2000)
    grid = make_grid(0.7, 1.8, 2000)
    a = sampling_ci(fit, range(5), grid, 2.3, SamplingConfig(M=200), rng=3)
    b = sampling_ci(fit, range(5), grid, 2.3, SamplingConfig(M=200), rng=3)
    kept = [iv for iv in a.intervals if iv is not None]
    assert a.ci.lo == min(lo for lo, _ in kept) and a.ci.hi == max(hi for _, hi in kept)
    assert a.nonempty_count == len(kept) > 0.05 * 200
    assert (a.ci.lo, a.ci.hi, a.lambda_used) == (b.ci.lo, b.ci.hi, b.lambda_used)
    assert a.intervals == b.intervals
    d = a.to_dict(include_samples=True)
    assert set(d) >= {"lambda", "M", "nonempty_count", "ci", "per_sample"}
    assert "per_sample" not in a.to_dict()


def test_config_validation():
    with pytest.raises(ValidationError):
        SamplingConfig(M=0)
    with pytest.raises(ValidationError):
        SamplingConfig(lam=-1.0)
    with pytest.raises(ValidationError):
        SamplingConfig(min_nonempty_frac=1.0)
