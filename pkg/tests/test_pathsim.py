from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, stats

from besselbarrier import core, hitting, pathsim
from besselbarrier.core import BarrierSpec, Dim
from besselbarrier.errors import DomainError


def _bridge_cdf(dim, x, y, t1, t2):
    grid = np.linspace(0, 6, 3001)
    pdf = core.bridge_transition_density(dim, x, grid, y, t1, t2)
    cdf = integrate.cumulative_trapezoid(pdf, grid, initial=0)
    cdf /= cdf[-1]
    return lambda z: np.interp(z, grid, cdf)


def test_endpoints_exact_and_positive():
    path = pathsim.sample_bridge(Dim(2.5), 0.3, 1.7, 2.0, n_points=64, rng=1, n_paths=500)
    assert np.all(path.values[:, 0] == 0.3) and np.all(path.values[:, -1] == 1.7)
    assert np.all(path.values >= 0)
    assert path.times[0] == 0 and path.times[-1] == 2.0 and path.values.shape == (500, 65)
    single = pathsim.sample_bridge(Dim(0.5), 0.0, 0.0, 1.0, n_points=8, rng=2)
    assert single.values.shape == (9,) and single.meta["d_dual"] == 3.5


def test_midpoint_marginal_against_density():
    dim = Dim(3)
    vals = pathsim.sample_bridge(dim, 0.4, 1.2, 1.0, n_points=2, rng=3, n_paths=100_000).values[:, 1]
    ks = stats.kstest(vals, _bridge_cdf(dim, 0.4, 1.2, 0.5, 0.5)).statistic
    assert ks <= 0.01


def test_quarter_point_marginal_in_low_dimension():
    # d = 1 runs as its dual 3; the quarter point tests the nested dyadic filling
    vals = pathsim.sample_bridge(Dim(1), 1.0, 0.5, 1.0, n_points=4, rng=4, n_paths=50_000).values[:, 1]
    ks = stats.kstest(vals, _bridge_cdf(Dim(3), 1.0, 0.5, 0.25, 0.75)).statistic
    assert ks <= 0.01


def test_reversal_mean_curves():
    n = 20_000
    fwd = pathsim.sample_bridge(Dim(2.5), 0.5, 1.5, 1.0, n_points=16, rng=5, n_paths=n).values
    bwd = pathsim.sample_bridge(Dim(2.5), 1.5, 0.5, 1.0, n_points=16, rng=6, n_paths=n).values[:, ::-1]
    se = np.hypot(fwd.std(axis=0), bwd.std(axis=0)) / math.sqrt(n)
    inner = slice(1, -1)
    assert np.all(np.abs(fwd.mean(axis=0) - bwd.mean(axis=0))[inner] <= 3.5 * se[inner])


def test_grid_must_be_power_of_two():
    with pytest.raises(DomainError):
        pathsim.sample_bridge(Dim(2), 1, 1, 1, n_points=12)


def test_start_above_barrier_gives_zero():
    est = pathsim.estimate_barrier(Dim(2), BarrierSpec(1, 1, 10, 1, 1.5), n_samples=100, seed=0)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_monotone_in_intercept():
    kw = dict(n_samples=20_000, n_points=128, seed=7)
    lo = pathsim.estimate_barrier(Dim(2), BarrierSpec(3, 1, 50, 1, 1), **kw)
    hi = pathsim.estimate_barrier(Dim(2), BarrierSpec(4, 1, 50, 1, 1), stream=1, **kw)
    assert hi.mean - lo.mean >= -3 * math.hypot(lo.stderr, hi.stderr)
    assert hi.mean > lo.mean


def test_duality_against_reduced_problem():
    spec = BarrierSpec(3, 1, 10, 1, 1)
    direct = pathsim.estimate_barrier(Dim(1), spec, n_samples=20_000, n_points=128, seed=8)
    flat = core.linear_to_flat(spec, Dim(1))
    assert flat.dim.d == 3
    reduced = pathsim.estimate_flat(flat.dim, flat.delta, flat.y, flat.u, n_samples=20_000, n_points=128,
                                    seed=9)
    assert direct.estimate.agrees_with(reduced.mean, other_se=reduced.stderr)


def test_grid_refinement_and_correction():
    spec = BarrierSpec(5, 1, 20, 1, 1)
    kw = dict(n_samples=20_000, n_points=256, seed=1)
    bb = pathsim.estimate_barrier(Dim(2), spec, correction="brownian_bridge", **kw)
    raw = pathsim.estimate_barrier(Dim(2), spec, correction="none", **kw)
    (_, fine), (_, coarse) = bb.grid_levels[:2]
    assert abs(fine - coarse) < max(2 * bb.stderr, 0.1 * fine)
    raw_drift = abs(raw.grid_levels[0][1] - raw.grid_levels[1][1])
    assert abs(fine - coarse) * 1.5 <= raw_drift
    # uncorrected grid estimates overshoot and decrease under refinement
    raw_levels = [v for _, v in raw.grid_levels]
    assert all(a <= b for a, b in zip(raw_levels, raw_levels[1:]))


def test_estimates_reproducible_for_seed_and_threads():
    spec = BarrierSpec(4, 1, 20, 1, 1)
    a = pathsim.estimate_barrier(Dim(3), spec, n_samples=5000, n_points=64, seed=3, threads=2)
    b = pathsim.estimate_barrier(Dim(3), spec, n_samples=5000, n_points=64, seed=3, threads=2)
    c = pathsim.estimate_barrier(Dim(3), spec, n_samples=5000, n_points=64, seed=3, threads=1)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    assert a.mean == pytest.approx(c.mean, abs=1e-12)


def test_first_hitting_near_level():
    h = pathsim.sample_first_hitting(Dim(3), 1 - 1e-4, horizon=0.01, n_points=2**13, rng=10,
                                     n_samples=10_000)
    assert np.median(h) < 1e-3


def test_first_hitting_censoring():
    h = pathsim.sample_first_hitting(Dim(3), 0.1, horizon=1e-3, n_points=64, rng=11, n_samples=1000)
    assert np.all(np.isinf(h))
    with pytest.raises(DomainError):
        pathsim.sample_first_hitting(Dim(3), 1.0)


def test_first_hitting_scaling():
    c = 4.0
    n = 100_000
    base = pathsim.sample_first_hitting(Dim(4), 0.8, 1.0, horizon=1.5, n_points=2**13, rng=12, n_samples=n)
    scaled = pathsim.sample_first_hitting(Dim(4), 0.8 * math.sqrt(c), math.sqrt(c), horizon=1.5 * c,
                                          n_points=2**13, rng=13, n_samples=n) / c
    assert stats.ks_2samp(np.minimum(base, 9), np.minimum(scaled, 9)).statistic <= 0.01


def test_first_hitting_against_exponential_sum():
    n = 100_000
    path = pathsim.sample_first_hitting(Dim(4), 0.8, horizon=1.5, n_points=2**13, rng=14, n_samples=n)
    tau = hitting.sample_taus(hitting.hitting_model(Dim(4), 0.2), n, np.random.default_rng(15))
    tau = np.where(tau > 1.5, np.inf, tau)
    assert stats.ks_2samp(np.minimum(path, 9), np.minimum(tau, 9)).statistic <= 0.01
