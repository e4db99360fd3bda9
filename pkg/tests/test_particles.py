from __future__ import annotations

import math

import numpy as np
import pytest

from ddsde import drift as dr
from ddsde import euler
from ddsde import grid as gd
from ddsde import initial as ini
from ddsde import particles as pt

M = 20000


@pytest.fixture(scope="module")
def kde_source(grid16):
    return pt.KdeSource(grid16)


def _clt(values, expected, var):
    return abs(values.mean() - expected) <= 4 * math.sqrt(var / len(values))


def test_sample_gaussian_initial():
    e = pt.sample_initial(ini.gaussian([1.0], 0.5), M, seed=3)
    x = e.positions[:, 0]
    assert _clt(x, 1.0, 0.5)
    assert abs(x.var() - 0.5) < 4 * 0.5 * math.sqrt(2 / M)


def test_sample_mixture_weights():
    law = ini.gaussian_mixture([0.25, 0.75], [[-5.0], [5.0]], [0.1, 0.1])
    x = pt.sample_initial(law, M, seed=1).positions[:, 0]
    frac = np.mean(x < 0)
    assert abs(frac - 0.25) < 4 * math.sqrt(0.25 * 0.75 / M)


def test_sample_grid_initial(grid16):
    law = ini.from_grid(gd.uniform_box(grid16, [-1.0], [1.0]))
    x = pt.sample_initial(law, M, seed=2).positions[:, 0]
    assert x.min() >= -1.0 and x.max() <= 1.0
    assert _clt(x, 0.0, 1 / 3)


def test_ensemble_is_read_only():
    e = pt.sample_initial(ini.point_mass([0.0]), 10, seed=0)
    with pytest.raises(ValueError):
        e.positions[0, 0] = 1.0
    with pytest.raises(pt.ParticleError):
        pt.ParticleEnsemble(np.array([[np.nan]]), 0)


def test_zero_drift_terminal_law(kde_source):
    tg = euler.TimeGrid(1.0, 8)
    run = pt.simulate(ini.point_mass([0.0]), dr.zero(), tg, M, 11, kde_source)
    x = run.final.positions[:, 0]
    assert _clt(x, 0.0, 2.0)
    assert abs(x.var() - 2.0) < 4 * 2.0 * math.sqrt(2 / M)


def test_constant_drift_mean(kde_source):
    tg = euler.TimeGrid(1.0, 64)
    run = pt.simulate(ini.point_mass([0.0]), dr.constant(0.5), tg, M, 12, kde_source)
    assert _clt(run.final.positions[:, 0], 0.5 * 63 / 64, 2.0)


@pytest.mark.parametrize("threads", [2, 5])
def test_results_independent_of_threads(threads, gauss05, tanh_drift, grid16):
    tg = euler.TimeGrid(1.0, 4)
    src = pt.KdeSource(grid16)
    one = pt.simulate(gauss05, tanh_drift, tg, 40000, 7, src, threads=1).final.positions
    many = pt.simulate(gauss05, tanh_drift, tg, 40000, 7, src, threads=threads).final.positions
    np.testing.assert_array_equal(one, many)


def test_particle_streams_do_not_depend_on_ensemble_size(gauss05, kde_source):
    tg = euler.TimeGrid(1.0, 4)
    small = pt.simulate(gauss05, dr.zero(), tg, 100, 5, kde_source).final.positions
    large = pt.simulate(gauss05, dr.zero(), tg, 1000, 5, kde_source).final.positions
    np.testing.assert_array_equal(small, large[:100])


def test_kde_of_heat_kernel_sample(grid16):
    # 1e5 samples of g(1) = N(0, 2)
    x = pt.sample_initial(ini.gaussian([0.0], 2.0), 100000, seed=4).positions
    est = pt.kde_grid(x, pt.KdeSpec(), grid16)
    exact = gd.from_initial(ini.gaussian([0.0], 2.0), grid16)
    assert gd.l1_distance(est, exact) <= 0.02


def test_binned_kde_matches_direct_sum(grid16):
    x = pt.sample_initial(ini.gaussian([0.0], 1.0), 5000, seed=9).positions
    q = np.linspace(-3, 3, 41)[:, None]
    binned = gd.interpolate(pt.kde_grid(x, pt.KdeSpec(), grid16), q)
    direct = pt.kde_evaluate(x, pt.KdeSpec(), q)
    np.testing.assert_allclose(binned, direct, atol=1e-4)


def test_silverman_bandwidth():
    x = np.random.default_rng(0).normal(0, 2.0, (10000, 1))
    bw = pt.KdeSpec().bandwidth_for(x)
    assert bw == pytest.approx((4 / 3) ** 0.2 * x.std() * 10000 ** -0.2)


def test_kde_errors():
    with pytest.raises(pt.KdeError):
        pt.KdeSpec("scott")
    with pytest.raises(pt.KdeError):
        pt.KdeSpec("fixed")
    with pytest.raises(pt.KdeError, match="two particles"):
        pt.kde_evaluate(np.zeros((1, 1)), pt.KdeSpec(), [0.0])
    with pytest.raises(pt.KdeError, match="degenerate"):
        pt.kde_evaluate(np.zeros((5, 1)), pt.KdeSpec(), [0.0])


def test_coupled_source_uses_grid_density(grid16, gauss05, tanh_drift):
    tg = euler.TimeGrid(1.0, 4)
    traj = euler.run(gauss05, tanh_drift, grid16, tg)
    traj = [(0.0, gd.from_initial(gauss05, grid16))] + traj
    src = pt.CoupledSource.from_trajectory(traj, tg)
    run = pt.simulate(gauss05, tanh_drift, tg, M, 1, src)
    x = run.final.positions[:, 0]
    assert abs(x.mean() - traj[-1][1].mean()[0]) < 4 * math.sqrt(x.var() / M)


def test_coupled_source_missing_step(grid16, gauss05):
    src = pt.CoupledSource({})
    e = pt.ParticleEnsemble(np.zeros((3, 1)), 0, k=2)
    with pytest.raises(pt.ParticleError, match="step 2"):
        src.density_at(e)


def test_non_finite_particle_is_named(kde_source):
    bad = dr.DriftSpec("bad", lambda t, x, u: np.where(x > 0, np.inf, 0.0), bound=1.0,
                       uses_density=False)
    tg = euler.TimeGrid(1.0, 4)
    e = pt.ParticleEnsemble(np.array([[-1.0], [1.0]]), 0, k=1, time=0.25)
    with pytest.raises(pt.ParticleError, match="particle 1"):
        pt.advance(e, bad, kde_source, tg)


def test_moment_ratio_zero_drift(gauss05, kde_source):
    # E|sqrt(2)(W_t - W_s)|^4 / (t - s)^2 = 12
    tg = euler.TimeGrid(1.0, 8)
    times = [0.0, 0.25, 0.5, 1.0]
    run = pt.simulate(gauss05, dr.zero(), tg, M, 8, kde_source, record_times=times)
    fit = pt.moment_increment_check(run.records, [(0.25, 0.5), (0.5, 1.0), (0.0, 1.0)])
    for key, r in fit.ratios.items():
        assert abs(r - 12.0) <= fit.half_widths[key] * 1.5
    assert fit.constant == max(fit.ratios.values())


def test_moment_check_errors(gauss05, kde_source):
    tg = euler.TimeGrid(1.0, 2)
    run = pt.simulate(gauss05, dr.zero(), tg, 10, 0, kde_source)
    with pytest.raises(ValueError, match="s == t"):
        pt.moment_increment_check(run.records, [(1.0, 1.0)])
    with pytest.raises(ValueError, match="t=0.5"):
        pt.moment_increment_check(run.records, [(0.0, 0.5)])
    with pytest.raises(ValueError, match="no increment"):
        pt.moment_increment_check(run.records, [])


def test_empirical_expectation():
    x = np.random.default_rng(0).normal(size=(10000, 1))
    mean, hw = pt.empirical_expectation(x, lambda p: np.cos(p[:, 0]), 1.0)
    assert abs(mean - math.exp(-0.5)) < hw
    assert hw <= 3 / math.sqrt(10000)
    with pytest.raises(ValueError, match="bound"):
        pt.empirical_expectation(x, lambda p: 2 * np.cos(p[:, 0]), 1.0)
