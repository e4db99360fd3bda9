from __future__ import annotations

import numpy as np
import pytest

from ddsde import drift as dr
from ddsde import euler
from ddsde import fpe
from ddsde import grid as gd
from ddsde import initial as ini

BOX = 12.0
G0 = ini.gaussian([0.0], 0.5)


def _solve(cells, drift, times=(0.5,), **kw):
    spec = gd.GridSpec.box(BOX, cells)
    return fpe.solve(G0, drift, fpe.FpeConfig.stable(spec, drift), list(times), **kw)


def test_unstable_step_is_refused():
    spec = gd.GridSpec.box(BOX, 256)
    limit = fpe.max_stable_dt(spec, 1.0)
    with pytest.raises(fpe.StabilityError, match="stability limit"):
        fpe.FpeConfig(spec, 2 * limit, 1.0)
    fpe.FpeConfig(spec, limit, 1.0)


def test_snapshot_every_must_be_positive():
    with pytest.raises(ValueError):
        fpe.FpeConfig.stable(gd.GridSpec.box(BOX, 64), dr.zero(), snapshot_every=0)


def test_heat_equation_second_order():
    errs = []
    for n in (256, 512, 1024):
        spec = gd.GridSpec.box(BOX, n)
        out = _solve(n, dr.zero())[-1][1]
        errs.append(gd.l1_distance(out, gd.from_initial(G0, spec, 0.5)))
    assert errs[-1] < 2e-5
    assert all(a / b >= 3.8 for a, b in zip(errs, errs[1:]))


def test_self_convergence_with_density_feedback():
    # first-order upwind transport: successive differences shrink by about 2
    coarse = gd.GridSpec.box(BOX, 256)
    sols = [gd.restrict(_solve(n, dr.tanh_density())[-1][1], coarse) for n in (256, 512, 1024)]
    d1 = gd.l1_distance(sols[0], sols[1])
    d2 = gd.l1_distance(sols[1], sols[2])
    assert d1 / d2 >= 1.9


def test_mass_conserved_and_log_filled():
    log = {}
    out = _solve(512, dr.tanh_density(), log=log)
    assert out[-1][1].mass == pytest.approx(1.0, abs=1e-12)
    assert log["steps"] > 0 and log["min_value"] >= -fpe.NEGATIVE_TOL


def test_snapshot_every_records_intermediate_states():
    spec = gd.GridSpec.box(BOX, 128)
    cfg = fpe.FpeConfig.stable(spec, dr.zero(), snapshot_every=10)
    out = fpe.solve(G0, dr.zero(), cfg, [0.5], include_start=True)
    times = [t for t, _ in out]
    assert times[0] == 0.0 and times[-1] == 0.5
    assert len(times) > 3 and times == sorted(times)


def test_atomic_start_time(origin):
    spec = gd.GridSpec.box(BOX, 512)
    out = fpe.solve(origin, dr.zero(), fpe.FpeConfig.stable(spec, dr.zero()), [1.0],
                    include_start=True)
    assert out[0][0] == pytest.approx(fpe.default_start_time(spec))
    with pytest.raises(ValueError, match="start time"):
        fpe.solve(origin, dr.zero(), fpe.FpeConfig.stable(spec, dr.zero()), [1e-6])


@pytest.mark.parametrize("phi", fpe.default_test_functions(), ids=lambda p: p.name)
def test_test_function_derivatives(phi):
    x = np.linspace(-5, 5, 401)[:, None]
    eps = 1e-5
    d1 = (phi.value(x + eps) - phi.value(x - eps)) / (2 * eps)
    d2 = (phi.value(x + eps) - 2 * phi.value(x) + phi.value(x - eps)) / eps**2
    np.testing.assert_allclose(phi.grad(x)[:, 0], d1, atol=1e-7)
    np.testing.assert_allclose(phi.laplacian(x), d2, atol=1e-3)


def test_test_functions_vanish_at_boundary():
    spec = gd.GridSpec.box(BOX, 256)
    for phi in fpe.default_test_functions():
        phi.check_vanishes(spec)


def test_non_vanishing_test_function_is_refused():
    const = fpe.TestFunction("one", lambda x: np.ones(len(x)), lambda x: np.zeros(x.shape),
                             lambda x: np.zeros(len(x)))
    with pytest.raises(fpe.TestFunctionError):
        const.check_vanishes(gd.GridSpec.box(BOX, 256))
    traj = _solve(128, dr.zero(), include_start=True)
    with pytest.raises(fpe.TestFunctionError):
        fpe.weak_residual(traj, dr.zero(), [const], 0.5)


def test_weak_residual_of_exact_heat_flow(wide_grid):
    tg = euler.TimeGrid(1.0, 256)
    traj = [(0.0, gd.from_initial(G0, wide_grid))]
    traj += [(t, gd.from_initial(G0, wide_grid, t)) for t in tg.times()[1:]]
    res = fpe.weak_residual(traj, dr.zero(), fpe.default_test_functions(), 1.0)
    assert max(res.values()) < 1e-4


def test_weak_residual_needs_snapshot_time():
    traj = _solve(128, dr.zero(), include_start=True)
    with pytest.raises(ValueError, match="snapshot time"):
        fpe.weak_residual(traj, dr.zero(), fpe.default_test_functions(), 0.3)


def test_separation_of_identical_runs_is_zero():
    a = _solve(256, dr.tanh_density(), times=(0.25, 0.5))
    b = _solve(256, dr.tanh_density(), times=(0.25, 0.5))
    assert [d for _, d in fpe.uniqueness_separation(a, b)] == [0.0, 0.0]


def test_separation_requires_common_grid():
    a = _solve(256, dr.zero())
    b = _solve(512, dr.zero())
    with pytest.raises(gd.SpecMismatchError, match="common grid"):
        fpe.uniqueness_separation(a, b)
