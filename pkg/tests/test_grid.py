from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsde import grid as gd
from ddsde import heat_kernel as hk
from ddsde import initial as ini


def test_spec_validation():
    with pytest.raises(gd.GridError, match="power of two"):
        gd.GridSpec((-1.0,), (1.0,), (100,))
    with pytest.raises(gd.GridError, match="exceed"):
        gd.GridSpec((1.0,), (-1.0,), (64,))
    with pytest.raises(gd.GridError, match="same length"):
        gd.GridSpec((-1.0, -1.0), (1.0,), (64,))


def test_spec_geometry():
    spec = gd.GridSpec((-2.0, 0.0), (2.0, 1.0), (8, 4))
    assert spec.dx == (0.5, 0.25)
    assert spec.cell_volume == 0.125
    assert spec.centers().shape == (8, 4, 2)
    assert spec.axis(0)[0] == -1.75
    assert spec.refined().cells == (16, 8)


def test_density_is_read_only():
    spec = gd.GridSpec.box(1.0, 8)
    a = gd.GridDensity(spec, np.full(8, 0.5))
    with pytest.raises(ValueError):
        a.values[0] = 1.0
    assert a.mass == pytest.approx(1.0)


def test_mismatched_specs_are_rejected():
    a = gd.GridDensity(gd.GridSpec.box(1.0, 8), np.full(8, 0.5))
    b = gd.GridDensity(gd.GridSpec.box(1.0, 16), np.full(16, 0.5))
    with pytest.raises(gd.SpecMismatchError):
        gd.l1_distance(a, b)


def test_gaussian_convolve_matches_exact_heat_semigroup(wide_grid):
    a = gd.from_initial(ini.gaussian([0.5], 0.3), wide_grid)
    out = gd.gaussian_convolve(a, 0.7)
    exact = gd.from_initial(ini.gaussian([0.5], 0.3), wide_grid, 0.7)
    assert gd.l1_distance(out, exact) < 1e-12
    assert out.mass == pytest.approx(1.0, abs=1e-13)


def test_gaussian_convolve_refuses_coarse_grid():
    a = gd.from_initial(ini.gaussian([0.0], 1.0), gd.GridSpec.box(20.0, 512))
    with pytest.raises(hk.GridResolutionError, match="more cells"):
        gd.gaussian_convolve(a, 0.001)


def test_gaussian_convolve_refuses_mass_near_boundary():
    spec = gd.GridSpec.box(8.0, 1024)
    a = gd.from_initial(ini.gaussian([6.0], 0.3), spec)
    with pytest.raises(hk.PaddingError, match="widen the box"):
        gd.gaussian_convolve(a, 0.5)


@pytest.mark.parametrize("shift", [1, 3, -2])
def test_cic_pushforward_integer_shift_is_exact(shift):
    spec = gd.GridSpec.box(8.0, 256)
    a = gd.from_initial(ini.gaussian([0.0], 0.5), spec)
    out = gd.drift_pushforward(a, np.full(spec.shape + (1,), shift * spec.dx[0]), 1.0)
    np.testing.assert_array_equal(out.values, np.roll(a.values, shift))


def test_pushforward_rejects_large_displacement():
    spec = gd.GridSpec.box(8.0, 256)
    a = gd.from_initial(ini.gaussian([0.0], 0.5), spec)
    with pytest.raises(gd.BoundaryLeakError):
        gd.drift_pushforward(a, np.full(spec.shape + (1,), 3.0), 1.0)


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(-1.0, 1.0), t=st.floats(0.01, 0.5))
def test_drift_diffuse_moments(shift, t):
    # a constant shift plus diffusion moves the mean by `shift` and adds 2t to the variance
    spec = gd.GridSpec.box(16.0, 2048)
    a = gd.from_initial(ini.gaussian([0.0], 0.5), spec)
    out = gd.drift_diffuse(a, np.full(spec.shape + (1,), shift), t)
    x = spec.axis(0)
    m0, m1 = a.mean()[0], out.mean()[0]
    v0 = a.integrate((x - m0) ** 2)
    v1 = out.integrate((x - m1) ** 2)
    assert out.mass == pytest.approx(1.0, abs=1e-12)
    assert m1 - m0 == pytest.approx(shift, abs=1e-10)
    assert v1 - v0 == pytest.approx(2 * t, abs=1e-9)


def test_drift_diffuse_constant_shift_matches_exact_law(wide_grid):
    a = gd.from_initial(ini.gaussian([0.0], 0.5), wide_grid)
    out = gd.drift_diffuse(a, np.full(wide_grid.shape + (1,), 0.37), 0.2)
    exact = gd.from_initial(ini.gaussian([0.37], 0.9), wide_grid)
    assert gd.l1_distance(out, exact) < 1e-10


def test_drift_diffuse_detects_leak():
    spec = gd.GridSpec.box(4.0, 512)
    a = gd.from_initial(ini.gaussian([2.0], 0.3), spec)
    with pytest.raises(gd.BoundaryLeakError):
        gd.drift_diffuse(a, np.full(spec.shape + (1,), 1.5), 0.2)


def test_splat_derivative_matches_kernel_gradient():
    spec = gd.GridSpec.box(8.0, 1024)
    vals, leaked = gd.splat(np.array([1.0]), np.array([[0.3]]), spec, 0.4, derivative=0)
    exact = hk.gradient(0.4, spec.centers() - 0.3)[..., 0]
    # the kernel is cut off at SPLAT_STDS standard deviations
    np.testing.assert_allclose(vals, exact, rtol=0, atol=1e-12)
    assert leaked == 0.0


def test_splat_independent_of_threads(monkeypatch):
    spec = gd.GridSpec.box(8.0, 512, dim=2)
    rng = np.random.default_rng(0)
    targets = rng.normal(0, 1, (3000, 2))
    w = rng.uniform(0, 1, 3000)
    monkeypatch.setenv("DDSDE_THREADS", "1")
    one, _ = gd.splat(w, targets, spec, 0.05)
    monkeypatch.setenv("DDSDE_THREADS", "4")
    four, _ = gd.splat(w, targets, spec, 0.05)
    np.testing.assert_array_equal(one, four)


def test_deposit_preserves_mass_and_mean():
    spec = gd.GridSpec.box(8.0, 256)
    pts = np.random.default_rng(1).normal(0.2, 1.0, (5000, 1))
    a = gd.deposit(pts, spec)
    assert a.mass == pytest.approx(1.0, abs=1e-12)
    assert a.mean()[0] == pytest.approx(pts.mean(), abs=1e-12)


def test_deposit_outside_grid():
    with pytest.raises(gd.BoundaryLeakError):
        gd.deposit(np.array([[100.0]]), gd.GridSpec.box(8.0, 256))


def test_interpolate_linear_function_exactly():
    spec = gd.GridSpec.box(4.0, 64, dim=2)
    c = spec.centers()
    a = gd.GridDensity(spec, 2.0 + c[..., 0] + 0.5 * c[..., 1])
    pts = np.random.default_rng(2).uniform(-3.5, 3.5, (100, 2))
    np.testing.assert_allclose(gd.interpolate(a, pts), 2.0 + pts[:, 0] + 0.5 * pts[:, 1], atol=1e-12)


def test_restrict_is_conservative(wide_grid):
    a = gd.from_initial(ini.gaussian([0.0], 0.5), wide_grid)
    coarse = gd.restrict(a, gd.GridSpec.box(20.0, 512))
    assert coarse.mass == pytest.approx(a.mass, rel=1e-14)
    with pytest.raises(gd.SpecMismatchError):
        gd.restrict(a, gd.GridSpec.box(16.0, 512))


def test_from_initial_point_mass_needs_smoothing(wide_grid, origin):
    with pytest.raises(gd.AtomError):
        gd.from_initial(origin, wide_grid)
    assert gd.from_initial(origin, wide_grid, 0.5).mass == pytest.approx(1.0, abs=1e-12)


def test_uniform_box_is_exact_on_partial_cells():
    spec = gd.GridSpec.box(2.0, 8)
    a = gd.uniform_box(spec, [-0.6], [0.6])
    assert a.mass == pytest.approx(1.0, abs=1e-15)
    assert a.values.max() == pytest.approx(1 / 1.2)


@pytest.mark.parametrize("q, expected", [(2.0, 1 / math.sqrt(2)), (math.inf, 0.5)])
def test_lq_norm_of_uniform(q, expected, grid16):
    a = gd.uniform_box(grid16, [-1.0], [1.0])
    assert gd.lq_norm(a, q) == pytest.approx(expected, rel=1e-12)


def test_lq_norm_rejects_q_le_one(grid16):
    with pytest.raises(hk.DomainError):
        gd.lq_norm(gd.uniform_box(grid16, [-1.0], [1.0]), 1.0)


def test_check_domain_names_the_requirement(origin):
    with pytest.raises(hk.PaddingError, match="required"):
        gd.check_domain(gd.GridSpec.box(4.0, 512), origin, 1.0, 1.0)
    gd.check_domain(gd.GridSpec.box(16.0, 512), origin, 1.0, 1.0)
