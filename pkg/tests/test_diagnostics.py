from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddsde import diagnostics as dg
from ddsde import drift as dr
from ddsde import grid as gd
from ddsde import initial as ini


def _heat_flow(spec, times, initial=None):
    initial = initial or ini.point_mass([0.0])
    return {t: gd.from_initial(initial, spec, t) for t in times}


LATTICE = [k / 8 for k in range(1, 9)]


def test_certificate_stability_and_verdict():
    cert = dg.BoundCertificate("hoelder-space", {8: 1.0, 16: 1.1, 32: 1.05})
    assert cert.constant == 1.1
    assert cert.stability == pytest.approx(1.1 / 1.05)
    assert cert.valid and cert.worst == 16
    bad = dg.BoundCertificate("hoelder-space", {8: 1.0, 16: 1.0, 32: 3.0})
    assert not bad.valid
    assert "FAIL (worst N=32)" in bad.summary()


def test_non_finite_constant_is_unstable():
    assert dg.BoundCertificate("x", {1: 1.0, 2: math.inf}).stability == math.inf


def test_combine():
    a = dg.BoundCertificate("hoelder-time", {8: 1.0})
    b = dg.BoundCertificate("hoelder-time", {16: 2.0})
    assert dg.BoundCertificate.combine([a, b]).constants == {8: 1.0, 16: 2.0}
    with pytest.raises(ValueError, match="different claims"):
        dg.BoundCertificate.combine([a, dg.BoundCertificate("smoothing", {8: 1.0})])
    with pytest.raises(ValueError):
        dg.BoundCertificate.combine([])


def test_curve_sorting_and_monotonicity():
    c = dg.ConvergenceCurve("c", [64, 8, 16, 32], [0.1, 0.8, 0.4, 0.2], tolerance=0.2)
    assert c.abscissa == [8, 16, 32, 64]
    assert c.slope == pytest.approx(-1.0)
    assert c.passed
    up = dg.ConvergenceCurve("c", [8, 16, 32, 64], [0.8, 0.4, 0.45, 0.1])
    assert not up.monotone
    with pytest.raises(ValueError, match="at least 4"):
        dg.ConvergenceCurve("c", [1, 2, 3], [1, 1, 1])


def test_curve_tolerance():
    c = dg.ConvergenceCurve("c", [8, 16, 32, 64], [0.8, 0.4, 0.2, 0.1], tolerance=0.05)
    assert c.monotone and not c.passed


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_domination_of_heat_flow_matches_closed_form(t, grid16):
    # sup of g(t)/g(4t) over the cell centers sits at |y| = dx/2
    dens = gd.from_initial(ini.point_mass([0.0]), grid16, t)
    half = grid16.dx[0] / 2
    expected = 2 * math.exp(-3 * half * half / (16 * t))
    assert dg.domination_ratio(dens, t, ini.point_mass([0.0])) == pytest.approx(expected, rel=1e-12)


def test_domination_errors(grid16):
    dens = gd.from_initial(ini.point_mass([0.0]), grid16, 0.5)
    with pytest.raises(ValueError, match="lambda"):
        dg.domination_ratio(dens, 0.5, ini.point_mass([0.0]), lam=0.5)
    with pytest.raises(dg.WindowError):
        dg.domination_ratio(dens, 0.5, ini.point_mass([0.0]), floor=10.0)


def test_fit_domination_requires_one_grid(grid16, coarse16):
    o = ini.point_mass([0.0])
    dens = {8: gd.from_initial(o, grid16, 0.5), 16: gd.from_initial(o, coarse16, 0.5)}
    with pytest.raises(gd.SpecMismatchError):
        dg.fit_domination(dens, 0.5, o)


def test_hoelder_constants_of_heat_flow_converge_under_refinement():
    fine = dg.hoelder_constants(_heat_flow(gd.GridSpec.box(16.0, 4096), LATTICE))
    coarse = dg.hoelder_constants(_heat_flow(gd.GridSpec.box(16.0, 2048), LATTICE))
    for k in fine:
        assert 0 < fine[k] < 1
        assert fine[k] == pytest.approx(coarse[k], rel=0.02)


def test_fit_hoelder_certificates(grid16):
    certs = dg.fit_hoelder(_heat_flow(grid16, LATTICE), N=8)
    assert [c.claim for c in certs] == ["hoelder-space", "hoelder-time", "hoelder-joint"]
    assert all(c.ranges["beta"] == 0.5 for c in certs)


def test_hoelder_window_errors(grid16):
    traj = _heat_flow(grid16, LATTICE)
    with pytest.raises(dg.WindowError, match="leaves the grid"):
        dg.hoelder_constants(traj, window=32.0)
    with pytest.raises(dg.WindowError, match="two trajectory times"):
        dg.hoelder_constants({1.0: traj[1.0]})
    with pytest.raises(ValueError, match="beta"):
        dg.hoelder_constants(traj, beta=1.0)


def test_l1_study_refuses_non_lipschitz(grid16):
    ref = gd.from_initial(ini.point_mass([0.0]), grid16, 1.0)
    drift = dr.from_expression("sign(u - 0.1)", bound=1.0)
    with pytest.raises(dg.NotApplicableError, match="Lipschitz"):
        dg.l1_convergence_study({8: ref}, ref, drift)


def test_l1_study_restricts_onto_reference(grid16, coarse16):
    o = ini.point_mass([0.0])
    ref = gd.from_initial(o, coarse16, 1.0)
    outs = {n: gd.from_initial(o, grid16, 1.0) for n in (8, 16, 32, 64)}
    curve = dg.l1_convergence_study(outs, ref, dr.zero())
    assert max(curve.ordinate) < 1e-4
    assert curve.passed


@settings(max_examples=50, deadline=None)
@given(err=st.floats(1e-6, 1.0), p=st.floats(0.5, 3.0))
def test_richardson_recovers_power_law(err, p):
    # errors err * 2^-p k for resolutions k = 0, 1, 2 of a monotone sequence
    e = [err * 2.0 ** (-p * k) for k in range(3)]
    sc = dg.SelfConvergence(e[0] - e[1], e[1] - e[2])
    assert sc.order == pytest.approx(p, rel=1e-9)
    assert sc.error_fine == pytest.approx(e[2], rel=1e-8)
    assert sc.error_middle == pytest.approx(e[1], rel=1e-8)
    assert sc.combined == pytest.approx(e[1] + e[2], rel=1e-8)


def test_richardson_without_convergence():
    assert dg.SelfConvergence(1.0, 2.0).error_fine == math.inf


def test_smoothing_uniform_start(grid16):
    u = gd.uniform_box(grid16, [-1.0], [1.0])
    res = dg.smoothing_check(u, 1.0, 0.5, math.inf, 1.0)
    assert res.scaled == pytest.approx(1.0) and res.passed
    with pytest.raises(dg.NotApplicableError):
        dg.smoothing_check(u, 1.0, 0.5, math.inf, 1.0, initial=ini.point_mass([0.0]))
    with pytest.raises(dg.WindowError):
        dg.calibrate_smoothing({1.0: u}, 0.5, math.inf, 2.0, 3.0)


def test_smoothing_closed_form_for_q2(grid16):
    # peak of g(t) * U[-1, 1] is erf(1 / (2 sqrt t)) / 2
    u = gd.uniform_box(grid16, [-1.0], [1.0])
    traj = {t: gd.gaussian_convolve(u, t) for t in LATTICE}
    got = dg.calibrate_smoothing(traj, 1 / math.sqrt(2), 2.0, 0.125, 1.0)
    exact = max(t**0.25 * math.erf(1 / (2 * math.sqrt(t))) / 2 * math.sqrt(2) for t in LATTICE)
    assert got == pytest.approx(exact, rel=1e-4)


def test_rows_csv_and_report():
    cert = dg.BoundCertificate("gaussian-domination", {8: 2.0234567, 16: 2.0})
    curve = dg.ConvergenceCurve("l1-convergence", [8, 16, 32, 64], [0.8, 0.4, 0.2, 0.1])
    text = dg.rows_csv(cert.rows())
    assert text.splitlines() == ["claim,N,constant", "gaussian-domination,8,2.02346",
                                 "gaussian-domination,16,2"]
    assert dg.rows_csv([]) == ""
    report = dg.render_report([cert], [curve], {"note": "hello"})
    assert dg.CLAIMS["gaussian-domination"] in report
    assert "[note]" in report and "N=8" in report
