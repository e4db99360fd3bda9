"""Finite-volume solver for the nonlinear Fokker-Planck equation

    d/dt rho = Laplace(rho) - div(b(t, x, rho) rho)

and the residual of its weak formulation against smooth test functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import grid as gd
from .drift import DriftSpec
from .grid import GridDensity, GridSpec
from .initial import InitialDistribution

NEGATIVE_TOL = 1e-12


class StabilityError(ValueError):
    pass


class SchemeFailure(RuntimeError):
    pass


class TestFunctionError(ValueError):
    __test__ = False


def max_stable_dt(spec: GridSpec, drift_bound: float, cfl: float = 0.45) -> float:
    dx = min(spec.dx)
    limits = [dx * dx / (2 * spec.dim)]
    if drift_bound > 0:
        limits.append(dx / drift_bound)
    return cfl * min(limits)


@dataclass(frozen=True)
class FpeConfig:
    """Explicit upwind scheme parameters; stability is checked on construction."""

    grid: GridSpec
    dt: float
    drift_bound: float
    cfl: float = 0.45
    snapshot_every: int | None = None

    def __post_init__(self):
        limit = max_stable_dt(self.grid, self.drift_bound, self.cfl)
        if not 0 < self.dt <= limit * (1 + 1e-12):
            raise StabilityError(
                f"time step {self.dt:.4g} violates the stability limit {limit:.4g} "
                f"(cfl={self.cfl}, dx={min(self.grid.dx):.4g}, |b|<={self.drift_bound})"
            )
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")

    @classmethod
    def stable(cls, grid: GridSpec, drift: DriftSpec, cfl: float = 0.45,
               snapshot_every: int | None = None) -> FpeConfig:
        return cls(grid, max_stable_dt(grid, drift.bound, cfl), drift.bound, cfl, snapshot_every)


def default_start_time(spec: GridSpec) -> float:
    """Start time for atomic initial data: the heat kernel spans four cells."""
    dx = max(spec.dx)
    return 8.0 * dx * dx


class _Stepper:
    def __init__(self, spec: GridSpec, drift: DriftSpec):
        self.spec = spec
        self.drift = drift
        centers = spec.centers()
        self.faces = []
        for ax in range(spec.dim):
            sl = [slice(None)] * spec.dim
            sl[ax] = slice(0, -1)
            pts = centers[tuple(sl)].copy()
            pts[..., ax] += spec.dx[ax] / 2
            self.faces.append(pts.reshape(-1, spec.dim))

    def rate(self, rho: np.ndarray, t: float) -> np.ndarray:
        spec = self.spec
        out = np.zeros_like(rho)
        for ax in range(spec.dim):
            h = spec.dx[ax]
            lo = [slice(None)] * spec.dim
            hi = [slice(None)] * spec.dim
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            left, right = rho[tuple(lo)], rho[tuple(hi)]
            flux = -(right - left) / h
            if self.drift.bound > 0:
                vl = self.drift(t, self.faces[ax], left.reshape(-1))[:, ax].reshape(left.shape)
                vr = self.drift(t, self.faces[ax], right.reshape(-1))[:, ax].reshape(left.shape)
                flux = flux + np.maximum(vl, 0.0) * left + np.minimum(vr, 0.0) * right
            pad = [(0, 0)] * spec.dim
            pad[ax] = (1, 1)
            full = np.pad(flux, pad)
            out -= np.diff(full, axis=ax) / h
        return out


def solve(initial: InitialDistribution, drift: DriftSpec, config: FpeConfig, snapshot_times,
          *, t_start: float | None = None, include_start: bool = False,
          log: dict | None = None) -> list[tuple[float, GridDensity]]:
    """Integrate the nonlinear FPE and return ``(t, rho_t)`` at the snapshot times.

    Atomic initial data enter as ``g(t_start) * nu0`` at ``t_start``
    (default :func:`default_start_time`); the drift is ignored on
    ``[0, t_start]``.  With ``config.snapshot_every`` the density is also
    recorded every that many steps.
    """
    spec = config.grid
    if t_start is None:
        t_start = default_start_time(spec) if initial.has_atoms else 0.0
    rho0 = gd.from_initial(initial, spec, t_start)
    times = sorted(float(t) for t in snapshot_times)
    if not times or times[0] <= t_start:
        raise ValueError(f"snapshot times must exceed the start time {t_start:g}")
    stepper = _Stepper(spec, drift)
    rho = np.array(rho0.values, dtype=float)
    t = t_start
    out = [(t_start, rho0)] if include_start else []
    steps = 0
    min_seen = 0.0
    for target in times:
        n = max(1, math.ceil((target - t) / config.dt - 1e-9))
        dt = (target - t) / n
        for i in range(n):
            rho = rho + dt * stepper.rate(rho, t)
            t = target if i == n - 1 else t + dt
            steps += 1
            low = float(rho.min())
            min_seen = min(min_seen, low)
            if low < -NEGATIVE_TOL:
                raise SchemeFailure(f"negative density {low:.3g} at t={t:.6g} (step {steps})")
            if config.snapshot_every and steps % config.snapshot_every == 0 and i != n - 1:
                out.append((t, GridDensity(spec, np.maximum(rho, 0.0))))
        out.append((target, GridDensity(spec, np.maximum(rho, 0.0))))
    if log is not None:
        log.update(steps=steps, min_value=min_seen, final_mass=float(rho.sum() * spec.cell_volume),
                   start_mass=rho0.mass, t_start=t_start)
    return out


# --------------------------------------------------------------------------
# test functions and the weak formulation


@dataclass(frozen=True)
class TestFunction:
    """A smooth compactly supported function with its gradient and Laplacian."""

    __test__ = False

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    laplacian: Callable[[np.ndarray], np.ndarray]

    def check_vanishes(self, spec: GridSpec, tol: float = 1e-12) -> None:
        c = spec.centers()
        edge = np.zeros(spec.shape, dtype=bool)
        for ax in range(spec.dim):
            sl = [slice(None)] * spec.dim
            sl[ax] = 0
            edge[tuple(sl)] = True
            sl[ax] = -1
            edge[tuple(sl)] = True
        pts = c[edge]
        worst = max(np.abs(self.value(pts)).max(), np.abs(self.grad(pts)).max(),
                    np.abs(self.laplacian(pts)).max())
        if worst > tol:
            raise TestFunctionError(
                f"test function '{self.name}' does not vanish at the grid boundary (|.| = {worst:.3g})"
            )


def bump(center, width: float) -> TestFunction:
    """``exp(-1 / (1 - s))`` with ``s = |x - c|^2 / w^2`` inside the ball, 0 outside."""
    center = np.atleast_1d(np.asarray(center, float))
    w2 = float(width) ** 2

    def parts(x):
        x = np.asarray(x, float)
        z = x - center
        s = np.sum(z * z, axis=-1) / w2
        inside = s < 1
        one_m = np.where(inside, 1 - s, 1.0)
        phi = np.where(inside, np.exp(-1.0 / one_m), 0.0)
        return z, s, one_m, phi

    def value(x):
        return parts(x)[3]

    def grad(x):
        z, s, one_m, phi = parts(x)
        dphi_ds = -phi / one_m**2
        return (dphi_ds * 2 / w2)[..., None] * z

    def laplacian(x):
        z, s, one_m, phi = parts(x)
        d = z.shape[-1]
        dphi_ds = -phi / one_m**2
        d2phi_ds2 = phi * (2 * s - 1) / one_m**4
        return d2phi_ds2 * 4 * s / w2 + dphi_ds * 2 * d / w2

    label = ",".join(f"{v:g}" for v in center)
    return TestFunction(f"bump(c=[{label}],w={width:g})", value, grad, laplacian)


def windowed_cosine(center, width: float, frequency) -> TestFunction:
    """``cos(omega . (x - c))`` times a bump of the given width."""
    center = np.atleast_1d(np.asarray(center, float))
    omega = np.broadcast_to(np.atleast_1d(np.asarray(frequency, float)), center.shape)
    win = bump(center, width)

    def wave(x):
        return np.cos(np.sum((np.asarray(x, float) - center) * omega, axis=-1))

    def wave_grad(x):
        ph = np.sum((np.asarray(x, float) - center) * omega, axis=-1)
        return -np.sin(ph)[..., None] * omega

    def value(x):
        return wave(x) * win.value(x)

    def grad(x):
        return wave(x)[..., None] * win.grad(x) + win.value(x)[..., None] * wave_grad(x)

    def laplacian(x):
        return (wave(x) * win.laplacian(x) + 2 * np.sum(wave_grad(x) * win.grad(x), axis=-1)
                - np.sum(omega * omega) * wave(x) * win.value(x))

    label = ",".join(f"{v:g}" for v in center)
    return TestFunction(f"wcos(c=[{label}],w={width:g},k={omega[0]:g})", value, grad, laplacian)


def default_test_functions(dim: int = 1) -> list[TestFunction]:
    """The catalog used by the weak-formulation checks (supports inside |x| < 5)."""
    e1 = np.eye(dim)[0]
    return [
        bump(np.zeros(dim), 3.0),
        bump(-1.5 * e1, 2.0),
        bump(1.5 * e1, 2.0),
        windowed_cosine(0.5 * e1, 3.0, 2.0),
        windowed_cosine(-0.5 * e1, 4.0, 1.0),
    ]


def weak_residual(trajectory, drift: DriftSpec, tests: list[TestFunction], t: float) -> dict[str, float]:
    """``|<rho_t, phi> - <rho_0, phi> - int <rho_s, Lap phi> + <rho_s, b . grad phi> ds|`` per ``phi``.

    The trajectory is a time-ordered list of ``(s, density)``; its first
    entry is the initial density and ``t`` must be one of its times.  Time
    integrals use the trapezoid rule over the stored snapshots.
    """
    traj = sorted(trajectory, key=lambda p: p[0])
    times = np.array([p[0] for p in traj])
    hit = np.nonzero(np.isclose(times, t, rtol=0, atol=1e-12))[0]
    if len(hit) == 0:
        raise ValueError(f"t={t} is not a snapshot time of the trajectory")
    traj = traj[: hit[0] + 1]
    times = times[: hit[0] + 1]
    spec = traj[0][1].spec
    for _, dens in traj:
        if dens.spec != spec:
            raise gd.SpecMismatchError("trajectory snapshots live on different grids")
    pts = spec.centers().reshape(-1, spec.dim)
    vol = spec.cell_volume
    out = {}
    cache = [(s, dens.values.reshape(-1)) for s, dens in traj]
    drifts = [drift(s, pts, v) for s, v in cache]
    for phi in tests:
        phi.check_vanishes(spec)
        val = phi.value(pts)
        lap = phi.laplacian(pts)
        grad = phi.grad(pts)
        pair_lap = np.array([np.sum(v * lap) * vol for _, v in cache])
        pair_drift = np.array([np.sum(v * np.sum(b * grad, axis=-1)) * vol
                               for (_, v), b in zip(cache, drifts)])
        lhs = np.sum(cache[-1][1] * val) * vol - np.sum(cache[0][1] * val) * vol
        rhs = np.trapezoid(pair_lap, times) + np.trapezoid(pair_drift, times) if len(times) > 1 else 0.0
        out[phi.name] = float(abs(lhs - rhs))
    return out


def uniqueness_separation(run_a, run_b) -> list[tuple[float, float]]:
    """``t -> ||rho_t - rhobar_t||_1`` for two runs sharing grid, times and initial law."""
    if len(run_a) != len(run_b):
        raise ValueError("runs have different snapshot counts")
    out = []
    for (ta, a), (tb, b) in zip(run_a, run_b):
        if abs(ta - tb) > 1e-12:
            raise ValueError(f"snapshot times differ: {ta} vs {tb}")
        if a.spec != b.spec:
            raise gd.SpecMismatchError("runs live on different grids; restrict to a common grid first")
        out.append((ta, gd.l1_distance(a, b)))
    if out and out[0][0] == 0.0 and out[0][1] > 1e-12:
        raise ValueError("runs start from different initial densities")
    return out
