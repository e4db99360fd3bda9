"""Exact-in-law propagation of the density-feedback Euler scheme on a grid.

One step from ``k h`` to ``(k+1) h`` freezes the drift field
``x -> b(kh, x, rho_kh(x))`` at the left endpoint, moves each cell's mass by
``h b`` and spreads it with ``g(h, .)``.  The first step uses no drift and is
a plain FFT convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import grid as gd
from . import heat_kernel as hk
from .drift import DriftSpec
from .grid import GridDensity, GridSpec
from .initial import InitialDistribution


class TimeGridError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Horizon ``T`` split into ``N`` steps of size ``h = T / N``."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 1 or not self.T > 0:
            raise TimeGridError("need T > 0 and N >= 1")
        if self.h * self.N != self.T:
            raise TimeGridError(f"T={self.T} is not exactly N*h for N={self.N}")

    @property
    def h(self) -> float:
        return self.T / self.N

    def freeze(self, s: float) -> float:
        """The left lattice point ``kh`` with ``kh <= s < (k+1)h``."""
        k = math.floor(s / self.h)
        if (k + 1) * self.h <= s:
            k += 1
        elif k * self.h > s:
            k -= 1
        return k * self.h

    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    def index(self, t: float, tol: float = 1e-9) -> int:
        """Step index of a lattice time, or ``TimeGridError``."""
        k = round(t / self.h)
        if abs(k * self.h - t) > tol * max(self.h, 1.0) or not 0 <= k <= self.N:
            raise TimeGridError(
                f"time {t} is not on the step lattice h={self.h:g} in [0, {self.T}]; "
                "use interpolate_intermediate for times between steps"
            )
        return int(k)


@dataclass(frozen=True)
class SchemeState:
    """Law of the scheme at ``t = k h``.

    ``density`` is ``None`` at ``k = 0`` when the initial law has atoms.
    ``field`` is the drift field frozen on ``[kh, (k+1)h)`` once computed.
    """

    k: int
    time: float
    density: GridDensity | None
    initial: InitialDistribution
    spec: GridSpec
    clipped_mass: float = 0.0
    field: np.ndarray | None = field(default=None, compare=False)


def initial_state(initial: InitialDistribution, spec: GridSpec) -> SchemeState:
    dens = None if initial.has_atoms else gd.from_initial(initial, spec, 0.0)
    return SchemeState(0, 0.0, dens, initial, spec)


def frozen_field(state: SchemeState, drift: DriftSpec) -> np.ndarray | None:
    """Drift field on the state's step interval; ``None`` on the first step."""
    if state.k == 0:
        return None
    centers = state.spec.centers()
    u = state.density.values
    pts = centers.reshape(-1, state.spec.dim)
    return drift(state.time, pts, u.reshape(-1)).reshape(centers.shape)


def _advance(state: SchemeState, drift: DriftSpec, dt: float) -> GridDensity:
    if state.density is None:
        return gd.from_initial(state.initial, state.spec, dt)
    field_values = frozen_field(state, drift)
    if field_values is None or not np.any(field_values):
        return gd.gaussian_convolve(state.density, dt)
    return gd.drift_diffuse(state.density, dt * field_values, dt)


def step(state: SchemeState, drift: DriftSpec, time: TimeGrid) -> SchemeState:
    """Advance the law by one Euler step."""
    if state.k >= time.N:
        raise TimeGridError(f"state is already at the horizon (k={state.k}, N={time.N})")
    dens = _advance(state, drift, time.h)
    k = state.k + 1
    return SchemeState(k, k * time.h, dens, state.initial, state.spec,
                       clipped_mass=dens.clipped_mass)


def interpolate_intermediate(state: SchemeState, drift: DriftSpec, dt: float,
                             time: TimeGrid | None = None) -> GridDensity:
    """Law at ``kh + dt`` for ``0 < dt < h``."""
    if not dt > 0 or (time is not None and not dt < time.h):
        raise hk.DomainError(f"intermediate offset must lie in (0, h), got {dt}")
    return _advance(state, drift, dt)


@dataclass
class RunLog:
    clipped_mass: list[float] = field(default_factory=list)
    mass_error: list[float] = field(default_factory=list)


def run(initial: InitialDistribution, drift: DriftSpec, spec: GridSpec, time: TimeGrid,
        snapshot_times=None, *, log: RunLog | None = None, keep_initial: bool = False,
        mass_tol: float = gd.MASS_TOL) -> list[tuple[float, GridDensity]]:
    """Run the scheme to ``T`` and return ``(t, rho^N_t)`` at the requested times.

    ``snapshot_times=None`` returns every lattice time ``h, 2h, ..., T``.
    With ``keep_initial`` the absolutely continuous initial density is
    prepended at ``t = 0``.
    """
    if snapshot_times is None:
        wanted = set(range(1, time.N + 1))
    else:
        wanted = set()
        for t in snapshot_times:
            k = time.index(t)
            if k == 0:
                raise TimeGridError("snapshot times must lie in (0, T]")
            wanted.add(k)
    state = initial_state(initial, spec)
    out = []
    if keep_initial:
        if state.density is None:
            raise gd.AtomError("initial law has atoms; no density at t = 0")
        out.append((0.0, state.density))
    last = max(wanted)
    while state.k < last:
        state = step(state, drift, time)
        dens = state.density
        err = abs(dens.mass - 1.0)
        if log is not None:
            log.clipped_mass.append(dens.clipped_mass)
            log.mass_error.append(err)
        if err > mass_tol or np.any(dens.values < 0):
            raise gd.GridError(f"mass {dens.mass!r} out of tolerance after step {state.k}")
        if state.k in wanted:
            out.append((state.time, dens))
    return out


def states_from_trajectory(traj, initial: InitialDistribution, spec: GridSpec,
                           time: TimeGrid) -> list[SchemeState]:
    """Rebuild the step states ``k = 0..K`` from a full trajectory."""
    by_k = {time.index(t): dens for t, dens in traj}
    base = initial_state(initial, spec)
    states = [base]
    k = 1
    while k in by_k:
        states.append(SchemeState(k, k * time.h, by_k[k], initial, spec))
        k += 1
    return states


def duhamel_residual(trajectory, drift: DriftSpec, t: float, initial: InitialDistribution,
                     time: TimeGrid, substeps: int = 4) -> float:
    """Sup-norm residual of the Duhamel representation of ``rho^N_t``.

    Right-hand side: ``g(t) * nu0`` plus, for each step ``j`` and sub-step
    midpoint ``s``, ``-div( g(t - jh) * mu_{j,s} ) ds`` where ``mu_{j,s}`` is the
    vector measure ``b_j rho_jh`` carried along ``z -> z + (s - jh) b_j(z)``.
    Cell masses are treated as point masses at the centers, as in the engine.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    k = time.index(t)
    if k == 0:
        raise TimeGridError("Duhamel residual needs t > 0")
    spec = trajectory[0][1].spec
    states = states_from_trajectory(trajectory, initial, spec, time)
    if len(states) <= k:
        raise TimeGridError(f"trajectory stops before t={t}; every step up to it is required")
    lhs = states[k].density.values
    rhs = gd.from_initial(initial, spec, t).values.copy()
    h = time.h
    ds = h / substeps
    centers = spec.centers().reshape(-1, spec.dim)
    for j in range(1, k):
        st = states[j]
        fld = frozen_field(st, drift)
        if not np.any(fld):
            continue
        flat = fld.reshape(-1, spec.dim)
        mass = st.density.values.reshape(-1) * spec.cell_volume
        for m in range(substeps):
            tau = (m + 0.5) * ds
            targets = centers + tau * flat
            for c in range(spec.dim):
                # int mu(w) . grad g(t-jh, w - y) dw = -(d_c g * mu_c)(y)
                part, _ = gd.splat(flat[:, c] * mass, targets, spec, t - j * h, derivative=c)
                rhs -= part * ds
    return float(np.max(np.abs(lhs - rhs)))
