"""Monte Carlo realization of the Euler scheme with density feedback.

Particle ``i`` draws all its noise from Threefry stream ``i``.  The feedback
density is frozen at the start of each step, either as a kernel density
estimate of the ensemble (``"kde"``) or as the deterministic engine's grid
density at that step (``"coupled"``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grid as gd
from . import rng
from .drift import DriftSpec
from .euler import TimeGrid
from .grid import GridDensity, GridSpec
from .initial import InitialDistribution
from .parallel import ordered_map, thread_count

# Work is split into fixed chunks so the arithmetic does not depend on the
# number of worker threads.
CHUNK = 16384


class ParticleError(RuntimeError):
    pass


class KdeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    seed: int
    k: int = 0
    time: float = 0.0

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, ndmin=2)
        if not np.all(np.isfinite(pos)):
            raise ParticleError("particle positions must be finite")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def M(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class KdeSpec:
    """Gaussian KDE bandwidth: ``"silverman"`` scaling or a ``"fixed"`` value."""

    rule: str = "silverman"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.rule not in ("silverman", "fixed"):
            raise KdeError(f"unknown bandwidth rule '{self.rule}'")
        if self.rule == "fixed" and not (self.bandwidth and self.bandwidth > 0):
            raise KdeError("fixed bandwidth must be positive")

    def bandwidth_for(self, positions: np.ndarray) -> float:
        if self.rule == "fixed":
            return float(self.bandwidth)
        m, d = positions.shape
        sigma = math.sqrt(float(np.mean(np.var(positions, axis=0))))
        bw = (4.0 / (d + 2)) ** (1.0 / (d + 4)) * sigma * m ** (-1.0 / (d + 4))
        if not (bw > 0 and math.isfinite(bw)):
            raise KdeError(f"degenerate KDE bandwidth {bw} (sample spread {sigma})")
        return bw


def _check_kde_input(positions: np.ndarray) -> None:
    if positions.shape[0] < 2:
        raise KdeError("kernel density estimation needs at least two particles")


def kde_evaluate(positions, spec: KdeSpec, queries) -> np.ndarray:
    """Exact Gaussian KDE ``(1/M) sum_i N(q; X_i, bw^2 I)`` at the query points."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    _check_kde_input(positions)
    d = positions.shape[1]
    queries = np.asarray(queries, dtype=float).reshape(-1, d)
    bw = spec.bandwidth_for(positions)
    norm = (2 * np.pi * bw * bw) ** (-d / 2) / positions.shape[0]
    out = np.empty(len(queries))
    step = max(1, 2**22 // max(positions.shape[0], 1))
    for lo in range(0, len(queries), step):
        q = queries[lo:lo + step]
        r2 = np.sum((q[:, None, :] - positions[None, :, :]) ** 2, axis=-1)
        out[lo:lo + step] = np.exp(-r2 / (2 * bw * bw)).sum(axis=1) * norm
    return out


def kde_grid(positions, spec: KdeSpec, grid: GridSpec) -> GridDensity:
    """Binned Gaussian KDE on a grid: linear binning, then a heat-kernel convolution."""
    positions = np.asarray(positions, dtype=float).reshape(-1, grid.dim)
    _check_kde_input(positions)
    bw = spec.bandwidth_for(positions)
    binned = gd.deposit(positions, grid)
    # a Gaussian of std bw is g(bw^2 / 2, .)
    return gd.gaussian_convolve(binned, bw * bw / 2, check_padding=False)


class KdeSource:
    """Self-contained feedback: KDE of the current ensemble on ``grid``."""

    name = "kde"

    def __init__(self, grid: GridSpec, kde: KdeSpec | None = None):
        self.grid = grid
        self.kde = kde or KdeSpec()

    def density_at(self, ensemble: ParticleEnsemble) -> np.ndarray:
        est = kde_grid(ensemble.positions, self.kde, self.grid)
        return gd.interpolate(est, ensemble.positions)


class CoupledSource:
    """Feedback from the deterministic engine: ``densities[k]`` is ``rho^N_{kh}``."""

    name = "coupled"

    def __init__(self, densities: dict[int, GridDensity]):
        self.densities = densities

    @classmethod
    def from_trajectory(cls, trajectory, time: TimeGrid) -> CoupledSource:
        return cls({time.index(t): dens for t, dens in trajectory})

    def density_at(self, ensemble: ParticleEnsemble) -> np.ndarray:
        try:
            dens = self.densities[ensemble.k]
        except KeyError:
            raise ParticleError(f"coupled grid has no density for step {ensemble.k}") from None
        return gd.interpolate(dens, ensemble.positions)


def _chunks(m: int):
    return [(lo, min(lo + CHUNK, m)) for lo in range(0, m, CHUNK)]


def _map_chunks(fn: Callable[[int, int], None], m: int, threads: int) -> None:
    ordered_map(lambda p: fn(*p), _chunks(m), threads)


def sample_initial(initial: InitialDistribution, M: int, seed: int,
                   threads: int | None = None) -> ParticleEnsemble:
    """Draw ``M`` particles from the initial law using the reserved init slots."""
    if M < 1:
        raise ValueError("need at least one particle")
    d = initial.dim
    out = np.empty((M, d))
    threads = thread_count(threads)
    if initial.kind == "mixture":
        cum = np.cumsum(initial.weights)

        def work(lo, hi):
            ids = np.arange(lo, hi, dtype=np.uint32)
            comp = np.minimum(np.searchsorted(cum, rng.uniforms(seed, ids, 0) * cum[-1], side="right"),
                              len(cum) - 1)
            z = rng.normals(seed, ids, 2, d)
            out[lo:hi] = initial.means[comp] + np.sqrt(initial.variances[comp])[:, None] * z
    else:
        dens = initial.density
        spec = dens.spec
        cum = np.cumsum(dens.values.reshape(-1))

        def work(lo, hi):
            ids = np.arange(lo, hi, dtype=np.uint32)
            cell = np.minimum(np.searchsorted(cum, rng.uniforms(seed, ids, 0) * cum[-1], side="right"),
                              len(cum) - 1)
            idx = np.stack(np.unravel_index(cell, spec.shape), axis=-1)
            jitter = np.stack([rng.uniforms(seed, ids, 1 + a) for a in range(d)], axis=-1)
            out[lo:hi] = np.asarray(spec.lower) + (idx + jitter) * np.asarray(spec.dx)

    _map_chunks(work, M, threads)
    return ParticleEnsemble(out, seed, 0, 0.0)


def advance(ensemble: ParticleEnsemble, drift: DriftSpec, source, time: TimeGrid,
            threads: int | None = None) -> ParticleEnsemble:
    """One Euler step ``X += h b(kh, X, rho(X)) + sqrt(2h) xi`` (no drift at k = 0)."""
    k = ensemble.k
    if k >= time.N:
        raise ParticleError("ensemble is already at the horizon")
    h = time.h
    t = k * h
    X = ensemble.positions
    M, d = X.shape
    if d > rng.SLOTS_PER_STEP:
        raise ParticleError(f"at most {rng.SLOTS_PER_STEP} dimensions supported")
    with_drift = k > 0 and drift.bound > 0
    u = source.density_at(ensemble) if with_drift and drift.uses_density else np.zeros(M)
    out = np.empty_like(X)
    scale = math.sqrt(2.0 * h)
    first = rng.step_slot(k)
    seed = ensemble.seed

    def work(lo, hi):
        ids = np.arange(lo, hi, dtype=np.uint32)
        xi = rng.normals(seed, ids, first, d)
        x = X[lo:hi]
        move = scale * xi
        if with_drift:
            move = move + h * drift(t, x, u[lo:hi])
        out[lo:hi] = x + move

    _map_chunks(work, M, thread_count(threads))
    bad = ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ParticleError(
            f"particle {i} became non-finite at step {k}: x={X[i].tolist()}, u={float(u[i])}"
        )
    return ParticleEnsemble(out, seed, k + 1, (k + 1) * h)


@dataclass
class ParticleRun:
    time: TimeGrid
    records: dict[float, ParticleEnsemble] = field(default_factory=dict)

    @property
    def final(self) -> ParticleEnsemble:
        return self.records[max(self.records)]


def simulate(initial: InitialDistribution, drift: DriftSpec, time: TimeGrid, M: int, seed: int,
             source, record_times=None, threads: int | None = None) -> ParticleRun:
    """Run the particle scheme to ``T``, keeping ensembles at ``record_times``.

    ``record_times=None`` keeps ``0`` and ``T``.
    """
    wanted = {0, time.N} if record_times is None else {time.index(t) for t in record_times}
    ens = sample_initial(initial, M, seed, threads)
    run = ParticleRun(time)
    if 0 in wanted:
        run.records[0.0] = ens
    while ens.k < max(wanted):
        ens = advance(ens, drift, source, time, threads)
        if ens.k in wanted:
            run.records[ens.time] = ens
    return run


# --------------------------------------------------------------------------
# estimators


@dataclass
class MomentFit:
    constant: float
    ratios: dict[tuple[float, float], float]
    half_widths: dict[tuple[float, float], float]


def moment_increment_check(records: dict[float, ParticleEnsemble], pairs) -> MomentFit:
    """Empirical ``sup_{(s,t)} E|X_t - X_s|^4 / |t - s|^2`` with 3-sigma half-widths."""
    ratios, widths = {}, {}
    for s, t in pairs:
        if s == t:
            raise ValueError("pairs with s == t have no increment ratio")
        s, t = min(s, t), max(s, t)
        try:
            xs, xt = records[s].positions, records[t].positions
        except KeyError as exc:
            raise ValueError(f"no ensemble recorded at t={exc.args[0]}") from None
        q = np.sum((xt - xs) ** 2, axis=1) ** 2 / (t - s) ** 2
        ratios[(s, t)] = float(q.mean())
        widths[(s, t)] = float(3 * q.std() / math.sqrt(len(q)))
    if not ratios:
        raise ValueError("no increment pairs given")
    return MomentFit(max(ratios.values()), ratios, widths)


def empirical_expectation(positions, f: Callable[[np.ndarray], np.ndarray],
                          bound: float) -> tuple[float, float]:
    """Sample mean of bounded ``f`` and its 3-sigma half-width (at most ``3 bound / sqrt(M)``)."""
    positions = np.asarray(positions, dtype=float)
    vals = np.asarray(f(positions), dtype=float)
    if np.any(np.abs(vals) > bound * (1 + 1e-12)):
        raise ValueError(f"f exceeds its declared bound {bound}")
    m = len(vals)
    return float(vals.mean()), float(3 * vals.std() / math.sqrt(m))
