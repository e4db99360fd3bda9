"""Probability densities sampled at the cell centers of a uniform grid.

The grid is treated as a periodic box for convolution and redistribution.
Data are kept away from the boundary by the padding and leak checks, so the
wraparound only ever moves mass below the leak tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import heat_kernel as hk
from .heat_kernel import GridResolutionError, PaddingError
from .initial import InitialDistribution
from .parallel import ordered_map

log = logging.getLogger(__name__)

MASS_TOL = 1e-6
LEAK_TOL = 1e-8


class GridError(ValueError):
    pass


class SpecMismatchError(GridError):
    pass


class BoundaryLeakError(GridError):
    pass


class AtomError(GridError):
    """A point mass cannot be represented on a grid without smoothing."""


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform box ``prod [lower_a, upper_a)`` with ``cells[a]`` cells per axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        cells = tuple(int(v) for v in np.atleast_1d(self.cells))
        if not (len(lower) == len(upper) == len(cells)):
            raise GridError("lower, upper and cells must have the same length")
        if len(cells) not in hk.SUPPORTED_DIMS:
            raise GridError(f"grid dimension must be one of {hk.SUPPORTED_DIMS}, got {len(cells)}")
        for lo, hi, n in zip(lower, upper, cells):
            if not hi > lo:
                raise GridError(f"upper bound {hi} must exceed lower bound {lo}")
            if not _is_pow2(n):
                raise GridError(f"cell count must be a power of two, got {n}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def box(cls, half_width: float, cells: int, dim: int = 1) -> GridSpec:
        return cls((-half_width,) * dim, (half_width,) * dim, (cells,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def half_widths(self) -> tuple[float, ...]:
        return tuple((hi - lo) / 2 for lo, hi in zip(self.lower, self.upper))

    def axis(self, a: int) -> np.ndarray:
        """Cell-center coordinates along axis ``a``."""
        return self.lower[a] + (np.arange(self.cells[a]) + 0.5) * self.dx[a]

    def centers(self) -> np.ndarray:
        """All cell centers, shape ``cells + (d,)``."""
        axes = [self.axis(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def refined(self, factor: int = 2) -> GridSpec:
        return GridSpec(self.lower, self.upper, tuple(n * factor for n in self.cells))

    def describe(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "cells": list(self.cells)}


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Nonnegative density values at cell centers.

    ``clipped_mass`` is the mass removed by clipping negative FFT ringing in
    the operation that produced this instance.
    """

    spec: GridSpec
    values: np.ndarray
    clipped_mass: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.spec.shape:
            raise GridError(f"values shape {v.shape} does not match grid {self.spec.shape}")
        if v is self.values and v.flags.writeable:
            v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.spec.cell_volume)

    def integrate(self, f_values) -> float:
        """Midpoint quadrature of ``f * density``; ``f_values`` sampled at the centers."""
        return float(np.sum(self.values * f_values) * self.spec.cell_volume)

    def mean(self) -> np.ndarray:
        c = self.spec.centers()
        w = self.values[..., None] * c
        return w.reshape(-1, self.spec.dim).sum(axis=0) * self.spec.cell_volume

    def peak(self) -> float:
        return float(self.values.max())

    def check(self, mass_tol: float = MASS_TOL) -> None:
        if np.any(self.values < 0):
            raise GridError("density has negative values")
        if abs(self.mass - 1.0) > mass_tol:
            raise GridError(f"density mass {self.mass!r} deviates from 1 by more than {mass_tol}")

    def boundary_mass(self) -> float:
        """Mass carried by the outermost layer of cells."""
        v = self.values
        inner = v[tuple(slice(1, -1) for _ in v.shape)]
        return float((v.sum() - inner.sum()) * self.spec.cell_volume)


def _same_spec(a: GridDensity, b: GridDensity) -> None:
    if a.spec != b.spec:
        raise SpecMismatchError(f"grid specs differ: {a.spec} vs {b.spec}")


def l1_distance(a: GridDensity, b: GridDensity) -> float:
    """``int |a - b|`` by midpoint quadrature."""
    _same_spec(a, b)
    return float(np.abs(a.values - b.values).sum() * a.spec.cell_volume)


def sup_distance(a: GridDensity, b: GridDensity) -> float:
    _same_spec(a, b)
    return float(np.max(np.abs(a.values - b.values)))


def lq_norm(a: GridDensity, q: float) -> float:
    """L^q norm for ``q`` in (1, inf]; ``q = inf`` is the largest cell value."""
    q = float(q)
    if not q > 1:
        raise hk.DomainError(f"L^q norm needs q > 1, got {q}")
    if math.isinf(q):
        return float(np.max(np.abs(a.values)))
    return float((np.sum(np.abs(a.values) ** q) * a.spec.cell_volume) ** (1.0 / q))


def _check_padding(values: np.ndarray, spec: GridSpec, t: float, leak_tol: float) -> None:
    reach = hk.PADDING_STDS * math.sqrt(2.0 * t)
    total = values.sum()
    for ax in range(spec.dim):
        nb = int(math.ceil(reach / spec.dx[ax]))
        n = spec.cells[ax]
        if 2 * nb >= n:
            raise PaddingError(
                f"box width {spec.upper[ax] - spec.lower[ax]:g} on axis {ax} is smaller than "
                f"twice the padding {reach:.4g} needed for t={t:g}"
            )
        other = tuple(i for i in range(spec.dim) if i != ax)
        marginal = values.sum(axis=other) if other else values
        edge = (marginal[:nb].sum() + marginal[n - nb:].sum()) * spec.cell_volume
        if edge > leak_tol * max(total * spec.cell_volume, 1.0):
            need = 2 * (reach + (spec.upper[ax] - spec.lower[ax]) / 2)
            raise PaddingError(
                f"mass {edge:.3g} lies within the padding band {reach:.4g} of the boundary on "
                f"axis {ax}; widen the box to about {need:.4g}"
            )


def _clip(values: np.ndarray, target_mass: float, vol: float) -> tuple[np.ndarray, float]:
    neg = values < 0
    if not np.any(neg):
        return values, 0.0
    clipped = float(-values[neg].sum() * vol)
    values = np.where(neg, 0.0, values)
    m = values.sum() * vol
    if m > 0:
        values = values * (target_mass / m)
    if clipped > 0:
        log.debug("clipped %.3g mass of negative ringing", clipped)
    return values, clipped


def gaussian_convolve(a: GridDensity, t: float, *, min_cells_per_std: float = 4.0,
                      leak_tol: float = LEAK_TOL, check_padding: bool = True) -> GridDensity:
    """Return ``g(t, .) * a`` (one diffusion step of duration ``t``).

    The sampled kernel is normalized to unit discrete mass, so mass is
    preserved; negative round-off is clipped and the result renormalized.
    """
    hk.require_resolution(t, a.spec.dx, min_cells_per_std)
    if check_padding:
        _check_padding(a.values, a.spec, t, leak_tol)
    out = hk.convolve(a.values, a.spec.dx, t)
    out, clipped = _clip(out, a.mass, a.spec.cell_volume)
    return GridDensity(a.spec, out, clipped)


def _cic(base: np.ndarray, frac: np.ndarray, weights: np.ndarray, shape,
         vol: float) -> tuple[np.ndarray, float]:
    """Cloud-in-cell deposit with periodic wrap; returns (sums, mass landing outside)."""
    d = len(shape)
    n = base.shape[0]
    size = int(np.prod(shape))
    dims = np.asarray(shape)
    flats, ws = [], []
    leaked = 0.0
    for corner in range(2**d):
        bits = np.array([(corner >> a) & 1 for a in range(d)])
        w = weights.copy()
        for a in range(d):
            w *= frac[:, a] if bits[a] else 1.0 - frac[:, a]
        idx = base + bits
        outside = np.any((idx < 0) | (idx >= dims), axis=1)
        if np.any(outside):
            leaked += float(np.abs(w[outside]).sum() * vol)
        idx = np.mod(idx, dims)
        flats.append(np.ravel_multi_index(tuple(idx.T), shape) if n else np.zeros(0, int))
        ws.append(w)
    sums = np.bincount(np.concatenate(flats), weights=np.concatenate(ws), minlength=size)
    return sums.reshape(shape), leaked


def drift_pushforward(a: GridDensity, shift_field: Callable | np.ndarray, h: float, *,
                      safety_fraction: float = 0.25, leak_tol: float = LEAK_TOL) -> GridDensity:
    """Pushforward of ``a dx`` under ``x -> x + h shift_field(x)``.

    Each cell's mass moves to its displaced center and is split between the
    neighbouring cells with linear (cloud-in-cell) weights.  Mass and the first
    moment are preserved exactly up to rounding.

    Parameters
    ----------
    shift_field : callable or ndarray
        Either ``f(points) -> vectors`` on arrays of shape (..., d), or the
        vectors at the cell centers with shape ``a.spec.shape + (d,)``.
    """
    spec = a.spec
    field = shift_field(spec.centers()) if callable(shift_field) else np.asarray(shift_field, float)
    field = np.broadcast_to(field, spec.shape + (spec.dim,))
    step = h * field
    limit = safety_fraction * np.asarray(spec.half_widths)
    if np.any(np.abs(step) > limit):
        raise BoundaryLeakError(
            f"displacement {np.abs(step).max():.4g} exceeds {safety_fraction} of the box half-width"
        )
    disp = step / np.asarray(spec.dx)
    if not np.any(disp):
        return a
    flat_disp = disp.reshape(-1, spec.dim)
    base_disp = np.floor(flat_disp)
    frac = flat_disp - base_disp
    idx = np.indices(spec.shape).reshape(spec.dim, -1).T
    base = idx + base_disp.astype(np.int64)
    values, leaked = _cic(base, frac, a.values.reshape(-1), spec.shape, spec.cell_volume)
    if leaked > leak_tol:
        raise BoundaryLeakError(f"pushforward moves mass {leaked:.3g} across the boundary")
    return GridDensity(spec, values)


# Sampled kernels are cut off this many standard deviations from their center
# (relative weight exp(-32) there).
SPLAT_STDS = 8.0
# Bound on per-chunk work (sources times kernel footprint).
_SPLAT_BUDGET = 2**22


def splat(weights: np.ndarray, targets: np.ndarray, spec: GridSpec, t: float,
          derivative: int | None = None) -> tuple[np.ndarray, float]:
    """Sum of point sources smoothed by the heat kernel, sampled at cell centers.

    Returns ``sum_j weights_j K(y_i - targets_j)`` with ``K = g(t, .)`` or its
    partial derivative along axis ``derivative``, and the absolute weight of
    kernel samples falling outside the grid (times the cell volume).
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, spec.dim)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    lower = np.asarray(spec.lower)
    dx = np.asarray(spec.dx)
    dims = np.asarray(spec.shape)
    std = math.sqrt(2.0 * t)
    radius = [int(math.ceil(SPLAT_STDS * std / h)) + 1 for h in dx]
    offsets = [np.arange(-r, r + 1) for r in radius]
    footprint = int(np.prod([len(o) for o in offsets]))
    chunk = max(1, _SPLAT_BUDGET // footprint)
    # the split depends only on the grid and t, never on the thread count
    near = np.rint((targets - lower) / dx - 0.5).astype(np.int64)
    norm = (4.0 * math.pi * t) ** -0.5

    def piece(lo):
        hi = min(lo + chunk, len(weights))
        contrib = weights[lo:hi].reshape((-1,) + (1,) * spec.dim)
        flat = np.zeros((hi - lo,) + (1,) * spec.dim, dtype=np.int64)
        inside = np.ones((hi - lo,) + (1,) * spec.dim, dtype=bool)
        for a in range(spec.dim):
            idx = near[lo:hi, a, None] + offsets[a]
            dist = lower[a] + (idx + 0.5) * dx[a] - targets[lo:hi, a, None]
            f = norm * np.exp(-dist * dist / (4.0 * t))
            if derivative == a:
                f = f * (-dist / (2.0 * t))
            shape = [hi - lo] + [1] * spec.dim
            shape[1 + a] = len(offsets[a])
            contrib = contrib * f.reshape(shape)
            ok = (idx >= 0) & (idx < dims[a])
            inside = inside & ok.reshape(shape)
            flat = flat * dims[a] + np.clip(idx, 0, dims[a] - 1).reshape(shape)
        contrib, inside, flat = np.broadcast_arrays(contrib, inside, flat)
        leak = float(np.abs(contrib[~inside]).sum() * spec.cell_volume)
        return np.bincount(flat[inside], weights=contrib[inside], minlength=size), leak

    size = int(np.prod(dims))
    total = np.zeros(size)
    leaked = 0.0
    # partial sums are added in chunk order whatever the thread count
    for part, leak in ordered_map(piece, range(0, len(weights), chunk)):
        total += part
        leaked += leak
    return total.reshape(spec.shape), leaked


def drift_diffuse(a: GridDensity, shift_field: np.ndarray, t: float, *,
                  min_cells_per_std: float = 4.0, leak_tol: float = LEAK_TOL) -> GridDensity:
    """Law of ``X + shift(X) + sqrt(2 t) xi`` when ``X`` has the cell masses of ``a``.

    Each cell's mass sits at its center, moves by the shift exactly and is
    spread by ``g(t, .)`` sampled on the grid.  Unlike a redistribution onto
    neighbouring cells this adds no spurious variance.
    """
    spec = a.spec
    hk.require_resolution(t, spec.dx, min_cells_per_std)
    shift = np.broadcast_to(np.asarray(shift_field, dtype=float), spec.shape + (spec.dim,))
    targets = spec.centers().reshape(-1, spec.dim) + shift.reshape(-1, spec.dim)
    weights = a.values.reshape(-1) * spec.cell_volume
    values, leaked = splat(weights, targets, spec, t)
    if leaked > leak_tol:
        raise BoundaryLeakError(f"drift and diffusion move mass {leaked:.3g} across the boundary")
    return GridDensity(spec, values)


def deposit(points, spec: GridSpec, weights=None, *, leak_tol: float = LEAK_TOL) -> GridDensity:
    """Linear-binned empirical density of ``points`` (shape (n, d)), unit total mass."""
    points = np.asarray(points, dtype=float).reshape(-1, spec.dim)
    n = len(points)
    if weights is None:
        weights = np.full(n, 1.0 / n)
    s = (points - np.asarray(spec.lower)) / np.asarray(spec.dx) - 0.5
    base = np.floor(s)
    frac = s - base
    vol = spec.cell_volume
    sums, leaked = _cic(base.astype(np.int64), frac, np.asarray(weights, float) / vol,
                        spec.shape, vol)
    if leaked > leak_tol:
        raise BoundaryLeakError(f"{leaked:.3g} of the sample mass lies outside the grid")
    return GridDensity(spec, sums)


def interpolate(a: GridDensity, points) -> np.ndarray:
    """Multilinear interpolation of the cell values at ``points`` (shape (n, d)).

    Beyond the outermost centers the nearest center value is used.
    """
    spec = a.spec
    points = np.asarray(points, dtype=float).reshape(-1, spec.dim)
    s = (points - np.asarray(spec.lower)) / np.asarray(spec.dx) - 0.5
    hi = np.asarray(spec.cells) - 1
    s = np.clip(s, 0, hi)
    i0 = np.minimum(np.floor(s).astype(np.int64), np.maximum(hi - 1, 0))
    frac = s - i0
    out = np.zeros(len(points))
    for corner in range(2**spec.dim):
        w = np.ones(len(points))
        idx = []
        for ax in range(spec.dim):
            bit = (corner >> ax) & 1
            w *= frac[:, ax] if bit else 1.0 - frac[:, ax]
            idx.append(i0[:, ax] + bit)
        out += w * a.values[tuple(idx)]
    return out


def restrict(a: GridDensity, target: GridSpec) -> GridDensity:
    """Block-average onto a coarser grid with the same box (conservative)."""
    spec = a.spec
    if target.lower != spec.lower or target.upper != spec.upper:
        raise SpecMismatchError("restriction needs identical boxes")
    if target == spec:
        return a
    factors = []
    for n, m in zip(spec.cells, target.cells):
        if n % m:
            raise SpecMismatchError(f"cannot restrict {n} cells onto {m}")
        factors.append(n // m)
    shape = []
    for m, f in zip(target.cells, factors):
        shape += [m, f]
    v = a.values.reshape(shape).mean(axis=tuple(range(1, 2 * spec.dim, 2)))
    return GridDensity(target, v)


def from_initial(dist: InitialDistribution, spec: GridSpec, t_smooth: float = 0.0) -> GridDensity:
    """Density of ``X0 + sqrt(2) W_{t_smooth}`` on the grid, i.e. ``g(t_smooth) * nu0``."""
    if t_smooth < 0:
        raise hk.DomainError("t_smooth must be nonnegative")
    if dist.dim != spec.dim:
        raise SpecMismatchError(f"initial law is {dist.dim}-d, grid is {spec.dim}-d")
    if dist.kind == "grid":
        if dist.density.spec != spec:
            raise SpecMismatchError("initial grid density lives on a different grid")
        if t_smooth == 0:
            return dist.density
        return gaussian_convolve(dist.density, t_smooth)
    var = dist.variances + 2.0 * t_smooth
    if np.any(var == 0):
        raise AtomError("a point mass has no grid density; pass t_smooth > 0")
    hk_dx = min(spec.dx)
    if np.any(np.sqrt(var) < 2.0 * hk_dx):
        raise GridResolutionError(
            f"component std {np.sqrt(var.min()):.4g} is below two cell widths {2 * hk_dx:.4g}"
        )
    c = spec.centers()
    out = np.zeros(spec.shape)
    d = spec.dim
    for w, m, v in zip(dist.weights, dist.means, var):
        r2 = np.sum((c - m) ** 2, axis=-1)
        out += w * (2 * np.pi * v) ** (-d / 2) * np.exp(-r2 / (2 * v))
    return GridDensity(spec, out)


def uniform_box(spec: GridSpec, lower, upper) -> GridDensity:
    """Uniform density on the box ``[lower, upper]`` with exact cell-overlap weights."""
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    vol = float(np.prod(upper - lower))
    weights = []
    for ax in range(spec.dim):
        h = spec.dx[ax]
        left = spec.lower[ax] + np.arange(spec.cells[ax]) * h
        overlap = np.clip(np.minimum(left + h, upper[ax]) - np.maximum(left, lower[ax]), 0, None)
        weights.append(overlap / h)
    w = weights[0]
    for extra in weights[1:]:
        w = np.multiply.outer(w, extra)
    return GridDensity(spec, w / vol)


def support_radius(dist: InitialDistribution, center=None, tail: float = LEAK_TOL) -> float:
    """Radius around ``center`` outside of which ``dist`` has less than ``tail`` mass (per axis)."""
    if dist.kind == "grid":
        spec = dist.density.spec
        center = np.zeros(spec.dim) if center is None else np.asarray(center, float)
        r = 0.0
        for ax in range(spec.dim):
            other = tuple(i for i in range(spec.dim) if i != ax)
            v = dist.density.values
            marg = (v.sum(axis=other) if other else v) * spec.cell_volume
            cdf = np.cumsum(marg)
            x = spec.axis(ax)
            lo = x[np.searchsorted(cdf, tail / 2)]
            hi = x[min(np.searchsorted(cdf, cdf[-1] - tail / 2), len(x) - 1)]
            r = max(r, abs(lo - center[ax]), abs(hi - center[ax]))
        return float(r)
    center = np.zeros(dist.dim) if center is None else np.asarray(center, float)
    spread = hk.PADDING_STDS * np.sqrt(dist.variances)
    return float(np.max(np.abs(dist.means - center).max(axis=1) + spread))


def check_domain(spec: GridSpec, dist: InitialDistribution, drift_bound: float, T: float) -> None:
    """Box sizing rule: half-width >= bound*T + 6 sqrt(2T) + initial support radius."""
    center = (np.asarray(spec.lower) + np.asarray(spec.upper)) / 2
    need = drift_bound * T + hk.PADDING_STDS * math.sqrt(2 * T) + support_radius(dist, center)
    if min(spec.half_widths) < need:
        raise PaddingError(f"box half-width {min(spec.half_widths):g} is below the required {need:.4g}")
