"""Gaussian heat kernel of the operator Delta and its discrete convolution.

``g(t, x) = (4 pi t)^(-d/2) exp(-|x|^2 / (4 t))`` is the transition density of
``sqrt(2) W_t``.  Points are arrays whose last axis is the spatial dimension;
a bare scalar is read as a one-dimensional point.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft as sfft

SUPPORTED_DIMS = (1, 2)

# The padding rule: the data must sit this many kernel standard deviations
# away from the boundary of the periodic box.
PADDING_STDS = 6.0


class DomainError(ValueError):
    """Raised when a parameter lies outside the domain of a kernel formula."""


class GridResolutionError(ValueError):
    """Raised when a grid is too coarse to resolve a kernel."""


class PaddingError(ValueError):
    """Raised when data sits too close to the boundary of the periodic box."""


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    return x


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError(f"heat kernel needs t > 0, got {t}")
    return t


def density(t, x) -> np.ndarray:
    """Evaluate ``g(t, x)``.

    Parameters
    ----------
    t : float or array
        Diffusion time, strictly positive.  Broadcasts against ``x[..., 0]``.
    x : array_like, shape (..., d)

    Returns
    -------
    ndarray, shape (...)
    """
    t = _check_time(t)
    x = _points(x)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    return (4.0 * np.pi * t) ** (-d / 2) * np.exp(-r2 / (4.0 * t))


def gradient(t, x) -> np.ndarray:
    """Spatial gradient ``-x / (2t) g(t, x)``, shape (..., d)."""
    t = _check_time(t)
    x = _points(x)
    return -x / (2.0 * np.asarray(t)[..., None]) * density(t, x)[..., None]


def hessian_trace(t, x) -> np.ndarray:
    """Laplacian of ``g`` in x, which equals ``d/dt g``."""
    t = _check_time(t)
    x = _points(x)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    return (r2 / (4.0 * t * t) - d / (2.0 * t)) * density(t, x)


def shift_bound(t, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(g(t, x+y), 2^(d/2) g(2t, x) exp(|y|^2/(4t)))``."""
    x = _points(x)
    y = _points(y)
    d = x.shape[-1]
    t = _check_time(t)
    lhs = density(t, x + y)
    # one exponent, so a tiny g(2t, x) times a huge shift factor cannot give 0 * inf
    expo = (np.sum(y * y, axis=-1) - 0.5 * np.sum(x * x, axis=-1)) / (4.0 * t)
    with np.errstate(over="ignore"):
        rhs = 2.0 ** (d / 2) * (8.0 * np.pi * t) ** (-d / 2) * np.exp(expo)
    return lhs, rhs


def gradient_bound(t, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(|grad g(t, x)|, 2^(d/2) t^(-1/2) g(2t, x))``."""
    x = _points(x)
    d = x.shape[-1]
    lhs = np.linalg.norm(gradient(t, x), axis=-1)
    rhs = 2.0 ** (d / 2) / np.sqrt(t) * density(2 * np.asarray(t), x)
    return lhs, rhs


def _jet(t, x, j):
    return density(t, x) if j == 0 else gradient(t, x)


def _diff_norm(a, b, j):
    diff = a - b
    return np.abs(diff) if j == 0 else np.linalg.norm(diff, axis=-1)


def _check_hoelder(j, beta):
    if j not in (0, 1):
        raise DomainError(f"derivative order j must be 0 or 1, got {j}")
    if not 0.0 < beta < 1.0:
        raise DomainError(f"Hoelder exponent must lie in (0, 1), got {beta}")


def hoelder_space_bound(t, x1, x2, j: int, beta: float, T: float = 1.0):
    """Both sides of the spatial Hoelder estimate for ``grad^j g``.

    Returns ``(lhs, rhs)`` with ``lhs = |grad^j g(t,x1) - grad^j g(t,x2)|`` and
    ``rhs = |x1-x2|^beta t^(-j/2-beta) (g(4t,x1) + g(4t,x2))``.  The admissible
    constant is ``max(lhs / rhs)`` over a sweep.
    """
    _check_hoelder(j, beta)
    t = _check_time(t)
    if np.any(t > T):
        raise DomainError(f"t must lie in (0, T={T}], got {t}")
    x1, x2 = _points(x1), _points(x2)
    lhs = _diff_norm(_jet(t, x1, j), _jet(t, x2, j), j)
    dist = np.linalg.norm(x1 - x2, axis=-1)
    rhs = dist**beta * t ** (-j / 2 - beta) * (density(4 * t, x1) + density(4 * t, x2))
    return lhs, rhs


def hoelder_time_bound(t1, t2, x, j: int, beta: float, T: float = 1.0):
    """Both sides of the temporal Hoelder estimate for ``grad^j g``.

    ``rhs = |t2-t1|^(beta/2) sum_i t_i^(-(j+beta)/2) g(2 t_i, x)`` for
    ``0 < t1 < t2 <= T``.
    """
    _check_hoelder(j, beta)
    t1, t2 = _check_time(t1), _check_time(t2)
    if np.any(t1 >= t2) or np.any(t2 > T):
        raise DomainError("time Hoelder bound needs 0 < t1 < t2 <= T")
    x = _points(x)
    lhs = _diff_norm(_jet(t1, x, j), _jet(t2, x, j), j)
    p = -(j + beta) / 2
    rhs = (t2 - t1) ** (beta / 2) * (
        t1**p * density(2 * t1, x) + t2**p * density(2 * t2, x)
    )
    return lhs, rhs


def fitted_constant(lhs, rhs, floor: float = 0.0) -> float:
    """Smallest C with ``lhs <= C rhs`` on the samples where ``rhs > floor``."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    keep = rhs > floor
    if not np.any(keep):
        return 0.0
    return float(np.max(lhs[keep] / rhs[keep]))


# --------------------------------------------------------------------------
# Discrete periodic convolution on a uniform grid


def _axis_offsets(n: int, dx: float) -> np.ndarray:
    # wrap-ordered offsets 0, dx, ..., -dx
    return np.fft.fftfreq(n, d=1.0 / n) * dx


def require_resolution(t: float, dx, cells_per_std: float) -> None:
    """Raise unless ``sqrt(2t)`` spans at least ``cells_per_std`` cells per axis."""
    std = math.sqrt(2.0 * t)
    for ax, h in enumerate(np.atleast_1d(dx)):
        if std < cells_per_std * h:
            need = cells_per_std * h * h / std
            raise GridResolutionError(
                f"kernel scale sqrt(2t)={std:.4g} is resolved by only {std / h:.2f} cells on "
                f"axis {ax}; need >= {cells_per_std:g} (cell width <= {std / cells_per_std:.4g}, "
                f"i.e. about {need / h:.1f}x more cells)"
            )


def kernel_transform(shape, dx, t: float, normalize: bool = True) -> np.ndarray:
    """Real-FFT multiplier of the sampled kernel ``g(t, .) * cell_volume``.

    The kernel is separable, so the multiplier is an outer product of one
    transform per axis (full FFT on leading axes, rfft on the last).
    """
    t = float(_check_time(t))
    dx = np.atleast_1d(np.asarray(dx, dtype=float))
    factors = []
    for ax, (n, h) in enumerate(zip(shape, dx)):
        k1 = density(t, _axis_offsets(n, h)[:, None]) * h
        if normalize:
            k1 = k1 / k1.sum()
        last = ax == len(shape) - 1
        f = sfft.rfft(k1) if last else sfft.fft(k1)
        factors.append(f.real)
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def gradient_kernel_transforms(shape, dx, t: float) -> list[np.ndarray]:
    """Multipliers for convolution with each component of ``grad g(t, .)``."""
    t = float(_check_time(t))
    dx = np.atleast_1d(np.asarray(dx, dtype=float))
    d = len(shape)
    base, deriv = [], []
    for ax, (n, h) in enumerate(zip(shape, dx)):
        off = _axis_offsets(n, h)
        k1 = density(t, off[:, None]) * h
        dk1 = -off / (2 * t) * k1
        last = ax == d - 1
        fwd = sfft.rfft if last else sfft.fft
        base.append(fwd(k1))
        deriv.append(fwd(dk1))
    mults = []
    for comp in range(d):
        out = None
        for ax in range(d):
            f = deriv[ax] if ax == comp else base[ax]
            out = f if out is None else np.multiply.outer(out, f)
        mults.append(out)
    return mults


def periodic_convolve(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Circular convolution of ``values`` with a kernel given by its rfft multiplier."""
    spec = sfft.rfftn(values)
    return sfft.irfftn(spec * multiplier, s=values.shape)


def convolve(values: np.ndarray, dx, t: float) -> np.ndarray:
    """``g(t, .)`` convolved with grid ``values`` (midpoint quadrature, periodic)."""
    return periodic_convolve(values, kernel_transform(values.shape, dx, t))


def ck_convolve_check(t: float, s: float, lower, upper, cells) -> float:
    """Max deviation between ``g(t) * g(s)`` computed on the grid and ``g(t+s)``.

    Parameters
    ----------
    t, s : float
        Positive diffusion times.
    lower, upper, cells : sequence
        Per-axis box bounds and cell counts of the grid.
    """
    t = float(_check_time(t))
    s = float(_check_time(s))
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    cells = tuple(int(c) for c in np.atleast_1d(cells))
    dx = (upper - lower) / np.asarray(cells)
    require_resolution(min(t, s), dx, 8.0)
    half = np.min((upper - lower) / 2)
    # g(s) carries all but ~1e-9 of its mass within 6 std; the result needs the
    # padding rule on top of that.
    reach = PADDING_STDS * (math.sqrt(2 * s) + math.sqrt(2 * t))
    if reach > half:
        raise PaddingError(f"box half-width {half:g} < required {reach:.4g} for t={t}, s={s}")
    axes = [lo + (np.arange(n) + 0.5) * h for lo, n, h in zip(lower, cells, dx)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    start = density(s, mesh)
    got = convolve(start, dx, t)
    return float(np.max(np.abs(got - density(t + s, mesh))))
