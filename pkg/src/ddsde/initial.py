"""Initial laws: point masses, isotropic Gaussian mixtures, grid densities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .grid import GridDensity


@dataclass(frozen=True)
class InitialDistribution:
    """A probability measure on R^d.

    ``kind`` is ``"mixture"`` (point masses are mixtures with zero variance)
    or ``"grid"``.  Mixture components have isotropic covariance
    ``variances[k] * I``.  ``lq_exponent`` records an exponent ``q`` for
    which the density is known to lie in L^q (``math.inf`` allowed).
    """

    kind: str
    weights: np.ndarray | None = None
    means: np.ndarray | None = None
    variances: np.ndarray | None = None
    density: GridDensity | None = None
    lq_exponent: float | None = None

    def __post_init__(self):
        if self.kind == "mixture":
            w = np.asarray(self.weights, dtype=float)
            m = np.atleast_2d(np.asarray(self.means, dtype=float))
            v = np.asarray(self.variances, dtype=float)
            if w.ndim != 1 or len(w) != len(m) or v.shape != w.shape:
                raise ValueError("weights, means and variances must have matching lengths")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"mixture weights must be nonnegative and sum to 1, got {w}")
            if np.any(v < 0):
                raise ValueError("mixture variances must be nonnegative")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "means", m)
            object.__setattr__(self, "variances", v)
        elif self.kind == "grid":
            if self.density is None:
                raise ValueError("grid initial distribution needs a density")
            if np.any(self.density.values < 0) or abs(self.density.mass - 1.0) > 1e-8:
                raise ValueError(
                    f"initial grid density must be nonnegative with unit mass, mass={self.density.mass}"
                )
        else:
            raise ValueError(f"unknown initial kind '{self.kind}'")
        if self.lq_exponent is not None:
            if self.has_atoms:
                raise ValueError("an L^q exponent only makes sense for a density")
            if not self.lq_exponent > self.dim:
                raise ValueError(f"need q > d = {self.dim}, got q = {self.lq_exponent}")

    @property
    def dim(self) -> int:
        if self.kind == "grid":
            return self.density.spec.dim
        return self.means.shape[1]

    @property
    def has_atoms(self) -> bool:
        return self.kind == "mixture" and bool(np.any(self.variances == 0))

    def lq_norm(self, q: float) -> float:
        """``||rho0||_q`` (grid quadrature, or closed form for Gaussian mixtures with one component)."""
        if self.has_atoms:
            raise ValueError("point masses have no L^q norm")
        if self.kind == "grid":
            from .grid import lq_norm

            return lq_norm(self.density, q)
        if len(self.weights) != 1:
            raise ValueError("closed-form L^q norm only for single Gaussians; discretize first")
        d, v = self.dim, float(self.variances[0])
        peak = (2 * math.pi * v) ** (-d / 2)
        if math.isinf(q):
            return peak
        # || N(0, v) ||_q^q = peak^(q-1) * q^(-d/2)
        return (peak ** (q - 1) * q ** (-d / 2)) ** (1 / q)

    def describe(self) -> dict:
        if self.kind == "grid":
            s = self.density.spec
            return {"kind": "grid", "lower": list(s.lower), "upper": list(s.upper),
                    "cells": list(s.cells), "q": self.lq_exponent}
        return {"kind": "mixture", "weights": self.weights.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist(), "q": self.lq_exponent}


def point_mass(x0) -> InitialDistribution:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return InitialDistribution("mixture", np.array([1.0]), x0[None, :], np.array([0.0]))


def gaussian(mean, variance: float, q: float | None = None) -> InitialDistribution:
    """Isotropic Gaussian ``N(mean, variance I)``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    return InitialDistribution("mixture", np.array([1.0]), mean[None, :], np.array([float(variance)]),
                               lq_exponent=q)


def gaussian_mixture(weights, means, variances, q: float | None = None) -> InitialDistribution:
    return InitialDistribution("mixture", np.asarray(weights, dtype=float),
                               np.asarray(means, dtype=float), np.asarray(variances, dtype=float),
                               lq_exponent=q)


def from_grid(density: GridDensity, q: float | None = None) -> InitialDistribution:
    return InitialDistribution("grid", density=density, lq_exponent=q)
