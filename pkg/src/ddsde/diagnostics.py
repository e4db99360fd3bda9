"""Certificates for N-uniform bounds and convergence curves over parameter sweeps.

"Uniform in N" is made testable as a stability ratio: the largest fitted
constant over a sweep divided by the median must stay below a threshold
(1.5 by default).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import grid as gd
from .drift import DriftSpec
from .grid import GridDensity
from .initial import InitialDistribution

STABILITY_THRESHOLD = 1.5
DENOMINATOR_FLOOR = 1e-12

# Claim identifiers and the inequality each certificate checks.
CLAIMS = {
    "gaussian-domination": "rho^N_t(y) <= C (g(lambda t, .) * nu0)(y), C independent of N",
    "hoelder-space": "|rho^N_t(y1) - rho^N_t(y2)| <= C |y1 - y2|^beta t^(-beta/2)",
    "hoelder-time": "|rho^N_t1(y) - rho^N_t2(y)| <= C |t1 - t2|^(beta/2)",
    "hoelder-joint": "|rho^N_t1(y1) - rho^N_t2(y2)| <= C (|t1 - t2|^(beta/2) + |y1 - y2|^beta)",
    "moment-increment": "E|X^N_t - X^N_s|^4 <= C |t - s|^2",
    "l1-convergence": "||rho^N_T - rho_T||_1 -> 0 as N grows",
    "smoothing": "||rho_t||_inf <= C t^(-d/(2q)) ||rho0||_q",
}


class WindowError(ValueError):
    pass


class NotApplicableError(ValueError):
    pass


@dataclass
class BoundCertificate:
    """Fitted constants per sweep point and the resulting stability verdict."""

    claim: str
    constants: dict[int, float]
    ranges: dict = field(default_factory=dict)
    threshold: float = STABILITY_THRESHOLD

    @property
    def constant(self) -> float:
        return max(self.constants.values())

    @property
    def stability(self) -> float:
        vals = np.array(list(self.constants.values()))
        if not np.all(np.isfinite(vals)):
            return math.inf
        return float(vals.max() / np.median(vals))

    @property
    def valid(self) -> bool:
        return self.stability <= self.threshold

    @property
    def worst(self) -> int:
        """Sweep point carrying the largest constant."""
        return max(self.constants, key=lambda n: self.constants[n])

    @classmethod
    def combine(cls, certs: list[BoundCertificate], threshold: float = STABILITY_THRESHOLD) -> BoundCertificate:
        """Merge single-point certificates of one claim into a sweep certificate."""
        if not certs:
            raise ValueError("nothing to combine")
        claims = {c.claim for c in certs}
        if len(claims) != 1:
            raise ValueError(f"cannot combine different claims {sorted(claims)}")
        merged = {}
        for c in certs:
            merged.update(c.constants)
        return cls(certs[0].claim, merged, dict(certs[0].ranges), threshold)

    def rows(self) -> list[dict]:
        return [{"claim": self.claim, "N": n, "constant": c} for n, c in sorted(self.constants.items())]

    def summary(self) -> str:
        verdict = "PASS" if self.valid else f"FAIL (worst N={self.worst})"
        return (f"{self.claim}: max C = {self.constant:.6g}, stability = {self.stability:.6g} "
                f"(threshold {self.threshold:g}) {verdict}")


@dataclass
class ConvergenceCurve:
    """Ordinate values against a geometric abscissa (N, M or 1/dx)."""

    label: str
    abscissa: list[float]
    ordinate: list[float]
    tolerance: float | None = None
    max_growth: float = 0.10

    def __post_init__(self):
        if len(self.abscissa) != len(self.ordinate):
            raise ValueError("abscissa and ordinate lengths differ")
        if len(self.abscissa) < 4:
            raise ValueError("a convergence curve needs at least 4 points")
        order = np.argsort(self.abscissa)
        self.abscissa = [float(self.abscissa[i]) for i in order]
        self.ordinate = [float(self.ordinate[i]) for i in order]

    @property
    def slope(self) -> float:
        """Least-squares slope of log(ordinate) against log(abscissa)."""
        y = np.asarray(self.ordinate)
        if np.any(y <= 0):
            return math.nan
        return float(np.polyfit(np.log(self.abscissa), np.log(y), 1)[0])

    @property
    def monotone(self) -> bool:
        """No step grows by more than ``max_growth`` relative to its predecessor."""
        y = self.ordinate
        return all(b <= a * (1 + self.max_growth) for a, b in zip(y, y[1:]))

    @property
    def passed(self) -> bool:
        ok = self.monotone
        if self.tolerance is not None:
            ok = ok and self.ordinate[-1] <= self.tolerance
        return ok

    def rows(self) -> list[dict]:
        return [{"curve": self.label, "x": x, "y": y} for x, y in zip(self.abscissa, self.ordinate)]

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        tol = "" if self.tolerance is None else f", terminal tol {self.tolerance:g}"
        return (f"{self.label}: terminal {self.ordinate[-1]:.6g}, log-log slope {self.slope:.6g}"
                f"{tol} {verdict}")


# --------------------------------------------------------------------------
# Gaussian domination


def _one_spec(densities: dict) -> gd.GridSpec:
    specs = {d.spec for d in densities.values()}
    if len(specs) != 1:
        raise gd.SpecMismatchError("all densities must share one grid")
    return specs.pop()


def domination_ratio(density: GridDensity, t: float, initial: InitialDistribution,
                     lam: float = 4.0, floor: float = DENOMINATOR_FLOOR) -> float:
    """``sup_y rho(y) / (g(lam t) * nu0)(y)`` where the denominator is at least ``floor``."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    denom = gd.from_initial(initial, density.spec, lam * t).values
    window = denom >= floor
    if not np.any(window):
        raise WindowError(f"dominating density below {floor:g} everywhere at t={t}")
    return float(np.max(density.values[window] / denom[window]))


def fit_domination(densities: dict[int, GridDensity], t: float, initial: InitialDistribution,
                   lam: float = 4.0, floor: float = DENOMINATOR_FLOOR,
                   threshold: float = STABILITY_THRESHOLD) -> BoundCertificate:
    """Gaussian-domination certificate for ``{N: rho^N_t}``."""
    _one_spec(densities)
    consts = {n: domination_ratio(d, t, initial, lam, floor) for n, d in densities.items()}
    return BoundCertificate("gaussian-domination", consts,
                            {"t": t, "lambda": lam, "floor": floor, "N": sorted(densities)}, threshold)


# --------------------------------------------------------------------------
# Hoelder moduli


def _default_times(traj: dict[float, GridDensity], window: float, T: float, lattice: float):
    times = []
    for t in sorted(traj):
        q = t / lattice
        if 1.0 / window - 1e-12 <= t <= T + 1e-12 and abs(q - round(q)) < 1e-9:
            times.append(t)
    return times


def _window_index(spec: gd.GridSpec, window: float) -> np.ndarray:
    if spec.dim != 1:
        raise NotImplementedError("Hoelder fits are implemented for d = 1")
    if window > min(spec.half_widths):
        raise WindowError(f"window |y| <= {window} leaves the grid {spec.lower}..{spec.upper}")
    x = spec.axis(0)
    return np.flatnonzero(np.abs(x) <= window)


def hoelder_constants(trajectory: dict[float, GridDensity], window: float = 4.0, beta: float = 0.5,
                      T: float = 1.0, lattice: float = 0.125, max_stride: int | None = None) -> dict[str, float]:
    """Empirical space, time and joint Hoelder constants on ``[1/window, T] x [-window, window]``.

    Spatial pairs use cell offsets ``1, 2, 4, ...`` up to the window width;
    time pairs are all pairs of sampled times (``t1 < t2``).
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    times = _default_times(trajectory, window, T, lattice)
    if len(times) < 2:
        raise WindowError(f"need two trajectory times on the {lattice:g} lattice in [1/{window:g}, {T:g}]")
    spec = _one_spec({t: trajectory[t] for t in times})
    idx = _window_index(spec, window)
    x = spec.axis(0)[idx]
    vals = np.stack([trajectory[t].values[idx] for t in times])
    ts = np.array(times)
    strides = []
    s = 1
    limit = len(idx) - 1 if max_stride is None else min(max_stride, len(idx) - 1)
    while s <= limit:
        strides.append(s)
        s *= 2
    space = 0.0
    for s in strides:
        dy = x[s:] - x[:-s]
        diff = np.abs(vals[:, s:] - vals[:, :-s])
        rhs = dy[None, :] ** beta * ts[:, None] ** (-beta / 2)
        space = max(space, float(np.max(diff / rhs)))
    time_c = 0.0
    joint = 0.0
    for i in range(len(ts)):
        for j in range(i + 1, len(ts)):
            dt = (ts[j] - ts[i]) ** (beta / 2)
            time_c = max(time_c, float(np.max(np.abs(vals[j] - vals[i])) / dt))
            for s in [0] + strides:
                a, b = (vals[i], vals[j]) if s == 0 else (vals[i][s:], vals[j][:-s])
                dy = 0.0 if s == 0 else (x[s:] - x[:-s]) ** beta
                joint = max(joint, float(np.max(np.abs(a - b) / (dt + dy))))
    return {"hoelder-space": space, "hoelder-time": time_c, "hoelder-joint": joint}


def fit_hoelder(trajectory: dict[float, GridDensity], N: int, window: float = 4.0, beta: float = 0.5,
                T: float = 1.0, lattice: float = 0.125) -> list[BoundCertificate]:
    """Hoelder certificates (space, time, joint) for one ``N``.

    Merge over a sweep with :meth:`BoundCertificate.combine`.
    """
    consts = hoelder_constants(trajectory, window, beta, T, lattice)
    ranges = {"window": window, "beta": beta, "T": T, "lattice": lattice}
    return [BoundCertificate(claim, {N: c}, dict(ranges)) for claim, c in consts.items()]


# --------------------------------------------------------------------------
# L1 convergence and self-convergence


def l1_convergence_study(outputs: dict[int, GridDensity], reference: GridDensity, drift: DriftSpec,
                         tolerance: float | None = 1e-2, max_growth: float = 0.10,
                         label: str = "l1-convergence") -> ConvergenceCurve:
    """Curve of ``||rho^N_T - rho_ref||_1`` against ``N``.

    Engine outputs on a finer grid are block-averaged onto the reference grid.
    Drifts without a declared Lipschitz constant in ``u`` are refused: the
    limit need not be unique for them.
    """
    if drift.lipschitz_u is None:
        raise NotApplicableError(
            f"drift '{drift.name}' has no Lipschitz constant in u; convergence to a unique limit "
            "is not guaranteed, use a study-only comparison"
        )
    ns, dists = [], []
    for n in sorted(outputs):
        dens = outputs[n]
        if dens.spec != reference.spec:
            dens = gd.restrict(dens, reference.spec)
        ns.append(n)
        dists.append(gd.l1_distance(dens, reference))
    return ConvergenceCurve(label, ns, dists, tolerance, max_growth)


@dataclass(frozen=True)
class SelfConvergence:
    """Richardson estimate from distances between three successive resolutions.

    ``d_coarse = ||u_1 - u_2||``, ``d_fine = ||u_2 - u_3||`` with the
    resolution doubled each time.  ``order = log2(d_coarse / d_fine)``; the
    error estimates of ``u_2`` and ``u_3`` are ``2^p e`` and
    ``e = d_fine / (2^p - 1)``.
    """

    d_coarse: float
    d_fine: float

    @property
    def order(self) -> float:
        return math.log2(self.d_coarse / self.d_fine)

    @property
    def error_fine(self) -> float:
        r = 2.0 ** self.order
        if r <= 1:
            return math.inf
        return self.d_fine / (r - 1)

    @property
    def error_middle(self) -> float:
        return 2.0 ** self.order * self.error_fine

    @property
    def combined(self) -> float:
        """Sum of the two finer runs' error estimates."""
        return self.error_middle + self.error_fine


def richardson(u_coarse: GridDensity, u_mid: GridDensity, u_fine: GridDensity) -> SelfConvergence:
    """Self-convergence estimate from three runs doubling in resolution (on one grid)."""
    return SelfConvergence(gd.l1_distance(u_coarse, u_mid), gd.l1_distance(u_mid, u_fine))


# --------------------------------------------------------------------------
# smoothing


@dataclass(frozen=True)
class SmoothingResult:
    t: float
    q: float
    scaled: float
    constant: float

    @property
    def passed(self) -> bool:
        return self.scaled <= self.constant


def smoothing_scaled(density: GridDensity, t: float, rho0_q_norm: float, q: float) -> float:
    """``||rho_t||_inf t^(d/(2q)) / ||rho0||_q`` (the exponent is 0 for ``q = inf``)."""
    if not t > 0:
        raise ValueError("t must be positive")
    if not rho0_q_norm > 0:
        raise ValueError("||rho0||_q must be positive")
    expo = 0.0 if math.isinf(q) else density.spec.dim / (2 * q)
    return density.peak() * t**expo / rho0_q_norm


def smoothing_check(density: GridDensity, t: float, rho0_q_norm: float, q: float, constant: float,
                    initial: InitialDistribution | None = None) -> SmoothingResult:
    if initial is not None and initial.has_atoms:
        raise NotApplicableError("the smoothing bound needs an initial density in L^q")
    return SmoothingResult(t, q, smoothing_scaled(density, t, rho0_q_norm, q), constant)


def calibrate_smoothing(trajectory: dict[float, GridDensity], rho0_q_norm: float, q: float,
                        t_min: float, t_max: float) -> float:
    """Largest scaled sup norm over trajectory times in ``[t_min, t_max]``."""
    vals = [smoothing_scaled(d, t, rho0_q_norm, q) for t, d in trajectory.items()
            if t_min - 1e-12 <= t <= t_max + 1e-12]
    if not vals:
        raise WindowError(f"no trajectory time in [{t_min}, {t_max}]")
    return max(vals)


# --------------------------------------------------------------------------
# output


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else v


def rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def render_report(certificates: list[BoundCertificate], curves: list[ConvergenceCurve],
                  extra: dict[str, str] | None = None) -> str:
    """Plain-text report with one section per claim."""
    out = ["Diagnostics report", ""]
    for cert in certificates:
        out += [f"[{cert.claim}]", f"  bound: {CLAIMS.get(cert.claim, '?')}", f"  {cert.summary()}"]
        for n, c in sorted(cert.constants.items()):
            out.append(f"    N={n:<6d} C={c:.6g}")
        out.append("")
    for curve in curves:
        out += [f"[{curve.label}]", f"  bound: {CLAIMS['l1-convergence']}", f"  {curve.summary()}"]
        for x, y in zip(curve.abscissa, curve.ordinate):
            out.append(f"    {x:<8g} {y:.6g}")
        out.append("")
    for key, text in (extra or {}).items():
        out += [f"[{key}]", f"  {text}", ""]
    return "\n".join(out)
