"""Declarative experiment configuration (TOML) with field-level validation.

A minimal file::

    name = "zero_drift"
    engines = ["density"]

    [drift]
    name = "zero"

    [initial]
    kind = "point_mass"
    mean = [0.0]

    [grid]
    lower = [-20.0]
    upper = [20.0]
    cells = [4096]

    [time]
    T = 1.0
    N = 64
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from . import drift as dr
from . import grid as gd
from . import initial as ini

ENGINES = ("density", "particles", "fpe")
DIAGNOSTICS = ("exact", "convergence", "domination", "hoelder", "weak-residual", "moments",
               "agreement", "separation")
DENSITY_SOURCES = ("kde", "coupled")
INITIAL_KINDS = ("point_mass", "gaussian", "mixture", "uniform")


class ConfigError(ValueError):
    """Validation failure; ``errors`` holds ``(field, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{k}: {m}" for k, m in errors))


@dataclass
class DriftConfig:
    name: str = "zero"
    params: dict[str, float] = field(default_factory=dict)
    # expression drifts: one formula per component
    expression: list[str] = field(default_factory=list)
    bound: float | None = None
    lipschitz_u: float | None = None


@dataclass
class InitialConfig:
    kind: str = "point_mass"
    mean: list[float] = field(default_factory=lambda: [0.0])
    variance: float = 1.0
    q: float | None = None
    weights: list[float] = field(default_factory=list)
    means: list[list[float]] = field(default_factory=list)
    variances: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)


@dataclass
class GridConfig:
    lower: list[float] = field(default_factory=lambda: [-16.0])
    upper: list[float] = field(default_factory=lambda: [16.0])
    cells: list[int] = field(default_factory=lambda: [4096])


@dataclass
class TimeConfig:
    T: float = 1.0
    N: list[int] = field(default_factory=lambda: [64])
    snapshots: list[float] = field(default_factory=list)


@dataclass
class ParticleConfig:
    M: int = 100_000
    density_source: str = "kde"
    bandwidth: float | None = None


@dataclass
class FpeSection:
    dx: float | None = None
    cfl: float = 0.45
    snapshot_every: int = 0


@dataclass
class AssertConfig:
    exact_l1: float = 1e-6
    reference_l1: float = 1e-2
    max_growth: float = 0.10
    stability: float = 1.5
    weak_residual: float = 5e-3
    agreement_l1: float = 0.05
    lam: float = 4.0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    engines: list[str] = field(default_factory=lambda: ["density"])
    diagnostics: list[str] = field(default_factory=list)
    output: str = "runs"
    drift: DriftConfig = field(default_factory=DriftConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    particles: ParticleConfig = field(default_factory=ParticleConfig)
    fpe: FpeSection = field(default_factory=FpeSection)
    asserts: AssertConfig = field(default_factory=AssertConfig)

    # ---------------------------------------------------------------- builders

    def build_drift(self) -> dr.DriftSpec:
        d = self.drift
        if d.expression:
            return dr.from_expression(d.expression, d.bound, d.lipschitz_u, d.params,
                                      dim=len(self.grid.cells))
        return dr.catalog(d.name, **d.params)

    def build_grid(self) -> gd.GridSpec:
        g = self.grid
        return gd.GridSpec(tuple(g.lower), tuple(g.upper), tuple(g.cells))

    def build_initial(self) -> ini.InitialDistribution:
        c = self.initial
        q = math.inf if c.q is None else c.q
        if c.kind == "point_mass":
            return ini.point_mass(c.mean)
        if c.kind == "gaussian":
            return ini.gaussian(c.mean, c.variance, q)
        if c.kind == "mixture":
            return ini.gaussian_mixture(c.weights, c.means, c.variances, q)
        if c.kind == "uniform":
            return ini.from_grid(gd.uniform_box(self.build_grid(), c.lower, c.upper), q)
        raise ConfigError([("initial.kind", f"unknown kind '{c.kind}'")])

    @property
    def engine_set(self) -> list[str]:
        return list(ENGINES) if "all" in self.engines else list(self.engines)

    # ------------------------------------------------------------ serialization

    def to_dict(self) -> dict:
        return _strip_none(asdict(self))

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        errors: list[tuple[str, str]] = []
        cfg = _build(cls, raw, "", errors)
        if errors:
            raise ConfigError(errors)
        cfg.validate()
        return cfg

    @classmethod
    def loads(cls, text: str) -> ExperimentConfig:
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError([("<file>", f"invalid TOML: {exc}")]) from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([("<file>", str(exc))]) from None
        return cls.loads(text)

    # -------------------------------------------------------------- validation

    def validate(self) -> None:
        """Check cross-field constraints; raise :class:`ConfigError` listing all problems."""
        errors: list[tuple[str, str]] = []
        for e in self.engines:
            if e not in ENGINES + ("all",):
                errors.append(("engines", f"unknown engine '{e}'; choose from {', '.join(ENGINES)}, all"))
        for d in self.diagnostics:
            if d not in DIAGNOSTICS:
                errors.append(("diagnostics", f"unknown diagnostic '{d}'; choose from {', '.join(DIAGNOSTICS)}"))
        if self.particles.density_source not in DENSITY_SOURCES:
            errors.append(("particles.density_source",
                           f"must be one of {', '.join(DENSITY_SOURCES)}"))
        if self.particles.M < 2:
            errors.append(("particles.M", "need at least 2 particles"))
        if not 0 <= self.seed < 2**64:
            errors.append(("seed", "must fit in 64 unsigned bits"))
        if self.initial.kind not in INITIAL_KINDS:
            errors.append(("initial.kind", f"unknown kind '{self.initial.kind}'; choose from "
                                           f"{', '.join(INITIAL_KINDS)}"))
        if not self.time.T > 0:
            errors.append(("time.T", "must be positive"))
        if not self.time.N or any(n < 1 for n in self.time.N):
            errors.append(("time.N", "need one or more positive step counts"))
        if not 0 < self.fpe.cfl <= 1:
            errors.append(("fpe.cfl", "must lie in (0, 1]"))
        drift = grid = init = None
        try:
            drift = self.build_drift()
        except dr.UnknownDriftError as exc:
            errors.append(("drift.name", str(exc)))
        except (dr.DriftError, TypeError, ValueError) as exc:
            errors.append(("drift", str(exc)))
        try:
            grid = self.build_grid()
        except gd.GridError as exc:
            errors.append(("grid", str(exc)))
        if grid is not None and self.initial.kind in INITIAL_KINDS:
            try:
                init = self.build_initial()
            except (ValueError, gd.GridError) as exc:
                errors.append(("initial", str(exc)))
        if init is not None and grid is not None and init.dim != grid.dim:
            errors.append(("initial", f"dimension {init.dim} differs from the grid's {grid.dim}"))
            init = None
        if drift is not None and grid is not None and init is not None and self.time.T > 0:
            try:
                gd.check_domain(grid, init, drift.bound, self.time.T)
            except (gd.GridError, gd.PaddingError) as exc:
                errors.append(("grid", str(exc)))
        if grid is not None and self.fpe.dx is not None and "fpe" in self.engine_set:
            try:
                self.fpe_grid()
            except ConfigError as exc:
                errors += exc.errors
        if grid is not None:
            for t in self.time.snapshots:
                if not 0 < t <= self.time.T:
                    errors.append(("time.snapshots", f"{t} is outside (0, T]"))
        if errors:
            raise ConfigError(errors)

    def fpe_grid(self) -> gd.GridSpec:
        """Grid for the FPE solver: ``fpe.dx`` over the same box, or the engine grid."""
        base = self.build_grid()
        if self.fpe.dx is None:
            return base
        cells = []
        for lo, hi in zip(base.lower, base.upper):
            n = (hi - lo) / self.fpe.dx
            if abs(n - round(n)) > 1e-9 or round(n) & (round(n) - 1):
                raise ConfigError([("fpe.dx", f"box width {hi - lo:g} / dx must be a power of two")])
            cells.append(int(round(n)))
        return gd.GridSpec(base.lower, base.upper, tuple(cells))


def _strip_none(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_strip_none(v) for v in obj]
    return obj


_SECTIONS = {
    "drift": DriftConfig, "initial": InitialConfig, "grid": GridConfig, "time": TimeConfig,
    "particles": ParticleConfig, "fpe": FpeSection, "asserts": AssertConfig,
}


def _coerce(name: str, value: Any, default: Any, where: str, errors) -> Any:
    # lists and scalars accept the obvious widenings (int -> float, scalar N -> [N])
    if name == "N" and isinstance(value, int):
        return [value]
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, float) or default is None:
        if isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        ok = default is None or isinstance(value, float)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    elif isinstance(default, dict):
        ok = isinstance(value, dict)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        errors.append((where, f"expected {type(default).__name__}, got {type(value).__name__}"))
    return value


def _build(cls, raw: dict, prefix: str, errors):
    obj = cls()
    if not isinstance(raw, dict):
        errors.append((prefix.rstrip(".") or "<root>", "expected a table"))
        return obj
    known = set(obj.__dataclass_fields__)
    for key, value in raw.items():
        where = f"{prefix}{key}"
        if key not in known:
            errors.append((where, "unknown key"))
            continue
        if key in _SECTIONS and cls is ExperimentConfig:
            setattr(obj, key, _build(_SECTIONS[key], value, f"{key}.", errors))
        else:
            setattr(obj, key, _coerce(key, value, getattr(obj, key), where, errors))
    return obj
