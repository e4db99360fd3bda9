"""Command-line front end: ``run``, ``compare``, ``report``, ``validate``.

Exit codes: 0 success, 1 an assertion failed, 2 invalid input (config,
incompatible grids, missing or corrupt manifest).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import __version__
from . import diagnostics as dg
from . import euler as E
from . import fpe
from . import formats as fmt
from . import grid as gd
from . import initial as ini
from . import particles as P
from .config import ConfigError, ExperimentConfig
from .parallel import thread_count

log = logging.getLogger("ddsde")

EXIT_OK, EXIT_ASSERT, EXIT_INVALID = 0, 1, 2
MANIFEST = "manifest.json"


class InputError(RuntimeError):
    """Bad command-line input that is not a config problem (exit 2)."""


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class RunResult:
    out: Path
    checks: list[Check] = field(default_factory=list)
    certificates: list[dg.BoundCertificate] = field(default_factory=list)
    curves: list[dg.ConvergenceCurve] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _stamp(t: float) -> str:
    return _time.strftime("%Y-%m-%dT%H:%M:%SZ", _time.gmtime(t))


def _tname(t: float) -> str:
    return f"t{t:.6f}.ddg"


# --------------------------------------------------------------------------
# run


class _Run:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.drift = cfg.build_drift()
        self.spec = cfg.build_grid()
        self.initial = cfg.build_initial()
        self.T = cfg.time.T
        self.Ns = sorted(set(cfg.time.N))
        self.result = RunResult(out)
        self.artifacts: list[Path] = []
        self.per_step: dict[str, dict] = {}
        self.density: dict[int, list] = {}
        self.fpe_traj: list | None = None
        self.ensembles: dict[int, P.ParticleRun] = {}
        self.terminal: Path | None = None
        self.trajectory_files: list[Path] = []

    # ------------------------------------------------------------ helpers

    def _write_grid(self, rel: str, dens: gd.GridDensity) -> Path:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        fmt.write_grid(path, dens)
        self.artifacts.append(path)
        return path

    def _write_text(self, rel: str, text: str) -> Path:
        path = self.out / rel
        path.write_text(text)
        self.artifacts.append(path)
        return path

    def _check(self, name: str, passed: bool, detail: str) -> None:
        # summaries already lead with the claim name
        detail = detail.removeprefix(f"{name}: ")
        self.result.checks.append(Check(name, bool(passed), detail))

    def _snapshots(self) -> list[float]:
        return sorted(set(self.cfg.time.snapshots) | {self.T})

    def _needs_full(self) -> bool:
        d = set(self.cfg.diagnostics)
        return bool(d & {"hoelder", "weak-residual"}) or (
            "particles" in self.cfg.engine_set and self.cfg.particles.density_source == "coupled")

    def _trajectory(self, N: int, full: bool) -> list:
        if N in self.density and (not full or len(self.density[N]) >= N):
            return self.density[N]
        time = E.TimeGrid(self.T, N)
        runlog = E.RunLog()
        traj = E.run(self.initial, self.drift, self.spec, time, None if full else self._snapshots(),
                     log=runlog)
        self.per_step[f"density N={N}"] = {"clipped_mass": runlog.clipped_mass,
                                           "mass_error": runlog.mass_error}
        self.density[N] = traj
        return traj

    # ------------------------------------------------------------ engines

    def run_density(self) -> None:
        full = self._needs_full()
        wanted = self._snapshots()
        for N in self.Ns:
            traj = self._trajectory(N, full)
            for t, dens in traj:
                if any(abs(t - w) < 1e-12 for w in wanted):
                    self._write_grid(f"density/N{N}/{_tname(t)}", dens)
        finest = self.Ns[-1]
        self.terminal = self.out / f"density/N{finest}/{_tname(self.T)}"
        if "weak-residual" in self.cfg.diagnostics:
            # the finest trajectory, for later weak-residual comparisons
            for t, dens in self.density[finest]:
                self.trajectory_files.append(self._write_grid(f"density/N{finest}/traj/{_tname(t)}", dens))

    def run_fpe(self) -> None:
        grid = self.cfg.fpe_grid()
        conf = fpe.FpeConfig.stable(grid, self.drift, self.cfg.fpe.cfl, self.cfg.fpe.snapshot_every or None)
        info: dict = {}
        self.fpe_traj = fpe.solve(self.initial, self.drift, conf, self._snapshots(), log=info)
        info["dt"] = conf.dt
        info["cfl_margin"] = conf.dt / fpe.max_stable_dt(grid, self.drift.bound, 1.0)
        self.per_step["fpe"] = info
        for t, dens in self.fpe_traj:
            self._write_grid(f"fpe/{_tname(t)}", dens)
        if self.terminal is None:
            self.terminal = self.out / f"fpe/{_tname(self.T)}"

    def run_particles(self) -> None:
        pc = self.cfg.particles
        kde = P.KdeSpec() if pc.bandwidth is None else P.KdeSpec("fixed", pc.bandwidth)
        record = sorted(set(self._snapshots()) | {0.0})
        for N in self.Ns:
            time = E.TimeGrid(self.T, N)
            if pc.density_source == "coupled":
                source = P.CoupledSource.from_trajectory(self._trajectory(N, True), time)
            else:
                source = P.KdeSource(self.spec, kde)
            run = P.simulate(self.initial, self.drift, time, pc.M, self.cfg.seed, source, record)
            self.ensembles[N] = run
            path = self.out / f"particles/N{N}.ddp"
            path.parent.mkdir(parents=True, exist_ok=True)
            fmt.write_ensemble(path, run.final)
            self.artifacts.append(path)
            est = P.kde_grid(run.final.positions, kde, self.spec)
            kde_path = self._write_grid(f"particles/N{N}_kde_{_tname(self.T)}", est)
            if self.terminal is None and N == self.Ns[-1]:
                self.terminal = kde_path

    # ------------------------------------------------------------ diagnostics

    def diag_exact(self) -> None:
        c = np.atleast_1d(self.drift.params.get("c", 0.0)).astype(float)
        vec = np.zeros(self.spec.dim)
        vec[: c.size] = c
        for N in self.Ns:
            # the first step carries no drift
            moved = _shift_initial(self.initial, (N - 1) * (self.T / N) * vec)
            exact = gd.from_initial(moved, self.spec, self.T)
            err = gd.l1_distance(self._trajectory(N, False)[-1][1], exact)
            self._check(f"exact N={N}", err <= self.cfg.asserts.exact_l1,
                        f"L1 vs closed form {err:.6g} (tol {self.cfg.asserts.exact_l1:g})")

    def diag_convergence(self) -> None:
        ref = self.fpe_traj[-1][1]
        outs = {N: self._trajectory(N, False)[-1][1] for N in self.Ns}
        curve = dg.l1_convergence_study(outs, ref, self.drift, self.cfg.asserts.reference_l1,
                                        self.cfg.asserts.max_growth)
        self.result.curves.append(curve)
        self._check("l1-convergence", curve.passed, curve.summary())

    def diag_domination(self) -> None:
        dens = {N: self._trajectory(N, False)[-1][1] for N in self.Ns}
        cert = dg.fit_domination(dens, self.T, self.initial, self.cfg.asserts.lam,
                                 threshold=self.cfg.asserts.stability)
        self.result.certificates.append(cert)
        self._check("gaussian-domination", cert.valid and math.isfinite(cert.constant), cert.summary())

    def diag_hoelder(self) -> None:
        certs = []
        for N in self.Ns:
            certs += dg.fit_hoelder(dict(self._trajectory(N, True)), N, T=self.T, lattice=self.T / 8)
        for claim in ("hoelder-space", "hoelder-time", "hoelder-joint"):
            cert = dg.BoundCertificate.combine([c for c in certs if c.claim == claim],
                                               self.cfg.asserts.stability)
            self.result.certificates.append(cert)
            self._check(claim, cert.valid, cert.summary())

    def diag_weak(self) -> None:
        tests = fpe.default_test_functions(self.spec.dim)
        res = {}
        for N in self.Ns:
            traj = self._trajectory(N, True)
            if not self.initial.has_atoms:
                traj = [(0.0, gd.from_initial(self.initial, self.spec))] + list(traj)
            res[N] = fpe.weak_residual(traj, self.drift, tests, self.T)
        fine, coarse = self.Ns[-1], self.Ns[0]
        worst = max(res[fine].values())
        self._check("weak-residual", worst <= self.cfg.asserts.weak_residual,
                    f"max residual at N={fine}: {worst:.6g} (tol {self.cfg.asserts.weak_residual:g})")
        if fine != coarse:
            bad = [k for k in res[fine] if not res[fine][k] < res[coarse][k]]
            self._check("weak-residual decrease", not bad,
                        f"N={fine} below N={coarse} for every test function"
                        if not bad else f"no decrease for {', '.join(bad)}")

    def diag_moments(self) -> None:
        consts = {}
        for N, run in self.ensembles.items():
            times = sorted(run.records)
            fit = P.moment_increment_check(run.records, list(zip(times, times[1:])))
            consts[N] = fit.constant
        cert = dg.BoundCertificate("moment-increment", consts, {"M": self.cfg.particles.M},
                                   self.cfg.asserts.stability)
        self.result.certificates.append(cert)
        self._check("moment-increment", cert.valid, cert.summary())

    def diag_agreement(self) -> None:
        pc = self.cfg.particles
        kde = P.KdeSpec() if pc.bandwidth is None else P.KdeSpec("fixed", pc.bandwidth)
        for N, run in self.ensembles.items():
            grid_T = self._trajectory(N, False)[-1][1]
            x = run.final.positions
            dist = gd.l1_distance(P.kde_grid(x, kde, self.spec), grid_T)
            self._check(f"agreement N={N}", dist <= self.cfg.asserts.agreement_l1,
                        f"L1(KDE, grid) {dist:.6g} (tol {self.cfg.asserts.agreement_l1:g})")
            centers = self.spec.centers()
            for phi in fpe.default_test_functions(self.spec.dim):
                mean, hw = P.empirical_expectation(x, phi.value, 1.0)
                ref = grid_T.integrate(phi.value(centers))
                self._check(f"expectation {phi.name} N={N}", abs(mean - ref) <= hw,
                            f"particles {mean:.6g} +- {hw:.3g}, grid {ref:.6g}")

    def diag_separation(self) -> None:
        if len(self.Ns) < 3:
            raise ConfigError([("time.N", "separation needs at least three step counts")])
        a, b, c = self.Ns[-3:]
        wanted = self._snapshots()
        pick = lambda N: [(t, d) for t, d in self._trajectory(N, False)
                          if any(abs(t - w) < 1e-12 for w in wanted)]
        sep = fpe.uniqueness_separation(pick(b), pick(c))[-1][1]
        est = dg.SelfConvergence(gd.l1_distance(pick(a)[-1][1], pick(b)[-1][1]), sep)
        self._check("separation", sep <= est.combined,
                    f"||rho^{b} - rho^{c}||_1 = {sep:.6g} vs self-convergence sum {est.combined:.6g}")
        if self.fpe_traj is not None:
            ref = self.fpe_traj[-1][1]
            fine = pick(c)[-1][1]
            if fine.spec != ref.spec:
                fine = gd.restrict(fine, ref.spec)
            cross = gd.l1_distance(fine, ref)
            self._check("cross-method separation", cross <= self.cfg.asserts.reference_l1,
                        f"{cross:.6g} (tol {self.cfg.asserts.reference_l1:g})")

    # ------------------------------------------------------------ driver

    def execute(self) -> RunResult:
        started = _time.time()
        self.out.mkdir(parents=True, exist_ok=True)
        self._write_text("config.toml", self.cfg.dumps())
        engines = self.cfg.engine_set
        if "density" in engines:
            self.run_density()
        if "fpe" in engines:
            self.run_fpe()
        if "particles" in engines:
            self.run_particles()
        for name in self.cfg.diagnostics:
            getattr(self, "diag_" + {"weak-residual": "weak"}.get(name, name))()
        res = self.result
        rows = [r for c in res.certificates for r in c.rows()]
        if rows:
            self._write_text("certificates.csv", dg.rows_csv(rows))
        rows = [r for c in res.curves for r in c.rows()]
        if rows:
            self._write_text("curves.csv", dg.rows_csv(rows))
        checks = {c.name: c.line() for c in res.checks}
        self._write_text("report.txt", dg.render_report(res.certificates, res.curves, checks))
        self._write_manifest(started)
        return res

    def _write_manifest(self, started: float) -> None:
        res = self.result
        manifest = {
            "tool": "ddsde",
            "version": __version__,
            "config_sha256": self.cfg.digest(),
            "started": _stamp(started),
            "finished": _stamp(_time.time()),
            "threads": thread_count(),
            "per_step": self.per_step,
            "terminal": None if self.terminal is None else str(self.terminal.relative_to(self.out)),
            "trajectory": [str(p.relative_to(self.out)) for p in self.trajectory_files],
            "checks": [dataclasses.asdict(c) for c in res.checks],
            "certificates": [
                {"claim": c.claim, "constants": {str(k): v for k, v in c.constants.items()},
                 "threshold": c.threshold, "stability": c.stability, "valid": c.valid}
                for c in res.certificates
            ],
            "curves": [
                {"label": c.label, "x": c.abscissa, "y": c.ordinate, "slope": c.slope,
                 "passed": c.passed} for c in res.curves
            ],
            "artifacts": [
                {"path": str(p.relative_to(self.out)), "sha256": _sha256(p), "bytes": p.stat().st_size}
                for p in self.artifacts
            ],
        }
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _shift_initial(dist: ini.InitialDistribution, shift: np.ndarray) -> ini.InitialDistribution:
    if dist.kind != "mixture":
        raise ConfigError([("diagnostics", "'exact' needs a point-mass or Gaussian initial law")])
    return dataclasses.replace(dist, means=dist.means + shift)


def validate_for_run(cfg: ExperimentConfig) -> None:
    """Diagnostics that need particular engines or drifts."""
    errors = []
    engines = cfg.engine_set
    diags = set(cfg.diagnostics)
    need = {"convergence": ("density", "fpe"), "domination": ("density",), "hoelder": ("density",),
            "weak-residual": ("density",), "moments": ("particles",),
            "agreement": ("density", "particles"), "separation": ("density",), "exact": ("density",)}
    for d in diags:
        missing = [e for e in need[d] if e not in engines]
        if missing:
            errors.append(("diagnostics", f"'{d}' needs engine(s) {', '.join(missing)}"))
    if "exact" in diags:
        if cfg.drift.expression or cfg.drift.name not in ("zero", "constant"):
            errors.append(("diagnostics", "'exact' has a closed form only for the zero and constant drifts"))
        if cfg.initial.kind == "uniform":
            errors.append(("diagnostics", "'exact' needs a point-mass or Gaussian initial law"))
    if "convergence" in diags and len(set(cfg.time.N)) < 4:
        errors.append(("time.N", "a convergence curve needs at least 4 step counts"))
    if "hoelder" in diags and any(n % 8 for n in cfg.time.N):
        errors.append(("time.N", "Hoelder fits sample times on the T/8 lattice; N must be a multiple of 8"))
    if "separation" in diags and len(set(cfg.time.N)) < 3:
        errors.append(("time.N", "separation needs at least three step counts"))
    if "particles" in engines:
        for n in cfg.time.N:
            for t in cfg.time.snapshots:
                k = t * n / cfg.time.T
                if abs(k - round(k)) > 1e-9:
                    errors.append(("time.snapshots", f"t={t} is not a step time for N={n}"))
    if errors:
        raise ConfigError(errors)


def run_experiment(cfg: ExperimentConfig, out: Path) -> RunResult:
    validate_for_run(cfg)
    threads = thread_count()
    with sfft.set_workers(threads):
        return _Run(cfg, Path(out)).execute()


# --------------------------------------------------------------------------
# compare and report


def load_manifest(run_dir: Path, verify: bool = True) -> dict:
    path = Path(run_dir) / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"{run_dir}: no {MANIFEST}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: corrupt manifest ({exc})") from None
    if verify:
        for art in manifest.get("artifacts", []):
            p = Path(run_dir) / art["path"]
            if not p.exists():
                raise InputError(f"{run_dir}: artifact {art['path']} is missing")
            got = _sha256(p)
            if got != art["sha256"]:
                raise InputError(f"{run_dir}: checksum mismatch for {art['path']}: "
                                 f"manifest {art['sha256'][:16]}..., file {got[:16]}...")
    return manifest


def _common(a: gd.GridDensity, b: gd.GridDensity) -> tuple[gd.GridDensity, gd.GridDensity]:
    """Put two densities on the coarser of their grids."""
    if a.spec == b.spec:
        return a, b
    try:
        if np.prod(a.spec.cells) > np.prod(b.spec.cells):
            return gd.restrict(a, b.spec), b
        return a, gd.restrict(b, a.spec)
    except gd.GridError as exc:
        raise InputError(f"incompatible grids: {exc}") from None


def _load_terminal(target: Path) -> tuple[gd.GridDensity, dict | None]:
    if target.is_file():
        return fmt.read_grid(target), None
    manifest = load_manifest(target)
    if not manifest.get("terminal"):
        raise InputError(f"{target}: run has no terminal density")
    return fmt.read_grid(target / manifest["terminal"]), manifest


def _weak_of_run(run_dir: Path) -> float:
    manifest = load_manifest(run_dir)
    if not manifest.get("trajectory"):
        raise InputError(f"{run_dir}: no stored trajectory; run with the weak-residual diagnostic")
    cfg = ExperimentConfig.load(run_dir / "config.toml")
    traj = []
    for rel in manifest["trajectory"]:
        dens = fmt.read_grid(run_dir / rel)
        traj.append((float(Path(rel).stem[1:]), dens))
    init = cfg.build_initial()
    if not init.has_atoms:
        traj.insert(0, (0.0, gd.from_initial(init, traj[0][1].spec)))
    res = fpe.weak_residual(traj, cfg.build_drift(), fpe.default_test_functions(cfg.build_grid().dim),
                            traj[-1][0])
    return max(res.values())


def compare(run_a: Path, run_b: Path, metric: str, threshold: float | None = None) -> dict:
    if metric == "weak-residual":
        ra, rb = _weak_of_run(run_a), _weak_of_run(run_b)
        cfg = ExperimentConfig.load(Path(run_a) / "config.toml")
        tol = cfg.asserts.weak_residual if threshold is None else threshold
        return {"metric": metric, "value": {"a": ra, "b": rb}, "threshold": tol,
                "passed": max(ra, rb) <= tol}
    a, man_a = _load_terminal(Path(run_a))
    b, _ = _load_terminal(Path(run_b))
    a, b = _common(a, b)
    value = gd.l1_distance(a, b) if metric == "l1" else gd.sup_distance(a, b)
    if threshold is None and man_a is not None:
        threshold = ExperimentConfig.load(Path(run_a) / "config.toml").asserts.reference_l1
    return {"metric": metric, "value": value, "threshold": threshold,
            "passed": True if threshold is None else value <= threshold}


def report(run_dirs: list[Path]) -> tuple[str, bool]:
    """Combined report over runs; the flag is False if any claim failed."""
    out, ok = [], True
    for run_dir in run_dirs:
        m = load_manifest(Path(run_dir))
        out += [f"== {run_dir} (config {m['config_sha256'][:12]}, version {m['version']})", ""]
        for cert in m["certificates"]:
            consts = {int(k): v for k, v in cert["constants"].items()}
            worst = max(consts, key=consts.get)
            flag = "ok" if cert["valid"] else f"FAILED at N={worst}"
            ok &= cert["valid"]
            out.append(f"[{cert['claim']}] {flag}")
            out.append(f"  bound: {dg.CLAIMS.get(cert['claim'], '?')}")
            out.append(f"  stability {cert['stability']:.6g} (threshold {cert['threshold']:g})")
            for n, c in sorted(consts.items()):
                out.append(f"    N={n:<6d} C={c:.6g}")
        for curve in m["curves"]:
            ok &= curve["passed"]
            out.append(f"[{curve['label']}] {'ok' if curve['passed'] else 'FAILED'}, "
                       f"log-log slope {curve['slope']:.6g}")
            for x, y in zip(curve["x"], curve["y"]):
                out.append(f"    {x:<8g} {y:.6g}")
        for chk in m["checks"]:
            ok &= chk["passed"]
            out.append(f"{'PASS' if chk['passed'] else 'FAIL'} {chk['name']}: {chk['detail']}")
        out.append("")
    return "\n".join(out), ok


# --------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddsde", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run engines and diagnostics from a config file")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", type=Path, help="output directory (default: config 'output')")
    r.add_argument("--seed", type=int)
    r.add_argument("--density-source", choices=("kde", "coupled"))

    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("--config", required=True, type=Path)
    v.add_argument("--seed", type=int)
    v.add_argument("--density-source", choices=("kde", "coupled"))

    c = sub.add_parser("compare", help="compare the terminal densities of two runs")
    c.add_argument("run_a", type=Path)
    c.add_argument("run_b", type=Path)
    c.add_argument("--metric", choices=("l1", "sup", "weak-residual"), default="l1")
    c.add_argument("--threshold", type=float)

    rep = sub.add_parser("report", help="summarize one or more run directories")
    rep.add_argument("runs", type=Path, nargs="+")
    rep.add_argument("--out", type=Path, help="write the report here instead of stdout")
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.density_source is not None:
        cfg.particles.density_source = args.density_source
    cfg.validate()
    validate_for_run(cfg)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "validate":
            cfg = _load_config(args)
            print(f"config ok ({cfg.digest()[:12]})")
            return EXIT_OK
        if args.verb == "run":
            cfg = _load_config(args)
            out = args.out or Path(cfg.output)
            res = run_experiment(cfg, out)
            for chk in res.checks:
                print(chk.line())
            if not res.passed:
                failed = ", ".join(c.name for c in res.checks if not c.passed)
                print(f"assertion failed: {failed}", file=sys.stderr)
                return EXIT_ASSERT
            return EXIT_OK
        if args.verb == "compare":
            res = compare(args.run_a, args.run_b, args.metric, args.threshold)
            print(json.dumps(res, indent=2))
            return EXIT_OK if res["passed"] else EXIT_ASSERT
        if args.verb == "report":
            text, ok = report(args.runs)
            if args.out:
                args.out.write_text(text)
            else:
                print(text)
            return EXIT_OK if ok else EXIT_ASSERT
    except ConfigError as exc:
        for key, msg in exc.errors:
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (InputError, fmt.FormatError, ValueError) as exc:
        # grid mismatches, stability and resolution violations
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as exc:
        # scheme failures at run time (negative density, non-finite particles)
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_INVALID
