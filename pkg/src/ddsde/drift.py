"""Drift fields ``b(t, x, u)`` where ``u`` is the density value at ``x``.

Evaluators are vectorized: ``evaluator(t, x, u)`` takes a scalar time, points
``x`` of shape (n, d) and density values ``u`` of shape (n,), and returns an
array of shape (n, d).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.stats import qmc

Evaluator = Callable[[float, np.ndarray, np.ndarray], np.ndarray]

DEFAULT_U_CAP = 1e6


class DriftError(ValueError):
    """Bad drift definition or failed evaluation."""


class UnknownDriftError(KeyError, DriftError):
    def __str__(self):  # KeyError repr-quotes its message otherwise
        return str(self.args[0])


@dataclass(frozen=True)
class DriftSpec:
    """A bounded drift with the hypotheses it claims to satisfy.

    ``continuity_declared`` asserts continuity in (t, u) locally uniformly in
    x.  It cannot be verified for a black-box evaluator and is trusted.
    """

    name: str
    evaluator: Evaluator
    bound: float
    lipschitz_u: float | None = None
    continuity_declared: bool = True
    uses_density: bool = True
    params: Mapping[str, object] = field(default_factory=dict)
    u_cap: float = DEFAULT_U_CAP
    debug: bool = False

    def __post_init__(self):
        if not (self.bound >= 0 and math.isfinite(self.bound)):
            raise DriftError(f"drift bound must be finite and >= 0, got {self.bound}")
        if self.lipschitz_u is not None and self.lipschitz_u < 0:
            raise DriftError("lipschitz_u must be nonnegative")

    def __call__(self, t: float, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        u = np.clip(np.broadcast_to(np.asarray(u, dtype=float), x.shape[:-1]), 0.0, self.u_cap)
        out = np.asarray(self.evaluator(float(t), x, u), dtype=float)
        out = np.broadcast_to(out, x.shape)
        if self.debug:
            norms = np.linalg.norm(out, axis=-1)
            bad = ~(norms <= self.bound * (1 + 1e-12))
            if np.any(bad):
                i = int(np.argmax(bad))
                raise DriftError(
                    f"drift '{self.name}' violates declared bound {self.bound} at "
                    f"t={t}, x={x[i].tolist()}, u={float(u[i])}: |b|={norms[i]}"
                )
        return out[0] if squeeze else out

    def describe(self) -> dict:
        return {
            "name": self.name,
            "bound": self.bound,
            "lipschitz_u": self.lipschitz_u,
            "continuity_declared": self.continuity_declared,
            "params": dict(self.params),
        }


def _along_e1(x: np.ndarray, scalar: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape)
    out[..., 0] = scalar
    return out


# --------------------------------------------------------------------------
# catalog


def zero() -> DriftSpec:
    return DriftSpec("zero", lambda t, x, u: np.zeros(x.shape), bound=0.0,
                     lipschitz_u=0.0, uses_density=False)


def constant(c=1.0) -> DriftSpec:
    """``b = c`` (a scalar ``c`` means ``c e_1``)."""
    vec = np.atleast_1d(np.asarray(c, dtype=float))

    def ev(t, x, u):
        if vec.size == 1:
            return _along_e1(x, np.full(x.shape[:-1], vec[0]))
        return np.broadcast_to(vec, x.shape).copy()

    return DriftSpec("constant", ev, bound=float(np.linalg.norm(vec)), lipschitz_u=0.0,
                     uses_density=False, params={"c": vec.tolist() if vec.size > 1 else float(vec[0])})


def tanh_density(c=1.0) -> DriftSpec:
    """``b = c tanh(u) e_1``."""
    c = float(c)
    return DriftSpec("tanh_density", lambda t, x, u: _along_e1(x, c * np.tanh(u)),
                     bound=abs(c), lipschitz_u=abs(c), params={"c": c})


def saturated_linear(c=1.0, u_max=2.0) -> DriftSpec:
    """``b = c min(u, u_max) e_1``."""
    c, u_max = float(c), float(u_max)
    return DriftSpec("saturated_linear", lambda t, x, u: _along_e1(x, c * np.minimum(u, u_max)),
                     bound=abs(c) * u_max, lipschitz_u=abs(c), params={"c": c, "u_max": u_max})


def time_ramp(c=1.0, T=1.0) -> DriftSpec:
    """``b = c t tanh(u) e_1`` on ``[0, T]`` (time clamped to ``[0, T]``)."""
    c, T = float(c), float(T)

    def ev(t, x, u):
        return _along_e1(x, c * min(max(t, 0.0), T) * np.tanh(u))

    return DriftSpec("time_ramp", ev, bound=abs(c) * T, lipschitz_u=abs(c) * T,
                     params={"c": c, "T": T})


def half_space_tanh(c=1.0) -> DriftSpec:
    """``b = c 1{x_1 > 0} tanh(u) e_1``: discontinuous in x, continuous in (t, u)."""
    c = float(c)

    def ev(t, x, u):
        return _along_e1(x, c * (x[..., 0] > 0) * np.tanh(u))

    return DriftSpec("half_space_tanh", ev, bound=abs(c), lipschitz_u=abs(c), params={"c": c})


CATALOG: dict[str, Callable[..., DriftSpec]] = {
    "zero": zero,
    "constant": constant,
    "tanh_density": tanh_density,
    "saturated_linear": saturated_linear,
    "time_ramp": time_ramp,
    "half_space_tanh": half_space_tanh,
}


def catalog(name: str, **params) -> DriftSpec:
    """Look up a catalog drift by name and instantiate it with ``params``."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownDriftError(
            f"unknown drift '{name}'; available: {', '.join(sorted(CATALOG))}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise DriftError(f"bad parameters for drift '{name}': {exc}") from None


# --------------------------------------------------------------------------
# arithmetic expressions

_FUNCS = {
    "tanh": np.tanh, "exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos,
    "sqrt": np.sqrt, "abs": np.abs, "sign": np.sign, "min": np.minimum, "max": np.maximum,
    "step": lambda z: (np.asarray(z) > 0).astype(float),
}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}
_UNOPS = {ast.USub: np.negative, ast.UAdd: np.positive}


def _compile(expr: str, names: set[str]):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise DriftError(f"cannot parse drift expression {expr!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            check(node.operand)
        elif isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or node.keywords:
                raise DriftError(f"function not allowed in {expr!r}; allowed: {sorted(_FUNCS)}")
            for a in node.args:
                check(a)
        elif isinstance(node, ast.Name):
            if node.id not in names:
                raise DriftError(f"unknown name '{node.id}' in {expr!r}; known: {sorted(names)}")
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        else:
            raise DriftError(f"construct {type(node).__name__} not allowed in {expr!r}")

    check(tree)
    return tree.body


def _evaluate(node, env):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNOPS[type(node.op)](_evaluate(node.operand, env))
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*(_evaluate(a, env) for a in node.args))
    if isinstance(node, ast.Name):
        return env[node.id]
    return float(node.value)


def from_expression(components, bound: float, lipschitz_u: float | None = None,
                    params: Mapping[str, float] | None = None, dim: int | None = None,
                    continuity_declared: bool = True) -> DriftSpec:
    """Drift from arithmetic expressions, one per component.

    Expressions may use ``t``, ``u``, ``x1`` .. ``xd``, the given ``params``
    and the functions ``tanh exp log sin cos sqrt abs sign min max step``.
    A single string is the first component; the remaining ones are zero.
    """
    if isinstance(components, str):
        components = [components]
    components = list(components)
    params = {k: float(v) for k, v in (params or {}).items()}
    d = dim or max(len(components), 3)
    names = {"t", "u", *(f"x{i + 1}" for i in range(d)), *params}
    trees = [_compile(e, names) for e in components]

    def ev(t, x, u):
        env = dict(params, t=t, u=u)
        for i in range(x.shape[-1]):
            env[f"x{i + 1}"] = x[..., i]
        out = np.zeros(x.shape)
        # invalid values surface as non-finite output, which the validators report
        with np.errstate(all="ignore"):
            for i, tree in enumerate(trees[: x.shape[-1]]):
                out[..., i] = _evaluate(tree, env)
        return out

    return DriftSpec("expr", ev, bound=float(bound), lipschitz_u=lipschitz_u,
                     continuity_declared=continuity_declared,
                     params={"expr": components, **params})


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    check: str
    passed: bool
    value: float
    declared: float | None
    samples: int
    worst_input: dict | None = None

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        where = f" at {self.worst_input}" if self.worst_input else ""
        return f"{self.check}: {verdict} (empirical {self.value:.6g}, declared {self.declared}){where}"


def _sweep(sample_count: int, dim: int, t_range, x_range, u_range, extra_dims: int = 0, seed: int = 0):
    n_dims = 2 + dim + extra_dims
    pts = qmc.Halton(d=n_dims, scramble=True, seed=seed).random(sample_count)
    lo = np.array([t_range[0], *[x_range[0]] * dim, u_range[0], *[u_range[0]] * extra_dims])
    hi = np.array([t_range[1], *[x_range[1]] * dim, u_range[1], *[u_range[1]] * extra_dims])
    return lo + pts * (hi - lo)


def _eval_checked(spec: DriftSpec, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    try:
        out = spec(t, x, u)
    except Exception as exc:
        raise DriftError(f"drift '{spec.name}' raised at t={t}: {exc}") from exc
    bad = ~np.all(np.isfinite(out), axis=-1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DriftError(
            f"drift '{spec.name}' returned non-finite value at t={t}, x={x[i].tolist()}, u={float(u[i])}"
        )
    return out


def _eval_rows(spec: DriftSpec, ts: np.ndarray, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
    out = np.empty(xs.shape)
    for t in np.unique(ts):
        sel = ts == t
        out[sel] = _eval_checked(spec, float(t), xs[sel], us[sel])
    return out


def validate_bounded(spec: DriftSpec, sample_count: int = 4096, dim: int = 1,
                     t_range=(0.0, 1.0), x_range=(-8.0, 8.0), u_range=(0.0, 2.0),
                     seed: int = 0) -> ValidationReport:
    """Check ``|b| <= bound`` on a quasi-random sweep plus the corners of the box."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rows = _sweep(sample_count, dim, t_range, x_range, u_range, seed=seed)
    corners = np.array(np.meshgrid(*[[a, b] for a, b in
                                     [t_range, *[x_range] * dim, u_range]], indexing="ij"))
    rows = np.vstack([rows, corners.reshape(2 + dim, -1).T])
    ts, xs, us = rows[:, 0], rows[:, 1:1 + dim], rows[:, 1 + dim]
    norms = np.linalg.norm(_eval_rows(spec, ts, xs, us), axis=-1)
    i = int(np.argmax(norms))
    value = float(norms[i])
    passed = value <= spec.bound * (1 + 1e-12)
    worst = None if passed else {"t": float(ts[i]), "x": xs[i].tolist(), "u": float(us[i])}
    return ValidationReport("bounded", passed, value, spec.bound, len(rows), worst)


def validate_lipschitz_u(spec: DriftSpec, sample_count: int = 4096, dim: int = 1,
                         t_range=(0.0, 1.0), x_range=(-8.0, 8.0), u_range=(0.0, 2.0),
                         seed: int = 0) -> ValidationReport:
    """Empirical ``sup |b(t,x,u) - b(t,x,u')| / |u - u'|`` against ``lipschitz_u``.

    Half of the pairs are spread over the whole ``u`` range, the other half
    are close pairs (``|u - u'|`` down to 1e-6 of the range) to probe local
    slopes and jumps.
    """
    if spec.lipschitz_u is None:
        raise DriftError(f"drift '{spec.name}' declares no Lipschitz constant in u")
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rows = _sweep(sample_count, dim, t_range, x_range, u_range, extra_dims=1, seed=seed)
    ts, xs = rows[:, 0], rows[:, 1:1 + dim]
    u1, u2 = rows[:, 1 + dim].copy(), rows[:, 2 + dim].copy()
    close = np.arange(len(rows)) % 2 == 1
    width = u_range[1] - u_range[0]
    scale = width * 10.0 ** (-6 * (u2[close] - u_range[0]) / width)
    u2[close] = np.clip(u1[close] + scale * 1e-1, *u_range)
    keep = u1 != u2
    ts, xs, u1, u2 = ts[keep], xs[keep], u1[keep], u2[keep]
    b1 = _eval_rows(spec, ts, xs, u1)
    b2 = _eval_rows(spec, ts, xs, u2)
    ratio = np.linalg.norm(b1 - b2, axis=-1) / np.abs(u1 - u2)
    i = int(np.argmax(ratio))
    value = float(ratio[i])
    passed = value <= spec.lipschitz_u * (1 + 1e-9)
    worst = None if passed else {"t": float(ts[i]), "x": xs[i].tolist(),
                                 "u": float(u1[i]), "u_prime": float(u2[i])}
    return ValidationReport("lipschitz_u", passed, value, spec.lipschitz_u, len(ts), worst)
