"""INI problem files for the command line.

Sections: ``[problem]``, ``[orders]``, ``[lagrangian]``, ``[trajectory]``,
``[grid]`` and ``[tolerances]``. Expressions may be quoted. Every error
names the section and key it comes from.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .expr import ExprError, compile_expr, free_vars
from .fracops import CombinedSpec, Grid, GridError, GridFunction, OrderError, OrderFunction
from .herglotz import HerglotzProblem, Lagrangian
from .classic import ClassicProblem, terminal_cost
from .multidim import Field, MultiProblem, multi_lagrangian, multi_variables, space_names

__all__ = ["ConfigError", "ProblemConfig", "load_problem", "parse_config", "KINDS", "OPERATORS"]

KINDS = ("herglotz", "classic", "multidim", "operator")
OPERATORS = (
    "left-rl-integral", "right-rl-integral", "left-rl-deriv", "right-rl-deriv",
    "left-caputo", "right-caputo", "combined-caputo", "dual-rl",
)
DEFAULT_N = 1000
DEFAULT_FD_STEP = 1e-6
DEFAULT_ROOT_TOL = 1e-8
DEFAULT_TOL = 5e-3


class ConfigError(ValueError):
    def __init__(self, section, key, message):
        self.section, self.key = section, key
        where = f"[{section}] {key}" if key else f"[{section}]"
        super().__init__(f"{where}: {message}")


def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1].strip()
    return s


class _Reader:
    def __init__(self, cp):
        self.cp = cp

    def raw(self, section, key, default=None, required=False):
        if self.cp.has_option(section, key):
            val = _unquote(self.cp.get(section, key))
            if val == "":
                raise ConfigError(section, key, "empty value")
            return val
        if required:
            raise ConfigError(section, key, "missing required key")
        return default

    def number(self, section, key, default=None, required=False):
        val = self.raw(section, key, None, required)
        if val is None:
            return default
        try:
            out = float(val)
        except ValueError:
            raise ConfigError(section, key, f"not a number: {val!r}") from None
        if not math.isfinite(out):
            raise ConfigError(section, key, f"must be finite, got {val!r}")
        return out

    def integer(self, section, key, default=None):
        val = self.raw(section, key)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise ConfigError(section, key, f"not an integer: {val!r}") from None

    def expr(self, section, key, allowed, default=None, required=False):
        text = self.raw(section, key, default, required)
        if text is None:
            return None
        try:
            e = compile_expr(text)
        except ExprError as exc:
            raise ConfigError(section, key, str(exc)) from None
        extra = free_vars(e) - set(allowed)
        if extra:
            raise ConfigError(section, key,
                              f"uses {', '.join(sorted(extra))}; allowed: {', '.join(allowed) or 'none'}")
        return e


@dataclass
class ProblemConfig:
    """Validated problem description. Objects are built per grid on demand."""

    kind: str
    a: float
    b: float
    n: int
    exprs: dict
    gamma1: float = 0.5
    gamma2: float = 0.5
    x_a: float | None = None
    z_a: float | None = None
    T: object = "auto"
    operator: str | None = None
    fd_step: float = DEFAULT_FD_STEP
    tol: float = DEFAULT_TOL
    root_tol: float = DEFAULT_ROOT_TOL
    space: list = field(default_factory=list)
    ns: list = field(default_factory=list)
    space_gammas: list = field(default_factory=list)

    # ---- builders
    def grid(self, n: int | None = None) -> Grid:
        return Grid(self.a, self.b, n or self.n)

    def order(self, key, a=None, b=None, name=None) -> OrderFunction:
        a = self.a if a is None else a
        b = self.b if b is None else b
        try:
            return OrderFunction(self.exprs[key], a, b, name=name or key)
        except OrderError as exc:
            raise ConfigError("orders", key, str(exc)) from None

    def spec(self) -> CombinedSpec:
        beta_key = "beta" if "beta" in self.exprs else "alpha"
        return CombinedSpec(self.order("alpha"), self.order(beta_key, name="beta"),
                            self.gamma1, self.gamma2)

    def space_specs(self):
        out = []
        for i, (ai, bi) in enumerate(self.space, start=1):
            al, be = f"alpha_s{i}", f"beta_s{i}"
            g1, g2 = self.space_gammas[i - 1]
            out.append(CombinedSpec(self.order(al, ai, bi), self.order(be, ai, bi), g1, g2))
        return out

    def space_grids(self, ns=None):
        ns = ns or self.ns
        return [Grid(ai, bi, m) for (ai, bi), m in zip(self.space, ns)]

    def trajectory(self, grid: Grid, key="x") -> GridFunction:
        try:
            return GridFunction.from_expr(grid, self.exprs[key])
        except (ExprError, GridError) as exc:
            raise ConfigError("trajectory", key, f"cannot be sampled: {exc}") from None

    def field(self, tg: Grid, sgs) -> Field:
        try:
            return Field.from_expr(tg, sgs, self.exprs["x"])
        except (ExprError, GridError) as exc:
            raise ConfigError("trajectory", "x", f"cannot be sampled: {exc}") from None

    def _x_a(self, x_a):
        return float(x_a) if self.x_a is None else self.x_a

    def herglotz(self, n=None):
        g = self.grid(n)
        x = self.trajectory(g)
        lag = Lagrangian(self.exprs["L"], self.fd_step)
        return HerglotzProblem(g, self.spec(), lag, self._x_a(x.values[0]), self.z_a), x

    def classic(self, n=None):
        g = self.grid(n)
        x = self.trajectory(g)
        lag = Lagrangian(self.exprs["L"], self.fd_step, variables=("t", "x", "v"))
        phi = terminal_cost(self.exprs["phi"], self.fd_step)
        return ClassicProblem(g, self.spec(), lag, phi, self._x_a(x.values[0])), x

    def multidim(self, n=None, ns=None):
        tg = self.grid(n)
        sgs = self.space_grids(ns)
        fld = self.field(tg, sgs)
        lag = multi_lagrangian(self.exprs["L"], len(sgs), self.fd_step)
        prob = MultiProblem(tg, sgs, self.spec(), self.space_specs(), lag, self.exprs["g"], self.z_a)
        return prob, fld


def _parse_space(r: _Reader):
    text = r.raw("grid", "space", required=True)
    out = []
    for part in text.split(";"):
        bits = [b.strip() for b in part.split(",")]
        try:
            ai, bi = (float(b) for b in bits)
        except ValueError:
            raise ConfigError("grid", "space", f"expected 'a1,b1; a2,b2; ...', got {text!r}") from None
        if not (math.isfinite(ai) and math.isfinite(bi) and ai < bi):
            raise ConfigError("grid", "space", f"need finite a < b, got {part.strip()!r}")
        out.append((ai, bi))
    return out


def parse_config(text: str, grid: int | None = None, source: str = "<config>") -> ProblemConfig:
    """Parse and validate INI `text`; `grid` overrides ``[grid] n``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("problem", None, f"malformed config: {exc}") from None
    r = _Reader(cp)

    kind = r.raw("problem", "kind", required=True)
    if kind not in KINDS:
        raise ConfigError("problem", "kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    a = r.number("grid", "a", required=True)
    b = r.number("grid", "b", required=True)
    if not a < b:
        raise ConfigError("grid", "b", f"need a < b, got [{a}, {b}]")
    n = grid if grid is not None else r.integer("grid", "n", DEFAULT_N)
    if n < 2:
        raise ConfigError("grid", "n", f"need at least 2 subintervals, got {n}")

    cfg = ProblemConfig(kind=kind, a=a, b=b, n=n, exprs={})
    cfg.fd_step = r.number("lagrangian", "fd_step", DEFAULT_FD_STEP)
    if not cfg.fd_step > 0:
        raise ConfigError("lagrangian", "fd_step", "must be positive")
    cfg.tol = r.number("tolerances", "tol", DEFAULT_TOL)
    cfg.root_tol = r.number("tolerances", "root_tol", DEFAULT_ROOT_TOL)
    for key in ("tol", "root_tol"):
        if not getattr(cfg, key) > 0:
            raise ConfigError("tolerances", key, "must be positive")

    dims = 0
    if kind == "multidim":
        cfg.space = _parse_space(r)
        dims = len(cfg.space)
        ns_text = r.raw("grid", "ns", str(DEFAULT_N))
        try:
            ns = [int(v) for v in ns_text.split(",")]
        except ValueError:
            raise ConfigError("grid", "ns", f"expected integers, got {ns_text!r}") from None
        if len(ns) == 1:
            ns = ns * dims
        if len(ns) != dims or min(ns) < 2:
            raise ConfigError("grid", "ns", f"need {dims} sizes of at least 2, got {ns_text!r}")
        cfg.ns = ns

    snames = space_names(dims)
    traj_vars = ("t",) + snames
    ex = cfg.exprs
    ex["x"] = r.expr("trajectory", "x", traj_vars, required=True)

    # orders
    needs_pair = kind != "operator"
    ex["alpha"] = r.expr("orders", "alpha", ("t", "tau"), required=True)
    beta = r.expr("orders", "beta", ("t", "tau"), required=needs_pair)
    if beta is not None:
        ex["beta"] = beta
    op = None
    if kind == "operator":
        op = r.raw("problem", "operator", required=True)
        if op not in OPERATORS:
            raise ConfigError("problem", "operator", f"must be one of {', '.join(OPERATORS)}, got {op!r}")
        cfg.operator = op
    if needs_pair or op in ("combined-caputo", "dual-rl"):
        cfg.gamma1 = r.number("orders", "gamma1", required=True)
        cfg.gamma2 = r.number("orders", "gamma2", required=True)
    for key in ("gamma1", "gamma2"):
        if not 0.0 <= getattr(cfg, key) <= 1.0:
            raise ConfigError("orders", key, f"must lie in [0, 1], got {getattr(cfg, key)!r}")
    for i in range(1, dims + 1):
        for base in ("alpha", "beta"):
            key = f"{base}_s{i}"
            ex[key] = r.expr("orders", key, ("t", "tau"), required=True)
        g1 = r.number("orders", f"gamma1_s{i}", required=True)
        g2 = r.number("orders", f"gamma2_s{i}", required=True)
        for key, val in ((f"gamma1_s{i}", g1), (f"gamma2_s{i}", g2)):
            if not 0.0 <= val <= 1.0:
                raise ConfigError("orders", key, f"must lie in [0, 1], got {val!r}")
        cfg.space_gammas.append((g1, g2))

    # validate orders on their lattices now so errors point at [orders]
    cfg.order("alpha")
    if "beta" in ex:
        cfg.order("beta")
    for i, (ai, bi) in enumerate(cfg.space, start=1):
        cfg.order(f"alpha_s{i}", ai, bi)
        cfg.order(f"beta_s{i}", ai, bi)

    # problem data
    T = r.raw("problem", "T", "auto")
    if T != "auto":
        try:
            T = float(T)
        except ValueError:
            raise ConfigError("problem", "T", f"must be 'auto' or a number, got {T!r}") from None
        if not a <= T <= b:
            raise ConfigError("problem", "T", f"{T!r} lies outside [{a}, {b}]")
    cfg.T = T
    cfg.x_a = r.number("problem", "x_a")
    if kind in ("herglotz", "multidim"):
        cfg.z_a = r.number("problem", "z_a", required=True)
    if kind == "classic" and T == "auto":
        raise ConfigError("problem", "T", "classic problems need a numeric terminal time")
    if kind == "operator" and op == "dual-rl":
        if T == "auto":
            raise ConfigError("problem", "T", "the dual operator needs a numeric upper limit T")

    if kind == "herglotz":
        ex["L"] = r.expr("lagrangian", "L", ("t", "x", "v", "z"), required=True)
    elif kind == "classic":
        ex["L"] = r.expr("lagrangian", "L", ("t", "x", "v"), required=True)
        ex["phi"] = r.expr("lagrangian", "phi", ("T", "xT"), default="0")
    elif kind == "multidim":
        ex["L"] = r.expr("lagrangian", "L", multi_variables(dims), required=True)
        ex["g"] = r.expr("trajectory", "g", traj_vars, required=True)
    y = r.expr("trajectory", "y", ("t",))
    if y is not None:
        ex["y"] = y
    if kind != "multidim":
        x0 = cfg.trajectory(Grid(a, b, 2)).values[0]
        if cfg.x_a is not None and abs(cfg.x_a - x0) > 1e-12:
            raise ConfigError("problem", "x_a", f"{cfg.x_a!r} differs from x(a)={x0!r}")
    return cfg


def load_problem(path, grid: int | None = None) -> ProblemConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("problem", None, f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_config(text, grid, source=str(path))
