"""Fractional Herglotz problems: solve for z, weight lambda, optimality residuals.

Given a candidate trajectory ``x`` on ``[a, b]`` the functional ``z``
solves ``z' = L(t, x, v, z)``, ``z(a) = z_a``, where ``v`` is the
combined Caputo derivative of ``x``. The functions here evaluate the
Euler-Lagrange and transversality residuals a true extremal must zero,
and locate the free terminal time from ``L(T) = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .expr import ExprError, compile_expr, evaluate, free_vars, to_source
from .fracops import (
    CombinedSpec, Grid, GridError, GridFunction, combined_caputo_lines, dual_rl_lines,
    gradient, rl_deriv_lines, rl_integral_lines,
)

__all__ = [
    "SolveError", "Lagrangian", "HerglotzProblem", "VerificationReport", "TerminalTime",
    "caputo_profile", "solve_z", "lambda_profile", "el_residual_interior",
    "el_residual_tail", "transversality", "find_terminal_time", "verify",
    "integer_order_residual",
]


class SolveError(RuntimeError):
    """Failure while integrating; ``last_good`` is the last node with a finite z."""

    def __init__(self, message, node=None, last_good=None):
        super().__init__(message)
        self.node = node
        self.last_good = last_good


class Lagrangian:
    """Expression in named arguments with central-difference partials.

    The step for a partial in argument ``u`` is ``fd_step * max(1, |u|)``.
    """

    HERGLOTZ_VARS = ("t", "x", "v", "z")

    def __init__(self, expr, fd_step: float = 1e-6, variables=HERGLOTZ_VARS):
        self.expr = compile_expr(expr)
        self.fd_step = float(fd_step)
        self.variables = tuple(variables)
        extra = free_vars(self.expr) - set(self.variables)
        if extra:
            raise ValueError(
                f"Lagrangian may only use {', '.join(self.variables)}; found {sorted(extra)}")
        self._uses = free_vars(self.expr)

    def __repr__(self):
        return f"Lagrangian({to_source(self.expr)!r})"

    def __call__(self, **args):
        return evaluate(self.expr, args)

    def uses(self, name: str) -> bool:
        return name in self._uses

    def partial(self, name: str, **args):
        """Central difference in argument `name`; exactly 0 if `name` is absent."""
        u = np.asarray(args[name], dtype=float)
        if name not in self._uses:
            return np.zeros(np.broadcast_shapes(*(np.shape(v) for v in args.values())))
        d = self.fd_step * np.maximum(1.0, np.abs(u))
        up, dn = u + d, u - d
        fp = evaluate(self.expr, {**args, name: up})
        fm = evaluate(self.expr, {**args, name: dn})
        return (np.asarray(fp) - np.asarray(fm)) / (up - dn)


@dataclass(frozen=True)
class HerglotzProblem:
    grid: Grid
    spec: CombinedSpec
    lagrangian: Lagrangian
    x_a: float
    z_a: float

    def __post_init__(self):
        for order in (self.spec.alpha, self.spec.beta):
            if not order.a <= self.grid.a < self.grid.b <= order.b:
                raise ValueError(
                    f"order {order.name} is declared on [{order.a}, {order.b}], "
                    f"grid [{self.grid.a}, {self.grid.b}] is not inside it")
        if not (math.isfinite(self.x_a) and math.isfinite(self.z_a)):
            raise ValueError("x_a and z_a must be finite")


@dataclass
class TerminalTime:
    T: float
    z_at_T: float
    bracket: tuple
    boundary: bool = False

    def __float__(self):
        return self.T


@dataclass
class VerificationReport:
    T: float
    z_at_T: float
    el_interior_norm: float
    el_tail_norm: float
    trans_at_T: float
    trans_at_b: float
    lagrangian_at_T: float
    T_node: float = math.nan
    flags: list = field(default_factory=list)
    profiles: dict = field(default_factory=dict, repr=False)

    KEYS = ("T", "T_node", "z_at_T", "el_interior_norm", "el_tail_norm",
            "trans_at_T", "trans_at_b", "lagrangian_at_T")

    def residuals(self, b: float):
        out = {
            "el_interior_norm": self.el_interior_norm,
            "el_tail_norm": self.el_tail_norm,
            "trans_at_T": abs(self.trans_at_T),
            "trans_at_b": abs(self.trans_at_b),
        }
        if self.T < b:
            out["lagrangian_at_T"] = abs(self.lagrangian_at_T)
        return out

    def passed(self, tol: float, b: float) -> bool:
        return all(math.isfinite(v) and v < tol for v in self.residuals(b).values())

    def to_dict(self):
        d = {k: _finite_or_none(getattr(self, k)) for k in self.KEYS}
        d["flags"] = list(self.flags)
        return d


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


# ---------------------------------------------------------------- profiles

def caputo_profile(x: GridFunction, spec: CombinedSpec) -> GridFunction:
    """Combined Caputo derivative of `x` at every node."""
    return GridFunction(x.grid, combined_caputo_lines(x.values, x.grid, spec)[0])


def _args(problem, x, v, z=None):
    args = {"t": problem.grid.nodes, "x": x.values, "v": v.values}
    if z is not None:
        args["z"] = z.values
    return args


def _check_x(problem, x):
    if not x.grid.same_as(problem.grid):
        raise GridError("trajectory grid differs from the problem grid")
    if abs(x.values[0] - problem.x_a) > 1e-12:
        raise ValueError(f"trajectory starts at {x.values[0]!r}, expected x_a={problem.x_a!r}")


def solve_z(problem: HerglotzProblem, x: GridFunction, v: GridFunction | None = None,
            truncate: bool = False) -> GridFunction:
    """Classical RK4 for ``z' = L(t, x, v, z)`` with step equal to the grid spacing.

    ``x`` and ``v`` are linearly interpolated at half steps. With
    ``truncate=True`` a blow-up ends the solve and z is returned on the
    nodes reached so far (at least ``a`` and one more); otherwise it raises.
    """
    _check_x(problem, x)
    if v is None:
        v = caputo_profile(x, problem.spec)
    L = problem.lagrangian
    g = problem.grid
    t, xs, vs = g.nodes, x.values, v.values
    z = np.empty(g.n + 1)
    z[0] = problem.z_a

    def rhs(j, tt, xx, vv, zz):
        try:
            val = L(t=tt, x=xx, v=vv, z=zz)
        except ExprError as exc:
            raise SolveError(f"L cannot be evaluated near node {j} (t={tt!r}): {exc}", j, j) from exc
        if not math.isfinite(val):
            raise SolveError(f"L is not finite near node {j} (t={tt!r})", j, j)
        return val

    try:
        _rk4(g, t, xs, vs, z, rhs)
    except SolveError as exc:
        if not truncate or exc.last_good < 1:
            raise
        return GridFunction(g.sub(0, exc.last_good), z[:exc.last_good + 1])
    return GridFunction(g, z)


def _rk4(g, t, xs, vs, z, rhs):
    h = g.h
    for j in range(g.n):
        t0, t1 = float(t[j]), float(t[j + 1])
        tm = t0 + 0.5 * h
        x0, x1, v0, v1 = float(xs[j]), float(xs[j + 1]), float(vs[j]), float(vs[j + 1])
        xm, vm = 0.5 * (x0 + x1), 0.5 * (v0 + v1)
        zj = z[j]
        k1 = rhs(j, t0, x0, v0, zj)
        k2 = rhs(j, tm, xm, vm, zj + 0.5 * h * k1)
        k3 = rhs(j, tm, xm, vm, zj + 0.5 * h * k2)
        k4 = rhs(j, t1, x1, v1, zj + h * k3)
        z[j + 1] = zj + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not math.isfinite(z[j + 1]):
            raise SolveError(f"z is not finite at node {j + 1}", j + 1, j)


def lambda_profile(problem: HerglotzProblem, x: GridFunction, z: GridFunction,
                   v: GridFunction | None = None) -> GridFunction:
    """``exp(-int_a^t dL/dz)`` by cumulative trapezoid; equals 1 at ``a``."""
    if v is None:
        v = caputo_profile(x, problem.spec)
    dz = problem.lagrangian.partial("z", **_args(problem, x, v, z))
    if not np.all(np.isfinite(dz)):
        raise SolveError("dL/dz is not finite along the trajectory")
    h = problem.grid.h
    acc = np.concatenate(([0.0], np.cumsum(0.5 * h * (dz[1:] + dz[:-1]))))
    return GridFunction(problem.grid, np.exp(-acc))


def _weighted_dv(problem, x, z, lam, v):
    args = _args(problem, x, v, z)
    dv = problem.lagrangian.partial("v", **args)
    return args, lam.values * dv


def el_residual_interior(problem: HerglotzProblem, x: GridFunction, z: GridFunction,
                         lam: GridFunction, T: float, v: GridFunction | None = None) -> GridFunction:
    """``dL/dx * lambda + dual_rl(lambda * dL/dv)`` on the nodes of ``[a, T]``."""
    g = problem.grid
    K = g.index(T)
    if K == 0:
        raise GridError("the interior residual needs T > a")
    if v is None:
        v = caputo_profile(x, problem.spec)
    args, y = _weighted_dv(problem, x, z, lam, v)
    dx = problem.lagrangian.partial("x", **args)
    res = dx[:K + 1] * lam.values[:K + 1] + dual_rl_lines(y, g, problem.spec, K)[0]
    return GridFunction(g.sub(0, K), res)


def _tail(y, g: Grid, spec: CombinedSpec, K: int):
    """Tail bracket for each row of `y`; shape ``(m, n - K + 1)``."""
    y = np.atleast_2d(y)
    n = g.n
    if spec.gamma2 == 0.0:
        return np.zeros((y.shape[0], n - K + 1))
    rows = np.arange(K, n + 1)
    from_a = rl_deriv_lines(y, g, spec.beta, "left", rows)
    from_T = rl_deriv_lines(y[:, K:], g.sub(K, n), spec.beta, "left")
    return spec.gamma2 * (from_a - from_T)


def el_residual_tail(problem: HerglotzProblem, x: GridFunction, z: GridFunction,
                     lam: GridFunction, T: float, v: GridFunction | None = None) -> GridFunction:
    """``gamma2 * (aD_t^beta - TD_t^beta)(lambda * dL/dv)`` on the nodes of ``[T, b]``."""
    g = problem.grid
    K = g.index(T)
    if K == g.n:
        raise GridError("the tail residual needs T < b")
    if v is None:
        v = caputo_profile(x, problem.spec)
    _, y = _weighted_dv(problem, x, z, lam, v)
    return GridFunction(g.sub(K, g.n), _tail(y, g, problem.spec, K)[0])


def _bracket_terms(y, g: Grid, spec: CombinedSpec, K: int):
    """The two RL-integral brackets of the transversality conditions.

    Returns ``(at_T, at_b)`` where::

        at_T = gamma1 * tI_T^(1-alpha) y (T) - gamma2 * TI_t^(1-beta) y (T)
        at_b = gamma2 * (TI_t^(1-beta) y (b) - aI_t^(1-beta) y (b))

    Works on the last axis of `y` (shape ``(m, n + 1)``). Integrals over
    an empty window are zero.
    """
    y = np.atleast_2d(y)
    m, n = y.shape[0], g.n
    at_T = np.zeros(m)
    if spec.gamma1 != 0.0 and K > 0:
        at_T += spec.gamma1 * rl_integral_lines(
            y[:, :K + 1], g.sub(0, K), spec.alpha, "right", complement=True, rows=[K])[:, 0]
    T_from = np.zeros(m)
    T_to_b = np.zeros(m)
    if spec.gamma2 != 0.0 and K < n:
        sub = g.sub(K, n)
        both = rl_integral_lines(y[:, K:], sub, spec.beta, "left", complement=True, rows=[0, n - K])
        T_from, T_to_b = both[:, 0], both[:, 1]
    at_T -= spec.gamma2 * T_from
    at_b = np.zeros(m)
    if spec.gamma2 != 0.0:
        a_to_b = rl_integral_lines(y, g, spec.beta, "left", complement=True, rows=[n])[:, 0]
        at_b = spec.gamma2 * (T_to_b - a_to_b)
    return at_T, at_b


def transversality(problem: HerglotzProblem, x: GridFunction, z: GridFunction,
                   lam: GridFunction, T: float, v: GridFunction | None = None):
    """Return ``(trans_at_T, trans_at_b, lagrangian_at_T)``.

    The brackets are evaluated at grid nodes; at ``t = T`` both integrals
    run over an empty interval.
    """
    g = problem.grid
    K = g.index(T)
    if v is None:
        v = caputo_profile(x, problem.spec)
    args, y = _weighted_dv(problem, x, z, lam, v)
    at_T, at_b = _bracket_terms(y, g, problem.spec, K)
    L_T = problem.lagrangian(t=float(g.nodes[K]), x=float(x.values[K]),
                             v=float(v.values[K]), z=float(z.values[K]))
    return float(at_T[0]), float(at_b[0]), float(L_T)


def _bisect(f, lo, hi, flo, tol, xtol=1e-10, max_iter=200):
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < tol or hi - lo < xtol:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scan_roots(nodes, g_nodes, g_at, tol=1e-8):
    """Roots of a function known at nodes and computable in between.

    Exact zeros at nodes are returned as is; every sign change between
    neighbours is refined by bisection until ``|g| < tol`` or the bracket
    is shorter than 1e-10. Returns a list of ``(root, (lo, hi))``.
    """
    roots = []
    for j in range(len(nodes)):
        if g_nodes[j] == 0.0:
            roots.append((float(nodes[j]), (float(nodes[j]), float(nodes[j]))))
        elif j + 1 < len(nodes) and g_nodes[j] * g_nodes[j + 1] < 0.0:
            lo, hi = float(nodes[j]), float(nodes[j + 1])
            roots.append((_bisect(g_at, lo, hi, g_nodes[j], tol), (lo, hi)))
    return roots


def find_terminal_time(problem: HerglotzProblem, x: GridFunction, v: GridFunction | None = None,
                       z: GridFunction | None = None, tol: float = 1e-8) -> TerminalTime:
    """Free terminal time from ``L[x, z](T) = 0``.

    Among all roots the one with the smallest (linearly interpolated)
    ``z(T)`` wins. With no sign change the result is ``b`` with
    ``boundary=True``.
    """
    g = problem.grid
    if v is None:
        v = caputo_profile(x, problem.spec)
    if z is None:
        z = solve_z(problem, x, v)
    L = problem.lagrangian
    gn = np.broadcast_to(L(**_args(problem, x, v, z)), g.nodes.shape)

    def g_at(T):
        return L(t=T, x=float(x(T)), v=float(v(T)), z=float(z(T)))

    roots = scan_roots(g.nodes, gn, g_at, tol)
    if not roots:
        return TerminalTime(g.b, float(z.values[-1]), (g.b, g.b), boundary=True)
    best = min(roots, key=lambda r: float(z(r[0])))
    return TerminalTime(best[0], float(z(best[0])), best[1])


def integer_order_residual(problem: HerglotzProblem, x: GridFunction, z: GridFunction,
                           lam: GridFunction, T: float, v: GridFunction | None = None) -> GridFunction:
    """``dL/dx * lambda + (gamma2 - gamma1) d/dt (lambda * dL/dv)`` on ``[a, T]``.

    The order-one limit of the interior Euler-Lagrange expression.
    """
    g = problem.grid
    K = g.index(T)
    if v is None:
        v = caputo_profile(x, problem.spec)
    args, y = _weighted_dv(problem, x, z, lam, v)
    dx = problem.lagrangian.partial("x", **args)
    sp = problem.spec
    res = dx * lam.values + (sp.gamma2 - sp.gamma1) * gradient(y, g.h)
    return GridFunction(g.sub(0, K), res[:K + 1])


def verify(problem: HerglotzProblem, x: GridFunction, T="auto", tol: float = 5e-3) -> VerificationReport:
    """Run the whole check for a candidate extremal.

    ``T="auto"`` locates the terminal time first. An off-node ``T`` is
    reported as found while the residuals use the nearest grid node.
    Failures become flags; nothing raises past input validation.
    """
    flags = []
    nan = math.nan
    _check_x(problem, x)
    a, b = problem.grid.a, problem.grid.b
    try:
        v = caputo_profile(x, problem.spec)
        z = solve_z(problem, x, v, truncate=True)
        if z.grid.n < problem.grid.n:
            m = z.grid.n
            flags.append(f"z-not-finite-beyond t={z.grid.b:.6g}: residuals use [a, {z.grid.b:.6g}]")
            problem = replace(problem, grid=z.grid)
            x, v = x.restrict(0, m), v.restrict(0, m)
        lam = lambda_profile(problem, x, z, v)
    except (SolveError, ExprError, GridError) as exc:
        return VerificationReport(nan, nan, nan, nan, nan, nan, nan, flags=[f"solve-failed: {exc}"])
    g = problem.grid

    if T == "auto":
        tt = find_terminal_time(problem, x, v, z)
        T_val = tt.T
        if tt.boundary:
            flags.append("boundary")
    else:
        T_val = float(T)
        if not a <= T_val <= b:
            raise GridError(f"T={T_val!r} outside [{a}, {b}]")
        if T_val > g.b:
            flags.append("T-beyond-solve: residuals use the last finite node")
    K = int(round((T_val - g.a) / g.h))
    K = min(max(K, 0), g.n)
    T_node = float(g.nodes[K])
    if abs(T_node - T_val) > 1e-9 * max(1.0, abs(T_val)):
        flags.append("T-off-grid: residuals use the nearest node")

    profiles = {"t": g.nodes, "x": x.values, "v": v.values, "z": z.values, "lambda": lam.values}
    try:
        if K == 0:
            flags.append("T-at-a: interior residual is empty")
            el_int = 0.0
        else:
            r_int = el_residual_interior(problem, x, z, lam, T_node, v)
            profiles["el_interior"] = r_int.values
            el_int = float(np.max(np.abs(r_int.values)))
        if K == g.n:
            el_tail = 0.0
        else:
            r_tail = el_residual_tail(problem, x, z, lam, T_node, v)
            profiles["el_tail"] = r_tail.values
            el_tail = float(np.max(np.abs(r_tail.values)))
        tr_T, tr_b, _ = transversality(problem, x, z, lam, T_node, v)
    except (GridError, ExprError, FloatingPointError) as exc:
        flags.append(f"residual-failed: {exc}")
        el_int = el_tail = tr_T = tr_b = math.inf
    for name, val in (("el-interior", el_int), ("el-tail", el_tail)):
        if not math.isfinite(val):
            flags.append(f"{name}-residual-not-finite")
        elif val >= tol:
            flags.append(f"{name}-residual-above-tol")

    try:
        L_T = problem.lagrangian(t=T_val, x=float(x(T_val)), v=float(v(T_val)), z=float(z(T_val)))
    except ExprError as exc:
        flags.append(f"lagrangian-failed: {exc}")
        L_T = math.inf
    rep = VerificationReport(
        T=T_val, z_at_T=float(z(T_val)), el_interior_norm=el_int, el_tail_norm=el_tail,
        trans_at_T=tr_T, trans_at_b=tr_b, lagrangian_at_T=float(L_T), T_node=T_node,
        flags=flags, profiles=profiles)
    for name, val in rep.residuals(b).items():
        if name.startswith("trans") or name == "lagrangian_at_T":
            if abs(val) >= tol:
                flags.append(f"{name.replace('_', '-')}-above-tol")
    return rep
