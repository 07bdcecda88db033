"""Variable-order fractional integrals and derivatives on uniform grids.

Conventions
-----------
An order function is an expression in ``t`` and ``tau`` giving
``alpha(t, tau)`` on ``[a, b]^2``. Left operators evaluated at ``t`` use
``alpha(t, tau)`` with ``tau`` the integration variable; right operators
use ``alpha(tau, t)``, i.e. the integration variable is the *first*
argument.

Every operator is a product-integration rule: on each subinterval the
order is frozen at the subinterval midpoint, the integrand's smooth
factor is interpolated linearly and the kernel moments are integrated
exactly. Riemann-Liouville derivatives difference the discrete integral
of order ``1 - alpha`` (central in the interior, second-order one-sided
at window ends). Caputo derivatives integrate a second-order finite
difference derivative of the data.

The ``*_lines`` functions work on stacks of vectors of shape
``(m, n + 1)`` sharing one grid; they are what the profile and node
functions are built on.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .expr import ExprError, compile_expr, evaluate, free_vars, to_source
from .special import gamma_fn

__all__ = [
    "GridError", "OrderError", "Grid", "GridFunction", "OrderFunction", "CombinedSpec",
    "gamma_fn", "trapezoid", "gradient",
    "rl_integral_lines", "rl_deriv_lines", "caputo_lines", "combined_caputo_lines",
    "dual_rl_lines", "left_rl_integral", "right_rl_integral", "left_caputo",
    "right_caputo", "left_rl_deriv", "right_rl_deriv", "combined_caputo",
    "dual_rl", "ibp_residual", "left_rl_integral_profile",
    "right_rl_integral_profile", "left_caputo_profile", "right_caputo_profile",
    "left_rl_deriv_profile", "right_rl_deriv_profile", "combined_caputo_profile",
    "dual_rl_profile",
]

LATTICE = 65


class GridError(ValueError):
    pass


class OrderError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_j = a + j (b - a) / n``, ``j = 0..n``."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.a < self.b:
            raise GridError(f"need finite a < b, got [{self.a}, {self.b}]")
        if int(self.n) != self.n or self.n < 1:
            raise GridError(f"need a positive number of subintervals, got {self.n}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = self.a + (self.b - self.a) * np.arange(self.n + 1) / self.n
        nodes[-1] = self.b
        nodes.flags.writeable = False
        return nodes

    def index(self, t: float) -> int:
        """Index of the node equal to `t` (to rounding); raises otherwise."""
        x = (t - self.a) / self.h
        k = int(round(x))
        if k < 0 or k > self.n or abs(x - k) > 1e-7:
            raise GridError(f"{t!r} is not a node of the grid on [{self.a}, {self.b}] with n={self.n}")
        return k

    def sub(self, i0: int, i1: int) -> "Grid":
        """Grid on nodes ``i0..i1`` of this one."""
        if not 0 <= i0 < i1 <= self.n:
            raise GridError(f"bad node window [{i0}, {i1}] for n={self.n}")
        return Grid(float(self.nodes[i0]), float(self.nodes[i1]), i1 - i0)

    def same_as(self, other: "Grid") -> bool:
        return self.n == other.n and self.a == other.a and self.b == other.b


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n + 1,):
            raise GridError(f"expected {self.grid.n + 1} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("grid function values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_expr(cls, grid: Grid, expr, var: str = "t", **bindings) -> "GridFunction":
        e = compile_expr(expr)
        vals = evaluate(e, {var: grid.nodes, **bindings})
        return cls(grid, np.broadcast_to(vals, grid.nodes.shape))

    @property
    def nodes(self):
        return self.grid.nodes

    def __call__(self, t):
        """Linear interpolation between nodes."""
        return np.interp(t, self.grid.nodes, self.values)

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index(t)])

    def restrict(self, i0: int, i1: int) -> "GridFunction":
        return GridFunction(self.grid.sub(i0, i1), self.values[i0:i1 + 1])


class OrderFunction:
    """Order ``alpha(t, tau)`` with values in (0, 1) on ``[a, b]^2``.

    Checked on a 65 x 65 lattice at construction; values on or outside
    the open unit interval raise :class:`OrderError` (nothing is clamped).
    """

    def __init__(self, expr, a: float, b: float, name: str = "alpha"):
        self.expr = compile_expr(expr)
        self.a = float(a)
        self.b = float(b)
        self.name = name
        extra = free_vars(self.expr) - {"t", "tau"}
        if extra:
            raise OrderError(f"order {name} may only use t and tau, found {sorted(extra)}")
        const = not free_vars(self.expr)
        self.constant = None
        lat = np.linspace(self.a, self.b, LATTICE)
        try:
            if const:
                vals = np.array(evaluate(self.expr, {}))
                self.constant = float(vals)
            else:
                vals = np.asarray(evaluate(self.expr, {"t": lat[:, None], "tau": lat[None, :]}))
        except ExprError as exc:
            raise OrderError(f"order {name} cannot be evaluated on [{a}, {b}]^2: {exc}") from exc
        vals = np.broadcast_to(vals, (LATTICE, LATTICE))
        bad = ~((vals > 0.0) & (vals < 1.0))
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise OrderError(
                f"order {name} = {float(vals[i, j]):.17g} at (t, tau) = ({float(lat[i]):.17g}, "
                f"{float(lat[j]):.17g}) "
                "lies outside (0, 1)")

    def __repr__(self):
        return f"OrderFunction({to_source(self.expr)!r}, {self.a}, {self.b})"

    def __call__(self, t, tau):
        if self.constant is not None:
            return np.broadcast_to(self.constant, np.broadcast_shapes(np.shape(t), np.shape(tau)))
        out = evaluate(self.expr, {"t": t, "tau": tau})
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(t), np.shape(tau)))


@dataclass(frozen=True)
class CombinedSpec:
    """Weights and orders of ``gamma1 * left_caputo(alpha) + gamma2 * right_caputo(beta)``."""

    alpha: OrderFunction
    beta: OrderFunction
    gamma1: float
    gamma2: float
    flags: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for g, nm in ((self.gamma1, "gamma1"), (self.gamma2, "gamma2")):
            if not 0.0 <= g <= 1.0:
                raise ValueError(f"{nm} must lie in [0, 1], got {g!r}")
        if self.degenerate:
            object.__setattr__(self, "flags", self.flags + ("degenerate",))
            warnings.warn("gamma = (0, 0): the combined operator is identically zero", stacklevel=3)

    @property
    def degenerate(self) -> bool:
        return self.gamma1 == 0.0 and self.gamma2 == 0.0

    @property
    def gamma_bar(self):
        return (self.gamma2, self.gamma1)


# ---------------------------------------------------------------- helpers

def trapezoid(values, h: float, axis: int = -1):
    v = np.asarray(values, dtype=float)
    v = np.moveaxis(v, axis, -1)
    if v.shape[-1] < 2:
        return np.zeros(v.shape[:-1]) if v.ndim > 1 else 0.0
    out = h * (v[..., 1:-1].sum(axis=-1) + 0.5 * (v[..., 0] + v[..., -1]))
    return out if np.ndim(out) else float(out)


def gradient(values, h: float):
    """Derivative along the last axis: central inside, 2nd-order one-sided at ends."""
    v = np.asarray(values, dtype=float)
    n1 = v.shape[-1]
    out = np.zeros_like(v)
    if n1 == 2:
        out[...] = ((v[..., 1] - v[..., 0]) / h)[..., None]
    elif n1 > 2:
        out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * h)
        out[..., 0] = (-3.0 * v[..., 0] + 4.0 * v[..., 1] - v[..., 2]) / (2.0 * h)
        out[..., -1] = (3.0 * v[..., -1] - 4.0 * v[..., -2] + v[..., -3]) / (2.0 * h)
    return out


def _stencil(k: int, n: int, h: float):
    """Rows and weights of the derivative rule used by :func:`gradient` at node k."""
    if n == 1:
        return [0, 1], [-1.0 / h, 1.0 / h]
    if k == 0:
        return [0, 1, 2], [-1.5 / h, 2.0 / h, -0.5 / h]
    if k == n:
        return [n - 2, n - 1, n], [0.5 / h, -2.0 / h, 1.5 / h]
    return [k - 1, k + 1], [-0.5 / h, 0.5 / h]


def _rows(grid: Grid, rows):
    if rows is None:
        return np.arange(grid.n + 1)
    return np.asarray(rows, dtype=np.int64).reshape(-1)


def _powers(order: OrderFunction, first, second, complement: bool):
    """Kernel powers shaped like ``first`` x ``second`` (broadcast when constant)."""
    if order.constant is not None:
        shape = np.broadcast_shapes(np.shape(first), np.shape(second))
        p0 = 1.0 - order.constant if complement else order.constant
        return np.broadcast_to(p0, shape)
    p = order(first, second)
    if complement:
        p = 1.0 - p
    if not np.all((p > 0.0) & (p < 1.0)):
        raise OrderError(f"order {order.name} leaves (0, 1) between lattice points")
    return p


def _as_lines(Y):
    Y = np.asarray(Y, dtype=float)
    return Y[None, :] if Y.ndim == 1 else Y


# ---------------------------------------------------------------- stacked operators

def rl_integral_lines(Y, grid: Grid, order: OrderFunction, side: str = "left",
                      complement: bool = False, rows=None):
    """Riemann-Liouville integral of each row of `Y` at nodes `rows`.

    With ``complement=True`` the order is ``1 - alpha``, which is the inner
    integral of the RL and Caputo derivatives.

    Returns an array of shape ``(m, len(rows))``.
    """
    Y = _as_lines(Y)
    rows = _rows(grid, rows)
    nodes = grid.nodes
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    if side == "left":
        P = _powers(order, nodes[rows][:, None], mids[None, :], complement)
        return kernels.left_product_integrate(P, Y, grid.h, rows)
    if side == "right":
        P = _powers(order, mids[None, :], nodes[rows][:, None], complement)
        return kernels.left_product_integrate(
            P[:, ::-1], np.ascontiguousarray(Y[:, ::-1]), grid.h, grid.n - rows)
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def rl_deriv_lines(Y, grid: Grid, order: OrderFunction, side: str = "left", rows=None):
    """Riemann-Liouville derivative: difference of the order ``1 - alpha`` integral.

    The right derivative carries the leading minus sign of its definition.
    """
    Y = _as_lines(Y)
    rows = _rows(grid, rows)
    sign = 1.0 if side == "left" else -1.0
    if len(rows) == grid.n + 1 and np.array_equal(rows, np.arange(grid.n + 1)):
        F = rl_integral_lines(Y, grid, order, side, complement=True)
        return sign * gradient(F, grid.h)
    need = sorted({r for k in rows for r in _stencil(int(k), grid.n, grid.h)[0]})
    F = rl_integral_lines(Y, grid, order, side, complement=True, rows=need)
    pos = {r: i for i, r in enumerate(need)}
    out = np.zeros((Y.shape[0], len(rows)))
    for c, k in enumerate(rows):
        idx, w = _stencil(int(k), grid.n, grid.h)
        for r, wr in zip(idx, w):
            out[:, c] += wr * F[:, pos[r]]
    return sign * out


def caputo_lines(Y, grid: Grid, order: OrderFunction, side: str = "left", rows=None, dY=None):
    """Caputo derivative of each row of `Y` (derivative data by :func:`gradient`)."""
    Y = _as_lines(Y)
    if dY is None:
        dY = gradient(Y, grid.h)
    out = rl_integral_lines(dY, grid, order, side, complement=True, rows=rows)
    return out if side == "left" else -out


def combined_caputo_lines(Y, grid: Grid, spec: CombinedSpec, rows=None):
    Y = _as_lines(Y)
    dY = gradient(Y, grid.h)
    out = np.zeros((Y.shape[0], len(_rows(grid, rows))))
    if spec.gamma1 != 0.0:
        out = out + spec.gamma1 * caputo_lines(Y, grid, spec.alpha, "left", rows, dY)
    if spec.gamma2 != 0.0:
        out = out + spec.gamma2 * caputo_lines(Y, grid, spec.beta, "right", rows, dY)
    return out


def dual_rl_lines(Y, grid: Grid, spec: CombinedSpec, K: int, rows=None):
    """``gamma2 * left RL(beta) + gamma1 * right RL(alpha) with upper limit t_K``.

    Evaluated on the window of nodes ``0..K``; `rows` index that window.
    The left part uses the full grid (its value at ``t`` only depends on
    data up to ``t + h``); the right part lives on the window, so its
    derivative is one-sided at ``t_K``.
    """
    Y = _as_lines(Y)
    if not 1 <= K <= grid.n:
        raise GridError(f"upper limit node {K} must be in 1..{grid.n}")
    win = grid.sub(0, K)
    rows = _rows(win, rows)
    out = np.zeros((Y.shape[0], len(rows)))
    if spec.gamma2 != 0.0:
        out = out + spec.gamma2 * rl_deriv_lines(Y, grid, spec.beta, "left", rows)
    if spec.gamma1 != 0.0:
        out = out + spec.gamma1 * rl_deriv_lines(Y[:, :K + 1], win, spec.alpha, "right", rows)
    return out


# ---------------------------------------------------------------- grid-function API

def _node(x: GridFunction, t):
    return x.grid.index(t)


def _one(v):
    return float(v[0, 0])


def left_rl_integral(x: GridFunction, alpha: OrderFunction, t: float) -> float:
    return _one(rl_integral_lines(x.values, x.grid, alpha, "left", rows=[_node(x, t)]))


def right_rl_integral(x: GridFunction, alpha: OrderFunction, t: float) -> float:
    return _one(rl_integral_lines(x.values, x.grid, alpha, "right", rows=[_node(x, t)]))


def left_caputo(x: GridFunction, alpha: OrderFunction, t: float) -> float:
    return _one(caputo_lines(x.values, x.grid, alpha, "left", rows=[_node(x, t)]))


def right_caputo(x: GridFunction, beta: OrderFunction, t: float) -> float:
    return _one(caputo_lines(x.values, x.grid, beta, "right", rows=[_node(x, t)]))


def _deriv_node(x, order, t, side, info):
    k = _node(x, t)
    if info is not None:
        info["one_sided"] = k in (0, x.grid.n)
    return _one(rl_deriv_lines(x.values, x.grid, order, side, rows=[k]))


def left_rl_deriv(x: GridFunction, alpha: OrderFunction, t: float, info=None) -> float:
    """Left RL derivative at node `t`.

    At ``t = a`` or ``t = b`` a one-sided difference is used; pass a dict
    as `info` to receive ``info["one_sided"]``.
    """
    return _deriv_node(x, alpha, t, "left", info)


def right_rl_deriv(x: GridFunction, beta: OrderFunction, t: float, info=None) -> float:
    return _deriv_node(x, beta, t, "right", info)


def combined_caputo(x: GridFunction, spec: CombinedSpec, t: float) -> float:
    return _one(combined_caputo_lines(x.values, x.grid, spec, rows=[_node(x, t)]))


def dual_rl(y: GridFunction, spec: CombinedSpec, T: float, t: float) -> float:
    K = y.grid.index(T)
    k = y.grid.index(t)
    if k > K:
        raise GridError(f"t={t!r} lies beyond the upper limit T={T!r}")
    return _one(dual_rl_lines(y.values, y.grid, spec, K, rows=[k]))


def _profile(x, vals):
    return GridFunction(x.grid, vals[0])


def left_rl_integral_profile(x: GridFunction, alpha: OrderFunction) -> GridFunction:
    return _profile(x, rl_integral_lines(x.values, x.grid, alpha, "left"))


def right_rl_integral_profile(x: GridFunction, alpha: OrderFunction) -> GridFunction:
    return _profile(x, rl_integral_lines(x.values, x.grid, alpha, "right"))


def left_caputo_profile(x: GridFunction, alpha: OrderFunction) -> GridFunction:
    return _profile(x, caputo_lines(x.values, x.grid, alpha, "left"))


def right_caputo_profile(x: GridFunction, beta: OrderFunction) -> GridFunction:
    return _profile(x, caputo_lines(x.values, x.grid, beta, "right"))


def left_rl_deriv_profile(x: GridFunction, alpha: OrderFunction) -> GridFunction:
    return _profile(x, rl_deriv_lines(x.values, x.grid, alpha, "left"))


def right_rl_deriv_profile(x: GridFunction, beta: OrderFunction) -> GridFunction:
    return _profile(x, rl_deriv_lines(x.values, x.grid, beta, "right"))


def combined_caputo_profile(x: GridFunction, spec: CombinedSpec) -> GridFunction:
    return _profile(x, combined_caputo_lines(x.values, x.grid, spec))


def dual_rl_profile(y: GridFunction, spec: CombinedSpec, T: float) -> GridFunction:
    """Dual RL derivative on the nodes of ``[a, T]``."""
    K = y.grid.index(T)
    vals = dual_rl_lines(y.values, y.grid, spec, K)[0]
    return GridFunction(y.grid.sub(0, K), vals)


def ibp_residual(x: GridFunction, y: GridFunction, alpha: OrderFunction, second: bool = False) -> float:
    """Discrete defect of the fractional integration-by-parts formula.

    First identity (default)::

        int y * leftCaputo(x) - int x * rightRL(y) - [x * rightI^(1-alpha) y]_a^b

    Second identity (``second=True``)::

        int y * rightCaputo(x) - int x * leftRL(y) + [x * leftI^(1-alpha) y]_a^b

    Integrals use the trapezoid rule on the grid; the absolute value is
    returned.
    """
    if not x.grid.same_as(y.grid):
        raise GridError("x and y must live on the same grid")
    g = x.grid
    xv, yv = x.values, y.values
    if not np.any(xv):
        return 0.0
    ends = [0, g.n]
    if not second:
        lhs = trapezoid(yv * caputo_lines(xv, g, alpha, "left")[0], g.h)
        rhs = trapezoid(xv * rl_deriv_lines(yv, g, alpha, "right")[0], g.h)
        I = rl_integral_lines(yv, g, alpha, "right", complement=True, rows=ends)[0]
        bracket = xv[-1] * I[1] - xv[0] * I[0]
        return abs(lhs - rhs - bracket)
    lhs = trapezoid(yv * caputo_lines(xv, g, alpha, "right")[0], g.h)
    rhs = trapezoid(xv * rl_deriv_lines(yv, g, alpha, "left")[0], g.h)
    I = rl_integral_lines(yv, g, alpha, "left", complement=True, rows=ends)[0]
    bracket = xv[-1] * I[1] - xv[0] * I[0]
    return abs(lhs - rhs + bracket)
