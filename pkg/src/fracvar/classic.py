"""Free terminal time problems without the Herglotz z.

The functional is ``J(x, T) = int_a^T L(t, x, v) dt + phi(T, x(T))`` with
``v`` the combined Caputo derivative of ``x``. Residuals follow the same
assembly as :mod:`fracvar.herglotz` with the weight lambda equal to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import ExprError
from .fracops import CombinedSpec, Grid, GridError, GridFunction, _stencil, dual_rl_lines, trapezoid
from .herglotz import Lagrangian, _bracket_terms, _tail, caputo_profile

__all__ = [
    "ClassicProblem", "eval_functional", "classic_el_residuals", "classic_transversality",
    "terminal_cost",
]

CLASSIC_VARS = ("t", "x", "v")
COST_VARS = ("T", "xT")


def terminal_cost(expr, fd_step: float = 1e-6) -> Lagrangian:
    """``phi(T, xT)`` with the same finite-difference partials as a Lagrangian."""
    return Lagrangian(expr, fd_step, variables=COST_VARS)


@dataclass(frozen=True)
class ClassicProblem:
    grid: Grid
    spec: CombinedSpec
    lagrangian: Lagrangian
    terminal_cost: Lagrangian
    x_a: float

    def __post_init__(self):
        if set(self.lagrangian.variables) - set(CLASSIC_VARS):
            raise ValueError("the Lagrangian may only depend on t, x, v")
        if set(self.terminal_cost.variables) - set(COST_VARS):
            raise ValueError("the terminal cost may only depend on T, xT")
        for order in (self.spec.alpha, self.spec.beta):
            if not order.a <= self.grid.a < self.grid.b <= order.b:
                raise ValueError(f"order {order.name} is not declared on the grid interval")
        if not math.isfinite(self.x_a):
            raise ValueError("x_a must be finite")


def _setup(problem, x, T, v):
    g = problem.grid
    if not x.grid.same_as(g):
        raise GridError("trajectory grid differs from the problem grid")
    if abs(x.values[0] - problem.x_a) > 1e-12:
        raise ValueError(f"trajectory starts at {x.values[0]!r}, expected x_a={problem.x_a!r}")
    K = g.index(T)
    if v is None:
        v = caputo_profile(x, problem.spec)
    args = {"t": g.nodes, "x": x.values, "v": v.values}
    return g, K, v, args


def _phi_parts(problem, T, xT):
    phi = problem.terminal_cost
    val = float(phi(T=T, xT=xT))
    d1 = float(phi.partial("T", T=T, xT=xT))
    d2 = float(phi.partial("xT", T=T, xT=xT))
    if not all(map(math.isfinite, (val, d1, d2))):
        raise ExprError(f"terminal cost is not finite at T={T!r}, x(T)={xT!r}")
    return val, d1, d2


def eval_functional(problem: ClassicProblem, x: GridFunction, T: float,
                    v: GridFunction | None = None) -> float:
    """Trapezoid integral of L over ``[a, T]`` plus ``phi(T, x(T))``."""
    g, K, v, args = _setup(problem, x, T, v)
    L = np.broadcast_to(problem.lagrangian(**args), g.nodes.shape)
    T_node = float(g.nodes[K])
    phi, _, _ = _phi_parts(problem, T_node, float(x.values[K]))
    return trapezoid(L[:K + 1], g.h) + phi


def classic_el_residuals(problem: ClassicProblem, x: GridFunction, T: float,
                         v: GridFunction | None = None):
    """Interior residual on ``[a, T]`` and tail residual on ``[T, b]``.

    Either part is ``None`` when its interval is a single point.
    """
    g, K, v, args = _setup(problem, x, T, v)
    L = problem.lagrangian
    dx = np.broadcast_to(L.partial("x", **args), g.nodes.shape)
    y = np.broadcast_to(L.partial("v", **args), g.nodes.shape)
    interior = tail = None
    if K > 0:
        res = dx[:K + 1] + dual_rl_lines(y, g, problem.spec, K)[0]
        interior = GridFunction(g.sub(0, K), res)
    if K < g.n:
        tail = GridFunction(g.sub(K, g.n), _tail(y, g, problem.spec, K)[0])
    return interior, tail


def classic_transversality(problem: ClassicProblem, x: GridFunction, T: float,
                           variant: str = "teo1", v: GridFunction | None = None):
    """The three transversality lines at ``T``.

    ``variant="teo1"`` gives the form with ``d2phi * x'(T)`` in the first
    line; ``"teo2"`` folds the bracket at ``T`` into the first line
    instead. Lines two and three are common to both.
    """
    if variant not in ("teo1", "teo2"):
        raise ValueError(f"variant must be 'teo1' or 'teo2', got {variant!r}")
    g, K, v, args = _setup(problem, x, T, v)
    L = problem.lagrangian
    y = np.broadcast_to(L.partial("v", **args), g.nodes.shape)
    at_T, at_b = _bracket_terms(y, g, problem.spec, K)
    at_T, at_b = float(at_T[0]), float(at_b[0])
    T_node = float(g.nodes[K])
    xT = float(x.values[K])
    _, d1, d2 = _phi_parts(problem, T_node, xT)
    idx, w = _stencil(K, g.n, g.h)
    dxT = float(np.dot(w, x.values[idx]))
    L_T = float(L(t=T_node, x=xT, v=float(v.values[K])))
    if variant == "teo1":
        first = L_T + d1 + d2 * dxT
    else:
        first = L_T + d1 - dxT * at_T
    return first, at_T + d2, at_b
