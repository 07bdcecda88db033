"""Herglotz problems with one time and several space variables.

A field ``x(t, s1, ..., sn)`` lives on a tensor grid. The functional
obeys ``z' = int_Omega L(t, s, x, v, w1..wn, z) ds`` where ``v`` is the
combined Caputo derivative in time and ``wi`` the combined Caputo
derivative along ``si``. Spatial integrals use the tensor trapezoid rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .expr import ExprError, compile_expr, evaluate, free_vars
from .fracops import (
    CombinedSpec, Grid, GridError, GridFunction, combined_caputo_lines, dual_rl_lines, trapezoid,
)
from .herglotz import Lagrangian, SolveError, _bracket_terms, _finite_or_none, _tail, scan_roots

__all__ = [
    "Field", "MultiProblem", "MultiReport", "multi_lagrangian", "axis_caputo_profile",
    "solve_z_multi", "lambda_multi", "el_residual_multi", "transversality_multi",
    "find_terminal_time_multi", "verify_multi", "space_integral",
]


def space_names(n):
    return tuple(f"s{i}" for i in range(1, n + 1))


def multi_variables(n):
    return ("t",) + space_names(n) + ("x", "v") + tuple(f"w{i}" for i in range(1, n + 1)) + ("z",)


def multi_lagrangian(expr, n: int, fd_step: float = 1e-6) -> Lagrangian:
    """Lagrangian in ``t, s1..sn, x, v, w1..wn, z``."""
    return Lagrangian(expr, fd_step, variables=multi_variables(n))


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of ``x(t, s)`` with shape ``(nt + 1, ns1 + 1, ..., nsn + 1)``."""

    time_grid: Grid
    space_grids: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "space_grids", tuple(self.space_grids))
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.shape:
            raise GridError(f"field shape {vals.shape} does not match grids {self.shape}")
        if not np.all(np.isfinite(vals)):
            raise GridError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return (self.time_grid.n + 1,) + tuple(g.n + 1 for g in self.space_grids)

    @property
    def grids(self):
        return (self.time_grid,) + self.space_grids

    def mesh(self):
        """Broadcastable coordinate arrays ``{"t": ..., "s1": ..., ...}``."""
        d = len(self.grids)
        out = {}
        for ax, (name, g) in enumerate(zip(("t",) + space_names(d - 1), self.grids)):
            shape = [1] * d
            shape[ax] = g.n + 1
            out[name] = g.nodes.reshape(shape)
        return out

    @classmethod
    def from_expr(cls, time_grid, space_grids, expr):
        tmp = cls.__new__(cls)
        object.__setattr__(tmp, "time_grid", time_grid)
        object.__setattr__(tmp, "space_grids", tuple(space_grids))
        vals = evaluate(compile_expr(expr), tmp.mesh())
        return cls(time_grid, space_grids, np.broadcast_to(vals, tmp.shape))

    def same_grids(self, other) -> bool:
        return len(self.grids) == len(other.grids) and all(
            g.same_as(o) for g, o in zip(self.grids, other.grids))


@dataclass(frozen=True)
class MultiProblem:
    time_grid: Grid
    space_grids: tuple
    time_spec: CombinedSpec
    space_specs: tuple
    lagrangian: Lagrangian
    boundary: object
    z_a: float

    def __post_init__(self):
        object.__setattr__(self, "space_grids", tuple(self.space_grids))
        object.__setattr__(self, "space_specs", tuple(self.space_specs))
        object.__setattr__(self, "boundary", compile_expr(self.boundary))
        n = self.dim
        if n < 1 or len(self.space_specs) != n:
            raise ValueError("need one combined spec per space axis")
        if self.lagrangian.variables != multi_variables(n):
            raise ValueError(f"the Lagrangian must be built over {', '.join(multi_variables(n))}")
        extra = free_vars(self.boundary) - {"t", *space_names(n)}
        if extra:
            raise ValueError(f"boundary data may only use t, {', '.join(space_names(n))}; found {sorted(extra)}")
        _check_domain(self.time_spec, self.time_grid)
        for sp, g in zip(self.space_specs, self.space_grids):
            _check_domain(sp, g)
        if not math.isfinite(self.z_a):
            raise ValueError("z_a must be finite")

    @property
    def dim(self):
        return len(self.space_grids)

    @property
    def measure(self):
        return math.prod(g.b - g.a for g in self.space_grids)


def _check_domain(spec, g):
    for order in (spec.alpha, spec.beta):
        if not order.a <= g.a < g.b <= order.b:
            raise ValueError(f"order {order.name} on [{order.a}, {order.b}] does not cover [{g.a}, {g.b}]")


def _boundary_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        for end in (0, -1):
            idx[ax] = end
            mask[tuple(idx)] = True
    return mask


def check_boundary(problem: MultiProblem, fld: Field, atol: float = 1e-10):
    """Raise unless `fld` matches the boundary data on every node of the boundary of P."""
    if not fld.same_grids(_template(problem)):
        raise GridError("field grids differ from the problem grids")
    gvals = np.broadcast_to(evaluate(problem.boundary, fld.mesh()), fld.shape)
    mask = _boundary_mask(fld.shape)
    err = np.abs(fld.values - gvals)[mask]
    if err.size and not np.all(err <= atol):
        worst = float(np.max(err))
        raise ValueError(f"field violates the boundary condition by {worst:.3g} (allowed {atol:g})")


def _template(problem):
    tmp = Field.__new__(Field)
    object.__setattr__(tmp, "time_grid", problem.time_grid)
    object.__setattr__(tmp, "space_grids", problem.space_grids)
    return tmp


# ---------------------------------------------------------------- profiles

def _along(values, axis, fn):
    """Apply a lines operator ``fn(Y) -> (m, k)`` along `axis` of `values`."""
    moved = np.moveaxis(values, axis, -1)
    lines = moved.reshape(-1, moved.shape[-1])
    out = fn(lines)
    out = out.reshape(moved.shape[:-1] + (out.shape[-1],))
    return np.moveaxis(out, -1, axis)


def axis_caputo_profile(fld: Field, axis: int, spec: CombinedSpec) -> Field:
    """Combined Caputo derivative along `axis` (0 is time, ``i`` is ``si``)."""
    g = fld.grids[axis]
    vals = _along(fld.values, axis, lambda Y: combined_caputo_lines(Y, g, spec))
    return Field(fld.time_grid, fld.space_grids, vals)


def space_integral(values, space_grids):
    """Tensor trapezoid over the trailing space axes."""
    out = np.asarray(values, dtype=float)
    for g in reversed(space_grids):
        out = trapezoid(out, g.h, axis=-1)
    return out


def _derivs(problem, fld):
    v = axis_caputo_profile(fld, 0, problem.time_spec).values
    ws = [axis_caputo_profile(fld, i + 1, sp).values for i, sp in enumerate(problem.space_specs)]
    return v, ws


def _args(problem, fld, v, ws, z=None, rows=slice(None)):
    args = {k: np.asarray(c)[rows] if k == "t" else c for k, c in fld.mesh().items()}
    args["x"] = fld.values[rows]
    args["v"] = v[rows]
    for i, w in enumerate(ws):
        args[f"w{i + 1}"] = w[rows]
    if z is not None:
        zz = np.asarray(z)[rows]
        args["z"] = zz.reshape(zz.shape + (1,) * problem.dim)
    return args


def _L_field(problem, args, shape):
    return np.broadcast_to(problem.lagrangian(**args), shape)


def solve_z_multi(problem: MultiProblem, fld: Field, derivs=None) -> GridFunction:
    """RK4 in time for ``z' = int_Omega L ds`` with fields interpolated at half steps."""
    check_boundary(problem, fld)
    v, ws = derivs if derivs is not None else _derivs(problem, fld)
    tg = problem.time_grid
    h = tg.h
    mesh = fld.mesh()
    spatial = {k: c[0] for k, c in mesh.items() if k != "t"}
    slabs = [fld.values, v] + list(ws)
    L = problem.lagrangian
    sgrids = problem.space_grids
    z = np.empty(tg.n + 1)
    z[0] = problem.z_a

    def rhs(j, tt, row, zz):
        args = dict(spatial, t=tt, x=row[0], v=row[1], z=zz)
        for i, w in enumerate(row[2:]):
            args[f"w{i + 1}"] = w
        try:
            val = space_integral(np.broadcast_to(L(**args), row[0].shape), sgrids)
        except ExprError as exc:
            raise SolveError(f"integrand cannot be evaluated near node {j} (t={tt!r}): {exc}", j, j) from exc
        if not math.isfinite(val):
            raise SolveError(f"integrand is not finite near node {j} (t={tt!r})", j, j)
        return val

    nodes = tg.nodes
    for j in range(tg.n):
        r0 = [s[j] for s in slabs]
        r1 = [s[j + 1] for s in slabs]
        rm = [0.5 * (p + q) for p, q in zip(r0, r1)]
        t0, t1 = float(nodes[j]), float(nodes[j + 1])
        tm = t0 + 0.5 * h
        k1 = rhs(j, t0, r0, z[j])
        k2 = rhs(j, tm, rm, z[j] + 0.5 * h * k1)
        k3 = rhs(j, tm, rm, z[j] + 0.5 * h * k2)
        k4 = rhs(j, t1, r1, z[j] + h * k3)
        z[j + 1] = z[j] + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if not math.isfinite(z[j + 1]):
            raise SolveError(f"z is not finite at node {j + 1}", j + 1, j)
    return GridFunction(tg, z)


def lambda_multi(problem: MultiProblem, fld: Field, z: GridFunction, derivs=None) -> GridFunction:
    """``exp(-int_a^t int_Omega dL/dz ds dtau)`` by trapezoid rules."""
    v, ws = derivs if derivs is not None else _derivs(problem, fld)
    dz = problem.lagrangian.partial("z", **_args(problem, fld, v, ws, z.values))
    dz = np.broadcast_to(dz, fld.shape)
    if not np.all(np.isfinite(dz)):
        raise SolveError("dL/dz is not finite on the field")
    B = space_integral(dz, problem.space_grids)
    h = problem.time_grid.h
    acc = np.concatenate(([0.0], np.cumsum(0.5 * h * (B[1:] + B[:-1]))))
    return GridFunction(problem.time_grid, np.exp(-acc))


def _weighted(problem, fld, z, lam, derivs, name):
    v, ws = derivs
    args = _args(problem, fld, v, ws, z.values)
    d = np.broadcast_to(problem.lagrangian.partial(name, **args), fld.shape)
    lam_b = lam.values.reshape((-1,) + (1,) * problem.dim)
    return d * lam_b, args


def el_residual_multi(problem: MultiProblem, fld: Field, z: GridFunction, lam: GridFunction,
                      T: float, derivs=None):
    """Interior residual on ``[a, T] x Omega`` and tail residual on ``[T, b] x Omega``.

    Returned as arrays with time on axis 0; either is ``None`` when its
    time window is a single node.
    """
    check_boundary(problem, fld)
    derivs = derivs if derivs is not None else _derivs(problem, fld)
    tg = problem.time_grid
    K = tg.index(T)
    yv, args = _weighted(problem, fld, z, lam, derivs, "v")
    interior = tail = None
    if K > 0:
        dx, _ = _weighted(problem, fld, z, lam, derivs, "x")
        res = dx[:K + 1] + _along(yv, 0, lambda Y: dual_rl_lines(Y, tg, problem.time_spec, K))
        for i, (g, sp) in enumerate(zip(problem.space_grids, problem.space_specs)):
            yw, _ = _weighted(problem, fld, z, lam, derivs, f"w{i + 1}")
            part = yw[:K + 1]
            if not np.any(part):
                continue
            res = res + _along(part, i + 1, lambda Y: dual_rl_lines(Y, g, sp, g.n))
        interior = res
    if K < tg.n:
        tail = _along(yv, 0, lambda Y: _tail(Y, tg, problem.time_spec, K))
    return interior, tail


def transversality_multi(problem: MultiProblem, fld: Field, z: GridFunction, lam: GridFunction,
                         T: float, derivs=None):
    """Return ``(bracket_field, bracket_integral, lagrangian_integral)`` at time node ``T``.

    The bracket is evaluated for every spatial node and also integrated
    over Omega; the last entry is ``int_Omega L(T, s, ...) ds``.
    """
    check_boundary(problem, fld)
    derivs = derivs if derivs is not None else _derivs(problem, fld)
    tg = problem.time_grid
    K = tg.index(T)
    yv, args = _weighted(problem, fld, z, lam, derivs, "v")
    space_shape = fld.shape[1:]
    lines = np.moveaxis(yv, 0, -1).reshape(-1, tg.n + 1)
    at_T, _ = _bracket_terms(lines, tg, problem.time_spec, K)
    bracket = at_T.reshape(space_shape)
    v, ws = derivs
    row_args = _args(problem, fld, v, ws, z.values, rows=K)
    L_T = np.broadcast_to(problem.lagrangian(**row_args), space_shape)
    sg = problem.space_grids
    return bracket, float(space_integral(bracket, sg)), float(space_integral(L_T, sg))


def _time_interp(arr, tg: Grid, T: float):
    u = (T - tg.a) / tg.h
    j = min(max(int(math.floor(u)), 0), tg.n - 1)
    w = u - j
    return (1.0 - w) * arr[j] + w * arr[j + 1]


def _integral_at(problem, fld, derivs, z, T):
    """``int_Omega L(T, s, ...) ds`` with fields linearly interpolated in time."""
    v, ws = derivs
    tg = problem.time_grid
    row = [_time_interp(s, tg, T) for s in [fld.values, v] + list(ws)]
    a = {k: c[0] for k, c in fld.mesh().items() if k != "t"}
    a.update(t=T, x=row[0], v=row[1], z=float(z(T)))
    for i, w in enumerate(row[2:]):
        a[f"w{i + 1}"] = w
    return float(space_integral(np.broadcast_to(problem.lagrangian(**a), row[0].shape),
                                problem.space_grids))


def find_terminal_time_multi(problem: MultiProblem, fld: Field, z: GridFunction | None = None,
                             derivs=None, tol: float = 1e-8):
    """Root of ``g(T) = int_Omega L(T, s, ...) ds`` minimizing ``z(T)``.

    Returns ``(T, z(T), boundary_flag)``.
    """
    derivs = derivs if derivs is not None else _derivs(problem, fld)
    if z is None:
        z = solve_z_multi(problem, fld, derivs)
    v, ws = derivs
    tg = problem.time_grid
    args = _args(problem, fld, v, ws, z.values)
    gn = space_integral(_L_field(problem, args, fld.shape), problem.space_grids)

    def g_at(T):
        return _integral_at(problem, fld, derivs, z, T)

    roots = scan_roots(tg.nodes, gn, g_at, tol)
    if not roots:
        return tg.b, float(z.values[-1]), True
    best = min(roots, key=lambda r: float(z(r[0])))
    return best[0], float(z(best[0])), False


@dataclass
class MultiReport:
    T: float
    z_at_T: float
    el_interior_norm: float
    el_tail_norm: float
    trans_field_norm: float
    trans_integral: float
    lagrangian_integral_at_T: float
    T_node: float = math.nan
    flags: list = dc_field(default_factory=list)
    profiles: dict = dc_field(default_factory=dict, repr=False)

    KEYS = ("T", "T_node", "z_at_T", "el_interior_norm", "el_tail_norm",
            "trans_field_norm", "trans_integral", "lagrangian_integral_at_T")

    def residuals(self, b: float):
        out = {
            "el_interior_norm": self.el_interior_norm,
            "el_tail_norm": self.el_tail_norm,
            "trans_field_norm": self.trans_field_norm,
        }
        if self.T < b:
            out["lagrangian_integral_at_T"] = abs(self.lagrangian_integral_at_T)
        return out

    def passed(self, tol: float, b: float) -> bool:
        return all(math.isfinite(v) and v < tol for v in self.residuals(b).values())

    def to_dict(self):
        d = {k: _finite_or_none(getattr(self, k)) for k in self.KEYS}
        d["flags"] = list(self.flags)
        return d


def _interior_space(arr):
    """Drop the spatial boundary nodes (axis 0 is time)."""
    idx = (slice(None),) + tuple(slice(1, -1) for _ in range(arr.ndim - 1))
    return arr[idx]


def verify_multi(problem: MultiProblem, fld: Field, T="auto", tol: float = 5e-3) -> MultiReport:
    """Residual report for a candidate extremal field.

    Euler-Lagrange norms are maxima over spatially interior nodes, where
    admissible variations are free; the boundary values are prescribed.
    """
    check_boundary(problem, fld)
    nan = math.nan
    tg = problem.time_grid
    try:
        derivs = _derivs(problem, fld)
        z = solve_z_multi(problem, fld, derivs)
        lam = lambda_multi(problem, fld, z, derivs)
    except (SolveError, ExprError) as exc:
        return MultiReport(nan, nan, nan, nan, nan, nan, nan, flags=[f"solve-failed: {exc}"])
    flags = []
    if T == "auto":
        T_val, _, boundary = find_terminal_time_multi(problem, fld, z, derivs)
        if boundary:
            flags.append("boundary")
    else:
        T_val = float(T)
        if not tg.a <= T_val <= tg.b:
            raise GridError(f"T={T_val!r} outside [{tg.a}, {tg.b}]")
    K = min(max(int(round((T_val - tg.a) / tg.h)), 0), tg.n)
    T_node = float(tg.nodes[K])
    if abs(T_node - T_val) > 1e-9 * max(1.0, abs(T_val)):
        flags.append("T-off-grid: residuals use the nearest node")
    try:
        interior, tail = el_residual_multi(problem, fld, z, lam, T_node, derivs)
        el_int = float(np.max(np.abs(_interior_space(interior)), initial=0.0)) if interior is not None else 0.0
        el_tail = float(np.max(np.abs(_interior_space(tail)), initial=0.0)) if tail is not None else 0.0
        bracket, b_int, _ = transversality_multi(problem, fld, z, lam, T_node, derivs)
        tr = float(np.max(np.abs(bracket)))
        L_int = _integral_at(problem, fld, derivs, z, T_val)
    except (GridError, ExprError) as exc:
        flags.append(f"residual-failed: {exc}")
        el_int = el_tail = tr = b_int = L_int = math.inf
    rep = MultiReport(T_val, float(z(T_val)), el_int, el_tail, tr, b_int, L_int, T_node, flags,
                      {"t": tg.nodes, "z": z.values, "lambda": lam.values})
    for name, val in rep.residuals(tg.b).items():
        if not (math.isfinite(val) and abs(val) < tol):
            flags.append(f"{name.replace('_', '-')}-above-tol")
    return rep
