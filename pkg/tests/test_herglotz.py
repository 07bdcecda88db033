import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import example_problem, make_problem, make_spec
from fracvar.fixtures import REFERENCE
from fracvar.fracops import Grid, GridError, GridFunction
from fracvar.herglotz import (
    HerglotzProblem, Lagrangian, SolveError, caputo_profile, el_residual_interior,
    el_residual_tail, find_terminal_time, lambda_profile, scan_roots, solve_z,
    transversality, verify,
)


def _perturbed(p, x, eps=0.1):
    g = p.grid
    bump = np.sin(np.pi * (g.nodes - g.a) / (g.b - g.a))
    return GridFunction(g, x.values + eps * bump)


# ---------------------------------------------------------------- Lagrangian

def test_lagrangian_partials():
    L = Lagrangian("v^2 + z*x + t^2")
    assert L.partial("v", t=0.0, x=2.0, v=3.0, z=5.0) == pytest.approx(6.0, rel=1e-8)
    assert L.partial("z", t=0.0, x=2.0, v=3.0, z=5.0) == pytest.approx(2.0, rel=1e-8)
    assert L.partial("t", t=1.5, x=2.0, v=3.0, z=5.0) == pytest.approx(3.0, rel=1e-7)


def test_partial_of_absent_variable_is_zero():
    L = Lagrangian("v^2 + t")
    assert not L.uses("x")
    d = L.partial("x", t=np.linspace(0, 1, 5), x=np.ones(5), v=np.ones(5), z=np.zeros(5))
    assert np.all(d == 0.0)


def test_lagrangian_rejects_unknown_variable():
    with pytest.raises(Exception, match="q"):
        Lagrangian("q + t")


def test_problem_validates_order_domain():
    # orders defined on [0, 3] cannot serve a grid starting at -1
    spec = make_spec("0.5", "0.5", 0.5, 0.5, 0.0, 3.0)
    with pytest.raises(ValueError):
        HerglotzProblem(Grid(-1.0, 3.0, 10), spec, Lagrangian("v^2"), 0.0, 0.0)


# ---------------------------------------------------------------- solve_z

def test_solve_z_ex1():
    p, x = example_problem("ex1", 3000)
    z = solve_z(p, x)
    assert np.max(np.abs(z.values - REFERENCE["ex1"]["z"](p.grid.nodes))) < 1e-6


def test_solve_z_ex2_before_blowup():
    p, x = example_problem("ex2", 3000)
    sub = Grid(0.0, 1.5, 1500)
    q = HerglotzProblem(sub, p.spec, p.lagrangian, 0.0, 0.0)
    z = solve_z(q, x.restrict(0, 1500))
    assert np.max(np.abs(z.values - REFERENCE["ex2"]["z"](sub.nodes))) < 1e-6


def test_solve_z_ex3():
    p, x = example_problem("ex3", 3000)
    z = solve_z(p, x)
    assert abs(z(1.0) - (-2.0 / 3.0)) < 1e-8


def test_rk4_fourth_order():
    errs = []
    for n in (250, 500, 1000):
        p, x = example_problem("ex1", n)
        z = solve_z(p, x)
        errs.append(np.max(np.abs(z.values - REFERENCE["ex1"]["z"](p.grid.nodes))))
    assert errs[0] / errs[1] >= 12.0
    assert errs[1] / errs[2] >= 12.0


def test_solve_z_blowup_raises_or_truncates():
    p = make_problem("z^2 + 1", 0.0, 3.0, 300)
    x = GridFunction.from_expr(p.grid, "0")
    with pytest.raises(SolveError):
        solve_z(p, x)
    z = solve_z(p, x, truncate=True)
    assert z.grid.b < math.pi / 2 + 0.05
    assert np.all(np.isfinite(z.values))


def test_solve_z_checks_initial_value():
    p = make_problem("v^2", 0.0, 1.0, 10, x_a=0.0)
    with pytest.raises(ValueError, match="x_a"):
        solve_z(p, GridFunction.from_expr(p.grid, "1 + t"))


# ---------------------------------------------------------------- lambda

def test_lambda_ex1_is_exp():
    p, x = example_problem("ex1", 3000)
    lam = lambda_profile(p, x, solve_z(p, x))
    assert np.max(np.abs(lam.values - np.exp(-p.grid.nodes))) < 1e-8


def test_lambda_ex3_is_one():
    p, x = example_problem("ex3", 500)
    lam = lambda_profile(p, x, solve_z(p, x))
    assert np.all(lam.values == 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_lambda_positive(c, d, e):
    p = make_problem(f"v^2 + ({c})*z*sin(t) + ({d})*x*z", 0.0, 1.0, 100)
    x = GridFunction.from_expr(p.grid, f"({e})*t")
    lam = lambda_profile(p, x, solve_z(p, x))
    assert lam.values[0] == 1.0
    assert np.all(lam.values > 0.0)


# ---------------------------------------------------------------- residuals

def test_ex1_residuals_vanish():
    p, x = example_problem("ex1", 1000)
    z = solve_z(p, x)
    lam = lambda_profile(p, x, z)
    assert np.max(np.abs(el_residual_interior(p, x, z, lam, 1.5).values)) < 1e-12
    assert np.max(np.abs(el_residual_tail(p, x, z, lam, 1.5).values)) < 1e-12


def test_ex2_interior_residual_identically_zero():
    p, x = example_problem("ex2", 1200)
    z = solve_z(p, x, truncate=True)
    q = HerglotzProblem(z.grid, p.spec, p.lagrangian, 0.0, 0.0)
    xs = x.restrict(0, z.grid.n)
    lam = lambda_profile(q, xs, z)
    r = el_residual_interior(q, xs, z, lam, 1.0)
    assert np.all(r.values == 0.0)


def test_ex3_tail_small():
    p, x = example_problem("ex3", 3000)
    z = solve_z(p, x)
    lam = lambda_profile(p, x, z)
    r = el_residual_tail(p, x, z, lam, 1.0)
    assert r.grid.a == 1.0 and r.grid.b == 3.0
    assert np.max(np.abs(r.values)) < 5e-2


def test_tail_zero_without_right_part():
    p = make_problem("(v - 1)^2 + z", 0.0, 2.0, 200, g1=1.0, g2=0.0)
    x = GridFunction.from_expr(p.grid, "t^2")
    z = solve_z(p, x)
    lam = lambda_profile(p, x, z)
    assert np.all(el_residual_tail(p, x, z, lam, 1.0).values == 0.0)


def test_residual_window_errors():
    p, x = example_problem("ex1", 30)
    z = solve_z(p, x)
    lam = lambda_profile(p, x, z)
    with pytest.raises(GridError):
        el_residual_interior(p, x, z, lam, 0.0)
    with pytest.raises(GridError):
        el_residual_tail(p, x, z, lam, 3.0)


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_residual_discrimination(name):
    p, x = example_problem(name, 2000)
    good = verify(p, x)
    bad = verify(p, _perturbed(p, x), T=good.T)
    r_good = max(good.residuals(p.grid.b).values())
    r_bad = max(bad.residuals(p.grid.b).values())
    assert r_bad >= 10.0 * max(r_good, 1e-300)


# ---------------------------------------------------------------- transversality

def test_transversality_bracket_at_T_vanishes_on_nodes():
    p, x = example_problem("ex3", 600)
    pert = _perturbed(p, x)
    z = solve_z(p, pert)
    lam = lambda_profile(p, pert, z)
    at_T, at_b, L_T = transversality(p, pert, z, lam, 1.0)
    assert at_T == 0.0
    assert abs(at_b) > 0.0


def test_transversality_ex1_terms():
    p, x = example_problem("ex1", 600)
    z = solve_z(p, x)
    lam = lambda_profile(p, x, z)
    at_T, at_b, L_T = transversality(p, x, z, lam, 1.0)
    assert at_T == 0.0 and at_b == 0.0
    # L = z + t^2 - 1 with z = e^t - (t+1)^2 at t = 1
    assert L_T == pytest.approx(math.e - 4.0, abs=1e-9)


# ---------------------------------------------------------------- terminal time

def test_scan_roots_node_and_bisection():
    nodes = np.linspace(0.0, 1.0, 11)
    f = lambda t: (t - 0.5) * (t - 0.73)
    roots = scan_roots(nodes, f(nodes), f)
    assert roots[0][0] == 0.5
    assert abs(f(roots[1][0])) < 1e-8
    assert roots[1][1] == (pytest.approx(0.7), pytest.approx(0.8))


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_find_terminal_time_examples(name):
    p, x = example_problem(name, 3000)
    z = solve_z(p, x, truncate=True)
    if z.grid.n < p.grid.n:
        p = HerglotzProblem(z.grid, p.spec, p.lagrangian, p.x_a, p.z_a)
        x = x.restrict(0, z.grid.n)
    tt = find_terminal_time(p, x, z=z)
    ref = REFERENCE[name]
    assert not tt.boundary
    assert tt.bracket[0] <= tt.T <= tt.bracket[1]
    assert tt.bracket[1] - tt.bracket[0] <= p.grid.h + 1e-15
    assert abs(tt.T - ref["T"]) < 1e-6
    assert abs(tt.z_at_T - ref["z_at_T"]) < 1e-6


def test_find_terminal_time_without_root_flags_boundary():
    p = make_problem("v^2 + 1", 0.0, 2.0, 100)
    x = GridFunction.from_expr(p.grid, "0")
    tt = find_terminal_time(p, x)
    assert tt.boundary and tt.T == 2.0


def test_smallest_z_root_wins():
    # roots of L at t = 0.5 and t = 1.5; z' = L is negative between them
    p = make_problem("(t - 0.5)*(t - 1.5)", 0.0, 2.0, 200)
    x = GridFunction.from_expr(p.grid, "0")
    tt = find_terminal_time(p, x)
    assert tt.T == pytest.approx(1.5, abs=1e-9)


# ---------------------------------------------------------------- verify

@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_verify_examples_pass(name):
    p, x = example_problem(name, 2000)
    rep = verify(p, x)
    assert rep.passed(5e-3, p.grid.b)
    assert abs(rep.T - REFERENCE[name]["T"]) < 1e-4
    assert rep.to_dict()["flags"] == rep.flags


def test_verify_truncates_blowup():
    p, _ = example_problem("ex2", 600)
    x = GridFunction.from_expr(p.grid, "t")
    rep = verify(p, x)
    assert any(f.startswith("z-not-finite-beyond") for f in rep.flags)
    assert not rep.passed(5e-3, p.grid.b)


def test_verify_rejects_T_outside_interval():
    p, x = example_problem("ex1", 60)
    with pytest.raises(GridError):
        verify(p, x, T=4.0)


def test_verify_fixed_T_off_grid_flag():
    p, x = example_problem("ex1", 60)
    rep = verify(p, x, T=1.01)
    assert rep.T == 1.01
    assert any(f.startswith("T-off-grid") for f in rep.flags)


def test_caputo_profile_is_combined():
    p, x = example_problem("ex3", 2000)
    from fracvar.fixtures import F3
    f = GridFunction.from_expr(p.grid, F3)
    v = caputo_profile(x, p.spec)
    assert np.max(np.abs(v.values - f.values)) < 5e-3
