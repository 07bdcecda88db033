import numpy as np
import pytest

from fracvar.fixtures import F3
from fracvar.fracops import CombinedSpec, Grid, GridFunction, OrderFunction
from fracvar.herglotz import HerglotzProblem, Lagrangian

EXAMPLES = {
    # name: (L, x, alpha, beta)
    "ex1": ("v^2 + z + t^2 - 1", "1", "0.5", "0.5"),
    "ex2": ("(t-1)*(x^2 + z^2 + 1)", "0", "0.5", "0.5"),
    "ex3": (f"(v - {F3})^2 + t^2 - 1", "t", "0.5 + 0.1*t/3", "0.5"),
}


def make_spec(alpha, beta, g1, g2, a, b):
    return CombinedSpec(OrderFunction(alpha, a, b), OrderFunction(beta, a, b, "beta"), g1, g2)


def make_problem(L, a, b, n, alpha="0.5", beta="0.5", g1=0.5, g2=0.5, x_a=0.0, z_a=0.0):
    g = Grid(a, b, n)
    return HerglotzProblem(g, make_spec(alpha, beta, g1, g2, a, b), Lagrangian(L), x_a, z_a)


def example_problem(name, n):
    L, x, alpha, beta = EXAMPLES[name]
    g = Grid(0.0, 3.0, n)
    xf = GridFunction.from_expr(g, x)
    p = HerglotzProblem(g, make_spec(alpha, beta, 0.5, 0.5, 0.0, 3.0), Lagrangian(L),
                        float(xf.values[0]), 0.0)
    return p, xf


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
