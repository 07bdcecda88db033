"""Built-in problem files for the worked examples.

Each entry is INI text in the format read by :mod:`fracvar.config`;
``REFERENCE`` holds the closed-form z and the expected terminal data.
"""
import math

import numpy as np

_F3 = ("(t^(1-(0.5+0.1*t/3))/(2*gamma(2-(0.5+0.1*t/3)))"
       " - (3-t)^(1-0.5)/(2*gamma(2-0.5)))")

FIXTURES = {
    "ex1": """
[problem]
kind = herglotz
z_a = 0
T = auto

[orders]
alpha = "0.5"
beta = "0.5"
gamma1 = 0.5
gamma2 = 0.5

[lagrangian]
L = "v^2 + z + t^2 - 1"

[trajectory]
x = "1"

[grid]
a = 0
b = 3
n = 3000
""",
    "ex2": """
[problem]
kind = herglotz
z_a = 0
T = auto

[orders]
alpha = "0.5"
beta = "0.5"
gamma1 = 0.5
gamma2 = 0.5

[lagrangian]
L = "(t-1)*(x^2 + z^2 + 1)"

[trajectory]
x = "0"

[grid]
a = 0
b = 3
n = 3000
""",
    "ex3": f"""
[problem]
kind = herglotz
z_a = 0
T = auto

[orders]
alpha = "0.5 + 0.1*t/3"
beta = "0.5"
gamma1 = 0.5
gamma2 = 0.5

[lagrangian]
L = "(v - {_F3})^2 + t^2 - 1"

[trajectory]
x = "t"

[grid]
a = 0
b = 3
n = 3000
""",
    "multidim": """
[problem]
kind = multidim
z_a = 0
T = auto

[orders]
alpha = "0.5"
beta = "0.5"
gamma1 = 0.5
gamma2 = 0.5
alpha_s1 = "0.5"
beta_s1 = "0.5"
gamma1_s1 = 0.5
gamma2_s1 = 0.5

[lagrangian]
L = "v^2 + w1^2 + t^2 - 1"

[trajectory]
x = "0"
g = "0"

[grid]
a = 0
b = 3
n = 400
space = "0, 1"
ns = 400
""",
}

#: combined Caputo derivative of x(t) = t under the ex3 orders
F3 = _F3


def _newton_t1():
    # root of exp(T) - 2T - 2 = 0 near 1.68
    T = 1.7
    for _ in range(50):
        T -= (math.exp(T) - 2.0 * T - 2.0) / (math.exp(T) - 2.0)
    return T


_T1 = _newton_t1()


def _z1(t):
    return np.exp(t) - (t + 1.0) ** 2


def _z2(t):
    return np.tan(t * t / 2.0 - t)


def _z3(t):
    return t ** 3 / 3.0 - t


REFERENCE = {
    "ex1": {"z": _z1, "T": _T1, "z_at_T": float(_z1(_T1))},
    "ex2": {"z": _z2, "T": 1.0, "z_at_T": math.tan(-0.5)},
    "ex3": {"z": _z3, "T": 1.0, "z_at_T": -2.0 / 3.0},
}
