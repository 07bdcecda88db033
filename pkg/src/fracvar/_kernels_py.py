"""Pure numpy product-integration kernel (fallback for ``_kernels.pyx``)."""
import math

import numpy as np

from .special import rgamma_array


def left_product_integrate(P, Y, h, rows, num_threads=0):
    """Weakly singular product integration towards the left end.

    For each requested node ``k = rows[r]`` computes::

        out[:, r] = sum_j  int_{tau_j}^{tau_{j+1}} (t_k - tau)^(p - 1) / Gamma(p) * Y~(tau) dtau

    over the subintervals ``j < k``, where ``Y~`` is the piecewise linear
    interpolant of each row of `Y`, ``p = P[r, j]`` is held fixed on the
    subinterval. Kernel moments are integrated exactly.

    Parameters
    ----------
    P : (len(rows), N) array
        Kernel powers in (0, 1). A broadcast (zero-stride) array is taken
        as a constant order and 1/Gamma is evaluated once.
    Y : (m, N + 1) array
    h : float
        Uniform node spacing.
    rows : sequence of int
    num_threads : int
        Ignored; accepted for signature parity with the compiled kernel.
    """
    Y = np.asarray(Y, dtype=float)
    m, n1 = Y.shape
    out = np.zeros((m, len(rows)))
    # log1[i] = log(i + 1)
    log1 = np.log(np.arange(1, n1 + 1, dtype=float))
    lh = math.log(h)
    P = np.asarray(P, dtype=float)
    rg_const = None
    if P.size and P.strides == (0, 0):
        rg_const = float(rgamma_array(P.flat[0]))
    for r, k in enumerate(rows):
        k = int(k)
        if k == 0:
            continue
        p = np.asarray(P[r, :k], dtype=float)
        rg = rg_const if rg_const is not None else rgamma_array(p)
        # distance index of subinterval j from node k: i = k - 1 - j
        ii = np.arange(k - 1, -1, -1, dtype=float)
        i1p = np.exp(p * log1[k - 1::-1])
        ip = np.zeros(k)
        if k > 1:
            ip[:-1] = np.exp(p[:-1] * log1[k - 2::-1])
        A = (i1p - ip) / p
        B = ((ii + 1.0) * i1p - ii * ip) / (p + 1.0)
        c = B - ii * A
        hp = np.exp(p * lh) * rg
        w = np.zeros(k + 1)
        w[:k] += c * hp
        w[1:] += (A - c) * hp
        # row-wise sum rather than a matrix product: BLAS picks a different
        # summation order for one row than for many, and results must not
        # depend on how lines are batched
        out[:, r] = (Y[:, :k + 1] * w).sum(axis=1)
    return out
