"""Independent reference computations used as test oracles.

Nothing here imports volfn: each oracle recomputes its quantity from the
defining formula with plain loops, dense quadrature or finite differences.
"""

import math

import numpy as np


def sym(x):
    return 0.5 * (x + x.T)


def fd_grad(f, x, step=1e-5):
    d = x.shape[0]
    out = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            e = np.zeros((d, d))
            e[a, b] = step
            out[a, b] = (f(sym(x + e)) - f(sym(x - e))) / (2 * step)
    return out


def fd_hess(f, x, step=1e-5):
    d = x.shape[0]
    out = np.zeros((d, d, d, d))
    for a in range(d):
        for b in range(d):
            for l in range(d):
                for m in range(d):
                    ea = np.zeros((d, d))
                    eb = np.zeros((d, d))
                    ea[a, b] = step
                    eb[l, m] = step
                    out[a, b, l, m] = (
                        f(sym(x + ea + eb))
                        - f(sym(x + ea - eb))
                        - f(sym(x - ea + eb))
                        + f(sym(x - ea - eb))
                    ) / (4 * step * step)
    return out


def contract_h(hess, x):
    d = x.shape[0]
    total = 0.0
    for j in range(d):
        for k in range(d):
            for l in range(d):
                for m in range(d):
                    total += hess[j, k, l, m] * (x[j, l] * x[k, m] + x[j, m] * x[k, l])
    return 0.5 * total


def contract_hbar(grad, x):
    d = x.shape[0]
    total = 0.0
    for j in range(d):
        for k in range(d):
            for l in range(d):
                for m in range(d):
                    total += grad[j, k] * grad[l, m] * (
                        x[j, l] * x[k, m] + x[j, m] * x[k, l]
                    )
    return total


def midpoint(f, n=100_000):
    """Midpoint rule on [0, 1] with ``n`` cells (f vectorised over w)."""
    w = (np.arange(n) + 0.5) / n
    return float(np.sum(f(w)) / n)


def G_oracle(g, x, y, n=100_000):
    """Dense midpoint rule for the G kernel; ``g`` maps (n, d, d) -> (n,)."""
    gx, gxy = g(x[None])[0], g((x + y)[None])[0]

    def integrand(w):
        pts = x[None] + w[:, None, None] * y[None]
        return g(pts) - w * gxy - (1 - w) * gx

    return midpoint(integrand, n)


def Gprime_oracle(hess, x, y, n=100_000):
    """Dense midpoint rule for G'; ``hess`` maps (d, d) -> (d, d, d, d)."""
    w = (np.arange(n) + 0.5) / n
    q0 = np.einsum("jklm,jk,lm->", hess(x), y, y)
    vals = np.empty(n)
    for i, wi in enumerate(w):
        vals[i] = (q0 + np.einsum("jklm,jk,lm->", hess(x + (1 - wi) * y), y, y)) * wi**2
    return -0.125 * float(np.sum(vals) / n)


def naive_spot(increments, i, k, dn, u=math.inf):
    """1-based spot covariance by an explicit double loop."""
    d = increments.shape[1]
    out = [[0.0] * d for _ in range(d)]
    for j in range(k):
        row = increments[i - 1 + j]
        if math.sqrt(sum(v * v for v in row)) <= u:
            for a in range(d):
                for b in range(d):
                    out[a][b] += row[a] * row[b]
    return np.array(out) / (k * dn)
