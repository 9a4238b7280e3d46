"""Estimation of sums over volatility jumps, ``sum_{s<=t} F(c_{s-}, Delta c_s)``.

Spot estimates are compared two blocks apart,
``delta_j = c_hat[j k_n + 1] - c_hat[(j - 2) k_n + 1]``, and block ``j`` is
declared to hold a jump when ``||delta_j||`` exceeds ``u'_n`` and both
neighbouring ``||delta_{j-1}||`` and ``||delta_{j+1}||`` (strictly).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import partial

import numpy as np

from .symfun import DEFAULT_QUAD_NODES, bias_kernel_Gsecond

__all__ = [
    "JumpDetection",
    "spot_deltas",
    "jump_functional",
    "jump_term",
    "write_detections_csv",
]


@dataclass(frozen=True)
class JumpDetection:
    block_index: int
    location_estimate: float
    pre_jump: np.ndarray
    jump_size: np.ndarray
    norm_delta: float
    contribution: float


def _n_obs(spots, k_n):
    return spots.shape[0] + k_n - 1


def spot_deltas(spots, k_n):
    """Two-block differences of spot estimates.

    Returns
    -------
    js : ndarray of int
        Block indices ``j = 2, ..., J`` with ``J = min(floor(N / k_n),
        (M - 1) // k_n)`` (the largest ``j`` whose later spot exists).
    deltas : ndarray, shape (len(js), d, d)
        ``spots[j k_n] - spots[(j - 2) k_n]`` in 0-based storage.
    """
    spots = np.asarray(spots, dtype=float)
    k_n = int(k_n)
    m = spots.shape[0]
    j_max = min(_n_obs(spots, k_n) // k_n, (m - 1) // k_n)
    js = np.arange(2, j_max + 1)
    if js.size == 0:
        return js, np.zeros((0,) + spots.shape[1:])
    return js, spots[js * k_n] - spots[(js - 2) * k_n]


def jump_functional(spots, F, k_n, delta_n, u_prime_n):
    """Estimate ``sum_{s<=t} F(c_{s-}, Delta c_s)`` from spot estimates.

    Sums ``F(c_hat[(j-3) k_n + 1], delta_j)`` over
    ``j = 3, ..., floor(N / k_n) - 3`` for blocks where
    ``max(||delta_{j-1}||, ||delta_{j+1}||, u'_n) < ||delta_j||``.  The norm is
    Frobenius.

    Parameters
    ----------
    spots : ndarray, shape (M, d, d)
    F : callable
        ``F(x, y)`` for ``(d, d)`` arrays, returning a float.
    k_n : int
    delta_n : float
    u_prime_n : float

    Returns
    -------
    value : float
    detections : list of JumpDetection
    """
    spots = np.asarray(spots, dtype=float)
    k_n = int(k_n)
    j_last = _n_obs(spots, k_n) // k_n - 3
    if j_last < 3:
        return 0.0, []
    js, deltas = spot_deltas(spots, k_n)
    norms = np.linalg.norm(deltas, axis=(-2, -1))
    # position of block j in js / norms
    pos = {int(j): idx for idx, j in enumerate(js)}
    total = 0.0
    detections = []
    for j in range(3, j_last + 1):
        idx = pos[j]
        nj = norms[idx]
        if not (max(norms[idx - 1], norms[idx + 1], u_prime_n) < nj):
            continue
        pre = spots[(j - 3) * k_n]
        value = float(F(pre, deltas[idx]))
        total += value
        detections.append(
            JumpDetection(
                block_index=j,
                location_estimate=j * k_n * delta_n,
                pre_jump=pre,
                jump_size=deltas[idx],
                norm_delta=float(nj),
                contribution=value,
            )
        )
    return total, detections


def jump_term(spots, g, k_n, delta_n, u_prime_n, quad_nodes=DEFAULT_QUAD_NODES):
    """Jump correction ``V(G - G')^n`` entering the de-biased estimator.

    Returns ``(0.0, [])`` without scanning when ``g`` is a polynomial of
    degree at most 2, for which ``G - G'`` vanishes identically.
    """
    if g.degree is not None and g.degree <= 2:
        return 0.0, []
    F = partial(_gsecond, g, quad_nodes=quad_nodes)
    return jump_functional(spots, F, k_n, delta_n, u_prime_n)


def _gsecond(g, x, y, quad_nodes):
    return float(bias_kernel_Gsecond(g, x, y, quad_nodes))


def write_detections_csv(detections, path):
    """Write detections as ``j,t_est,norm_delta,contribution`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "t_est", "norm_delta", "contribution"])
        for det in detections:
            writer.writerow(
                [
                    det.block_index,
                    f"{det.location_estimate:.17g}",
                    f"{det.norm_delta:.17g}",
                    f"{det.contribution:.17g}",
                ]
            )
