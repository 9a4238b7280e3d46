"""Window and truncation tuning, and truncated local covariance estimates.

Indices follow the usual 1-based convention of the estimator formulas:
``spot_cov_at(series, i, ...)`` averages increments ``i, ..., i + k_n - 1``,
where increment ``i`` is ``X[i] - X[i-1]``.  Arrays returned by
:func:`spot_cov_series` are 0-based, so element ``i - 1`` holds the estimate
at index ``i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import ConfigError, DimensionError

__all__ = [
    "ObservedSeries",
    "EstimatorConfig",
    "Tuning",
    "window_size",
    "validate_config",
    "truncation_bounds",
    "default_trunc_scale",
    "default_jump_trunc_scale",
    "spot_cov_at",
    "spot_cov_series",
    "spot_cov_series_naive",
    "read_series_csv",
    "write_series_csv",
]


@dataclass(frozen=True)
class ObservedSeries:
    """Regularly sampled observations ``X_0, X_{Delta}, ..., X_{N Delta}``.

    ``values`` has shape ``(N + 1, d)``.
    """

    delta_n: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DimensionError("values must have shape (N + 1, d)")
        if values.shape[0] < 2:
            raise ConfigError("need at least two observations (N >= 1)")
        if not np.all(np.isfinite(values)):
            raise ConfigError("observations must be finite")
        if not (self.delta_n > 0):
            raise ConfigError("delta_n must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "delta_n", float(self.delta_n))

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def n_increments(self):
        return self.values.shape[0] - 1

    @property
    def horizon(self):
        return self.n_increments * self.delta_n

    @property
    def increments(self):
        return np.diff(self.values, axis=0)

    @property
    def times(self):
        return np.arange(self.values.shape[0]) * self.delta_n


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning constants for the spot and jump estimators.

    ``trunc_scale`` and ``jump_trunc_scale`` default to data-driven values
    (see :func:`default_trunc_scale` and :func:`default_jump_trunc_scale`).
    ``border`` selects the boundary coefficient: ``"kn"`` uses
    ``k_n Delta_n / 2``, ``"kn_minus_1"`` uses ``(k_n - 1) Delta_n / 2``.
    """

    theta: float = 1.0
    varpi: float = 0.47
    trunc_scale: float | None = None
    varpi_prime: float = 0.1
    jump_trunc_scale: float | None = None
    truncation_enabled: bool = True
    jump_correction: bool = True
    quad_nodes: int = 16
    border: str = "kn"

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class Tuning:
    """Derived quantities for one series: ``k_n``, ``u_n`` and ``u'_n``."""

    k_n: int
    u_n: float
    u_prime_n: float
    trunc_scale: float
    jump_trunc_scale: float
    delta_n: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "k_n": self.k_n,
            "u_n": self.u_n,
            "u_prime_n": self.u_prime_n,
            "trunc_scale": self.trunc_scale,
            "jump_trunc_scale": self.jump_trunc_scale,
            "delta_n": self.delta_n,
        }


def window_size(delta_n, theta):
    """Number of increments per local window, ``round(theta / sqrt(delta_n))``.

    Rounds half up and never returns less than 2.
    """
    if not (delta_n > 0) or not (theta > 0):
        raise ConfigError(
            f"window_size needs delta_n > 0 and theta > 0 (got {delta_n}, {theta})"
        )
    return max(2, int(math.floor(theta / math.sqrt(delta_n) + 0.5)))


def truncation_bounds(p, r):
    """Admissible truncation exponents ``[(2p - 1) / (2(2p - r)), 1/2)``."""
    return (2.0 * p - 1.0) / (2.0 * (2.0 * p - r)), 0.5


def _block_rates(increments, k_n, delta_n):
    n = increments.shape[0] // k_n
    if n == 0:
        sq = np.sum(increments**2, axis=1)
        return np.array([sq.sum() / (increments.shape[0] * delta_n)])
    sq = np.sum(increments[: n * k_n] ** 2, axis=1).reshape(n, k_n)
    return sq.sum(axis=1) / (k_n * delta_n)


def default_trunc_scale(series, k_n):
    """``4 * sqrt(median block realized variance per unit time)``.

    Blocks of ``k_n`` increments; the median over blocks is insensitive to
    the few blocks that contain jumps.  Uses the trace for ``d > 1``.
    """
    rate = float(np.median(_block_rates(series.increments, k_n, series.delta_n)))
    return 4.0 * math.sqrt(max(rate, 0.0))


def default_jump_trunc_scale(series, k_n):
    """Median block realized variance per unit time (the spot level)."""
    return float(np.median(_block_rates(series.increments, k_n, series.delta_n)))


def validate_config(cfg, p=3.0, r=0.0, series=None, delta_n=None):
    """Check the exponent constraints and derive the tuning for a series.

    Parameters
    ----------
    cfg : EstimatorConfig
    p : float
        Growth exponent of the test function (``p >= 3``).
    r : float
        Jump activity index of ``X`` (``0 <= r < 1``).
    series : ObservedSeries, optional
        Needed when a data-driven default scale is requested.
    delta_n : float, optional
        Sampling interval; taken from ``series`` when omitted.

    Returns
    -------
    Tuning or None
        The derived ``k_n, u_n, u'_n`` when a sampling interval is known.

    Raises
    ------
    ConfigError
        Naming the violated inequality.
    """
    if p < 3:
        raise ConfigError(f"growth exponent must satisfy p >= 3 (got p={p})")
    if not (0.0 <= r < 1.0):
        raise ConfigError(f"jump activity must satisfy 0 <= r < 1 (got r={r})")
    if not (cfg.theta > 0):
        raise ConfigError(f"theta must satisfy theta > 0 (got {cfg.theta})")
    if cfg.truncation_enabled:
        lo, hi = truncation_bounds(p, r)
        if not (lo <= cfg.varpi < hi):
            raise ConfigError(
                f"truncation exponent must satisfy (2p-1)/(2(2p-r)) <= varpi < 1/2, "
                f"i.e. {lo:.6g} <= varpi < 0.5 for p={p}, r={r} (got varpi={cfg.varpi})"
            )
        if cfg.trunc_scale is not None and not (cfg.trunc_scale > 0):
            raise ConfigError("trunc_scale must satisfy alpha > 0")
    if not (0.0 < cfg.varpi_prime < 0.125):
        raise ConfigError(
            f"jump truncation exponent must satisfy 0 < varpi' < 1/8 "
            f"(got varpi'={cfg.varpi_prime})"
        )
    if cfg.jump_trunc_scale is not None and not (cfg.jump_trunc_scale > 0):
        raise ConfigError("jump_trunc_scale must satisfy alpha' > 0")
    if int(cfg.quad_nodes) < 2:
        raise ConfigError("quad_nodes must satisfy quad_nodes >= 2")
    if cfg.border not in ("kn", "kn_minus_1"):
        raise ConfigError("border must be 'kn' or 'kn_minus_1'")

    if delta_n is None and series is not None:
        delta_n = series.delta_n
    if delta_n is None:
        return None
    k_n = window_size(delta_n, cfg.theta)

    def need_series(what):
        if series is None:
            raise ConfigError(f"{what} is data-driven by default; pass a series")

    if cfg.truncation_enabled:
        alpha = cfg.trunc_scale
        if alpha is None:
            need_series("trunc_scale")
            alpha = default_trunc_scale(series, k_n)
        u_n = alpha * delta_n**cfg.varpi if alpha > 0 else math.inf
    else:
        alpha = math.inf
        u_n = math.inf
    alpha_p = cfg.jump_trunc_scale
    if alpha_p is None:
        need_series("jump_trunc_scale")
        alpha_p = default_jump_trunc_scale(series, k_n)
    u_prime_n = alpha_p * delta_n**cfg.varpi_prime
    if series is not None and series.n_increments < k_n:
        raise ConfigError(
            f"series has N={series.n_increments} increments, fewer than one "
            f"window k_n={k_n}"
        )
    return Tuning(
        k_n=k_n,
        u_n=float(u_n),
        u_prime_n=float(u_prime_n),
        trunc_scale=float(alpha),
        jump_trunc_scale=float(alpha_p),
        delta_n=float(delta_n),
    )


def _kept_products(increments, u_n):
    prods = increments[:, :, None] * increments[:, None, :]
    if math.isfinite(u_n):
        keep = np.linalg.norm(increments, axis=1) <= u_n
        prods = prods * keep[:, None, None]
    return prods


def spot_cov_at(series, i, k_n, u_n=math.inf):
    """Truncated local covariance estimate at 1-based index ``i``.

    Sums the outer products of increments ``i, ..., i + k_n - 1`` whose
    Euclidean norm is at most ``u_n``, divided by ``k_n * delta_n``.
    """
    N = series.n_increments
    k_n = int(k_n)
    if k_n < 1 or not (1 <= i <= N - k_n + 1):
        raise IndexError(f"index i={i} outside 1..{N - k_n + 1} for k_n={k_n}")
    inc = series.increments[i - 1 : i - 1 + k_n]
    out = np.zeros((series.dim, series.dim))
    for row in inc:
        if np.sqrt(np.dot(row, row)) <= u_n:
            out += np.outer(row, row)
    out /= k_n * series.delta_n
    return 0.5 * (out + out.T)


@numba.njit(cache=True)
def _rolling_window_sum(prods, k):
    # Kahan-compensated running sum over a sliding window of length k.
    n, d, _ = prods.shape
    m = n - k + 1
    out = np.empty((m, d, d))
    for a in range(d):
        for b in range(a, d):
            s = 0.0
            comp = 0.0
            for j in range(k):
                y = prods[j, a, b] - comp
                t = s + y
                comp = (t - s) - y
                s = t
            out[0, a, b] = s
            for i in range(1, m):
                y = (prods[i + k - 1, a, b] - prods[i - 1, a, b]) - comp
                t = s + y
                comp = (t - s) - y
                s = t
                out[i, a, b] = s
            if a != b:
                for i in range(m):
                    out[i, b, a] = out[i, a, b]
    return out


def spot_cov_series(series, k_n, u_n=math.inf):
    """All admissible local covariance estimates, computed by a rolling sum.

    Returns an array of shape ``(N - k_n + 1, d, d)`` whose element ``i - 1``
    equals ``spot_cov_at(series, i, k_n, u_n)``.  Cost is ``O(N d^2)``.
    """
    k_n = int(k_n)
    N = series.n_increments
    if k_n < 1 or N < k_n:
        raise ConfigError(f"series with N={N} increments is shorter than k_n={k_n}")
    prods = _kept_products(series.increments, u_n)
    sums = _rolling_window_sum(np.ascontiguousarray(prods), k_n)
    return sums / (k_n * series.delta_n)


def spot_cov_series_naive(series, k_n, u_n=math.inf):
    """Reference implementation summing each window from scratch."""
    N = series.n_increments
    return np.stack(
        [spot_cov_at(series, i, k_n, u_n) for i in range(1, N - int(k_n) + 2)]
    )


def read_series_csv(path, rtol=1e-9):
    """Read a ``t,x1,...,xd`` CSV file into an :class:`ObservedSeries`.

    The time column must be uniformly spaced to relative tolerance ``rtol``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    if not header or header[0] != "t" or len(header) < 2:
        raise ConfigError(f"{path}: header must be 't,x1,...,xd'")
    expected = ["t"] + [f"x{j}" for j in range(1, len(header))]
    if header != expected:
        raise ConfigError(f"{path}: header must be {','.join(expected)}")
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ConfigError(f"{path}: need at least two rows")
    dt = np.diff(data[:, 0])
    delta = (data[-1, 0] - data[0, 0]) / (data.shape[0] - 1)
    if not (delta > 0) or np.max(np.abs(dt - delta)) > rtol * delta:
        raise ConfigError(f"{path}: time column is not uniformly spaced")
    return ObservedSeries(delta, data[:, 1:])


def write_series_csv(series, path, t0=0.0):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{j}" for j in range(1, series.dim + 1)])
        times = t0 + series.times
        for t, row in zip(times, series.values):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
