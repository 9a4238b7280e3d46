"""Plug-in functional, its bias corrections and the feasible interval.

Every function takes ``spots``, the ``(M, d, d)`` array returned by
:func:`volfn.spotvol.spot_cov_series` with ``M = N - k_n + 1`` where ``N`` is
the number of increments observed on ``[0, t]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import NumericalError
from .symfun import h_from_g, hbar_from_g

__all__ = [
    "EstimateReport",
    "plugin_functional",
    "border_term",
    "a2_term",
    "a3_term",
    "variance_estimate",
    "debiased_estimator",
    "confidence_interval",
    "normal_quantile",
    "REPORT_FIELDS",
]


def _as_spots(spots, g):
    spots = np.asarray(spots, dtype=float)
    if spots.ndim == 2 and g.dim == 1:
        spots = spots.reshape(-1, 1, 1)
    if spots.ndim != 3:
        spots = spots.reshape((-1,) + spots.shape[-2:])
    g.check_dim(spots)
    return spots


def plugin_functional(spots, g, delta_n):
    """``delta_n * sum_i g(spots[i])``; zero for an empty array."""
    spots = _as_spots(spots, g)
    if spots.shape[0] == 0:
        return 0.0
    return float(delta_n * np.sum(g(spots)))


def border_term(spots, g, k_n, delta_n, minus_one=False):
    """Boundary correction ``(k_n Delta_n / 2)(g(first) + g(last))``.

    With ``minus_one=True`` the coefficient is ``(k_n - 1) Delta_n / 2``.
    """
    spots = _as_spots(spots, g)
    if spots.shape[0] == 0:
        raise ValueError("border_term needs at least one spot estimate")
    coef = (k_n - 1 if minus_one else k_n) * delta_n / 2.0
    ends = g(spots[[0, -1]])
    return float(coef * (ends[0] + ends[1]))


def a2_term(spots, g, k_n, delta_n):
    """Estimator of the statistical-error bias, ``V(h)^n / (k_n sqrt(delta_n))``."""
    spots = _as_spots(spots, g)
    if g.is_linear or spots.shape[0] == 0:
        return 0.0
    vh = delta_n * float(np.sum(h_from_g(g, spots)))
    return vh / (k_n * math.sqrt(delta_n))


def a3_term(spots, g, k_n, delta_n):
    """Estimator of the vol-of-vol bias from lagged spot differences.

    ``-(sqrt(delta_n)/8) sum_i sum_{jklm} d2g(c_i)_{jk,lm} D_i^{jk} D_i^{lm}``
    with ``D_i = c_{i+k_n} - c_i`` for ``i = 1 .. N - 2 k_n + 1``.
    """
    spots = _as_spots(spots, g)
    k_n = int(k_n)
    n_terms = spots.shape[0] - k_n
    if g.is_linear or n_terms <= 0:
        return 0.0
    base = spots[:n_terms]
    diff = spots[k_n:] - base
    quad = np.einsum("ijklm,ijk,ilm->i", g.hessian(base), diff, diff)
    return float(-math.sqrt(delta_n) / 8.0 * np.sum(quad))


def variance_estimate(spots, g, delta_n):
    """``delta_n * V(hbar)^n``, the conditional variance of the estimator."""
    spots = _as_spots(spots, g)
    if spots.shape[0] == 0:
        return 0.0
    return delta_n * delta_n * float(np.sum(hbar_from_g(g, spots)))


def normal_quantile(p):
    """Standard normal quantile function."""
    return float(ndtri(p))


REPORT_FIELDS = (
    "t",
    "raw",
    "border",
    "a2_term",
    "a3_term",
    "jump_term",
    "debiased",
    "variance_est",
    "level",
    "ci_low",
    "ci_high",
)


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate, its corrections, variance and confidence interval."""

    t: float
    raw: float
    border: float
    a2_term: float
    a3_term: float
    jump_term: float
    debiased: float
    variance_est: float
    level: float
    ci_low: float
    ci_high: float
    k_n: int
    delta_n: float
    config: dict = field(default_factory=dict)
    truth: float | None = None

    @property
    def std_error(self):
        return math.sqrt(self.variance_est)

    @property
    def error_raw(self):
        return None if self.truth is None else self.raw - self.truth

    @property
    def error_debiased(self):
        return None if self.truth is None else self.debiased - self.truth

    def studentized(self):
        if self.truth is None or self.variance_est <= 0:
            return None
        return (self.debiased - self.truth) / math.sqrt(self.variance_est)

    def to_dict(self):
        out = asdict(self)
        out["config"] = {k: _clean(v) for k, v in self.config.items()}
        if self.truth is not None:
            out["error_raw"] = self.error_raw
            out["error_debiased"] = self.error_debiased
            sq = math.sqrt(self.delta_n)
            out["error_raw_normalized"] = self.error_raw / sq
            out["error_debiased_normalized"] = self.error_debiased / sq
            out["studentized"] = self.studentized()
        return out

    def to_json(self, **kwargs):
        return json.dumps(
            self.to_dict(), default=_json_default, allow_nan=False, **kwargs
        )

    def csv_row(self):
        return [f"{getattr(self, f):.17g}" for f in REPORT_FIELDS]


def _clean(v):
    # strict JSON has no Infinity/NaN; an infinite truncation level reads as null
    if isinstance(v, (float, np.floating)) and not math.isfinite(v):
        return None
    return v


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def debiased_estimator(
    spots,
    g,
    k_n,
    delta_n,
    jump_term=0.0,
    *,
    level=0.95,
    border="kn",
    config=None,
    truth=None,
):
    """Assemble the de-biased estimator and its feasible interval.

    ``debiased = raw + border - sqrt(delta_n) (1.5 a2_term + a3_term)
    - k_n delta_n jump_term``.

    Parameters
    ----------
    spots : ndarray, shape (M, d, d)
    g : MatrixFunctional
    k_n : int
    delta_n : float
    jump_term : float
        Estimate of the jump functional of ``G - G'`` computed on the same
        spots (see :func:`volfn.jumpfun.jump_term`); 0 disables it.
    level : float
        Confidence level of the reported interval.
    border : {"kn", "kn_minus_1"}
    config, truth : optional
        Echoed into the report.
    """
    spots = _as_spots(spots, g)
    if spots.shape[0] == 0:
        raise ValueError("debiased_estimator needs at least one spot estimate")
    raw = plugin_functional(spots, g, delta_n)
    brd = border_term(spots, g, k_n, delta_n, minus_one=(border == "kn_minus_1"))
    a2 = a2_term(spots, g, k_n, delta_n)
    a3 = a3_term(spots, g, k_n, delta_n)
    jump_term = float(jump_term)
    debiased = (
        raw + brd - math.sqrt(delta_n) * (1.5 * a2 + a3) - k_n * delta_n * jump_term
    )
    var = variance_estimate(spots, g, delta_n)
    if var < 0:
        if var < -1e-12 * max(1.0, abs(debiased)) ** 2:
            raise NumericalError(f"negative variance estimate {var}")
        var = 0.0
    low, high = _interval(debiased, var, level)
    n_obs = spots.shape[0] + int(k_n) - 1
    return EstimateReport(
        t=n_obs * delta_n,
        raw=raw,
        border=brd,
        a2_term=a2,
        a3_term=a3,
        jump_term=jump_term,
        debiased=debiased,
        variance_est=var,
        level=float(level),
        ci_low=low,
        ci_high=high,
        k_n=int(k_n),
        delta_n=float(delta_n),
        config=dict(config or {}),
        truth=truth,
    )


def _interval(center, var, level):
    if not (0.0 < level < 1.0):
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    if var < 0:
        raise NumericalError(f"negative variance estimate {var}")
    half = normal_quantile(0.5 * (1.0 + level)) * math.sqrt(var)
    return center - half, center + half


def confidence_interval(report, level):
    """Symmetric normal interval ``debiased -/+ z sqrt(variance_est)``."""
    return _interval(report.debiased, report.variance_est, level)
