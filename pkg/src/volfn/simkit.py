"""Simulation of a jump-diffusion with stochastic volatility, with ground truth.

The log-price ``X`` is driven by a ``d``-dimensional Brownian motion ``W``
and finite-activity compound Poisson jumps.  Its spot covariance ``c`` is
either constant or built from independent square-root (CIR) factors,

    dD_j = kappa (level - D_j^+) dt + xi sqrt(D_j^+) dB_j,
    c = S R S,  S = diag(sqrt(D^+)),  R = (1 - corr) I + corr 1 1',

with leverage ``dB_j = rho dW_j + sqrt(1 - rho^2) dW'_j``.  Positive jumps of
``c`` are added to the diagonal state (lognormal Poisson jumps, or a list of
scheduled jumps), which keeps ``c`` positive semidefinite.

Paths are simulated by full-truncation Euler on a fine grid with
``fine_steps`` sub-steps per observation interval.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import ConfigError
from .spotvol import ObservedSeries, write_series_csv
from .symfun import bias_kernel_G, get_functional, h_from_g, hbar_from_g

__all__ = [
    "ScenarioSpec",
    "CJump",
    "SimulatedPath",
    "LimitTerms",
    "simulate_path",
    "true_integrated_functional",
    "true_jump_functional",
    "theoretical_limits",
    "load_scenario",
    "save_scenario",
    "export_path",
]

VOL_MODELS = ("constant", "sqrt")
X_JUMP_LAWS = ("symmetric", "normal")


@dataclass
class ScenarioSpec:
    """Data-generating process for :func:`simulate_path`.

    ``c0`` is the initial covariance: a scalar (times the identity), a list
    of diagonal entries, or a full matrix (constant model only).  For the
    square-root model ``c0`` gives the initial diagonal factor levels and
    ``corr`` the constant correlation between components.

    ``c_jumps`` lists scheduled volatility jumps as ``(time, size)`` pairs;
    ``size`` is added to every diagonal factor (scalar) or per component
    (list).  ``activity_r`` is a label recording the jump activity index the
    scenario is meant to exercise; compound Poisson jumps have ``r = 0``.
    """

    dim: int = 1
    horizon: float = 1.0
    fine_steps: int = 10
    drift: object = 0.0
    vol_model: str = "constant"
    c0: object = 0.04
    kappa: float = 5.0
    level: float = 0.04
    xi: float = 0.3
    rho: float = 0.0
    corr: float = 0.0
    c_jump_rate: float = 0.0
    c_jump_mean: float = 0.02
    c_jump_logsd: float = 0.5
    c_jumps: list = field(default_factory=list)
    x_jump_rate: float = 0.0
    x_jump_law: str = "symmetric"
    x_jump_size: float = 0.05
    activity_r: float = 0.0
    seed: int = 0

    def validate(self):
        if int(self.dim) < 1:
            raise ConfigError("dim must be >= 1")
        if not (self.horizon > 0):
            raise ConfigError("horizon must be positive")
        if int(self.fine_steps) < 1:
            raise ConfigError("fine_steps must be >= 1")
        if self.vol_model not in VOL_MODELS:
            raise ConfigError(f"vol_model must be one of {VOL_MODELS}")
        if self.x_jump_law not in X_JUMP_LAWS:
            raise ConfigError(f"x_jump_law must be one of {X_JUMP_LAWS}")
        for name in ("c_jump_rate", "x_jump_rate", "c_jump_logsd", "x_jump_size"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.c_jump_rate > 0 and not (self.c_jump_mean > 0):
            raise ConfigError("c_jump_mean must be positive (jumps must keep c PSD)")
        if self.vol_model == "sqrt":
            if self.kappa < 0 or self.xi < 0 or self.level < 0:
                raise ConfigError("kappa, level and xi must be non-negative")
        if not (-1.0 <= self.rho <= 1.0):
            raise ConfigError("rho must lie in [-1, 1]")
        d = int(self.dim)
        if d > 1 and not (-1.0 / (d - 1) <= self.corr <= 1.0):
            raise ConfigError("corr must keep the correlation matrix PSD")
        if not (0.0 <= self.activity_r < 1.0):
            raise ConfigError("activity_r must lie in [0, 1)")
        for item in self.c_jumps:
            time, size = item
            if not (0 < time <= self.horizon):
                raise ConfigError("scheduled jump times must lie in (0, horizon]")
            if np.any(np.asarray(size, dtype=float) < 0):
                raise ConfigError("scheduled jump sizes must be non-negative (PSD)")
        return self

    def to_dict(self):
        if callable(self.drift):
            raise ConfigError("a callable drift cannot be serialised")
        out = asdict(self)
        for key in ("drift", "c0"):
            if isinstance(out[key], np.ndarray):
                out[key] = out[key].tolist()
        out["c_jumps"] = [[float(t), _plain(s)] for t, s in self.c_jumps]
        return out

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(data)
        if "c_jumps" in data:
            data["c_jumps"] = [tuple(item) for item in data["c_jumps"]]
        return cls(**data)


def _plain(x):
    return np.asarray(x, dtype=float).tolist()


def load_scenario(path):
    with open(path) as fh:
        return ScenarioSpec.from_dict(json.load(fh)).validate()


def save_scenario(spec, path):
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)


@dataclass(frozen=True)
class CJump:
    """One jump of the spot covariance: time, ``Delta c`` and ``c_{s-}``."""

    time: float
    delta: np.ndarray
    c_before: np.ndarray


@dataclass
class SimulatedPath:
    """Observed series plus the fine-grid truth it was generated from.

    ``c_path[k]`` is the (right-continuous) spot covariance at fine time
    ``k * fine_dt``; ``volvol[k]`` the vol-of-vol tensor there.
    """

    spec: ScenarioSpec
    delta_n: float
    series: ObservedSeries
    fine_dt: float
    c_path: np.ndarray
    volvol: np.ndarray
    c_jumps: list
    x_jumps: list
    x_fine: np.ndarray | None = None

    @property
    def horizon(self):
        return self.series.horizon

    @property
    def fine_times(self):
        return np.arange(self.c_path.shape[0]) * self.fine_dt


@numba.njit(cache=True)
def _sqrt_euler(d0, kappa, level, xi, dB, h, jump_add):
    n = dB.shape[0]
    out = np.empty(n + 1)
    pre = np.empty(n + 1)
    out[0] = d0
    pre[0] = d0
    for k in range(n):
        v = out[k] if out[k] > 0.0 else 0.0
        nxt = out[k] + kappa * (level - v) * h + xi * math.sqrt(v) * dB[k]
        pre[k + 1] = nxt
        out[k + 1] = nxt + jump_add[k + 1]
    return out, pre


def _as_vec(x, d, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return np.full(d, float(arr))
    if arr.shape != (d,):
        raise ConfigError(f"{name} must be a scalar or a length-{d} list")
    return arr


def _psd_sqrt(c):
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(c)
        if np.min(w) < -1e-12 * max(1.0, np.max(np.abs(w))):
            raise ConfigError("initial covariance is not positive semidefinite")
        return v * np.sqrt(np.clip(w, 0.0, None))


def _corr_matrix(d, corr):
    return (1.0 - corr) * np.eye(d) + corr * np.ones((d, d))


def _grid_index(time, h, n):
    # first fine grid point at or after `time`, restricted to 1..n
    k = int(math.ceil(time / h - 1e-9))
    return min(max(k, 1), n)


def simulate_path(spec, delta_n, keep_fine_x=False):
    """Simulate one path of ``(X, c)`` observed every ``delta_n``.

    Reproducible: the draws depend only on ``spec`` (including ``seed``).
    The diffusion, volatility jumps and price jumps use independent child
    streams of ``spec.seed``, so switching price jumps on or off leaves the
    continuous part unchanged.
    """
    spec.validate()
    if not (delta_n > 0):
        raise ConfigError("delta_n must be positive")
    d = int(spec.dim)
    m = int(spec.fine_steps)
    N = int(math.floor(spec.horizon / delta_n + 1e-9))
    if N < 1:
        raise ConfigError("horizon shorter than one sampling interval")
    n = N * m
    h = delta_n / m
    horizon = N * delta_n

    ss = np.random.SeedSequence(int(spec.seed))
    rng_w, rng_b, rng_cj, rng_xj = (np.random.default_rng(s) for s in ss.spawn(4))
    dW = rng_w.standard_normal((n, d)) * math.sqrt(h)

    # Volatility jumps: (grid index, per-component size)
    jumps = []
    if spec.c_jump_rate > 0:
        count = rng_cj.poisson(spec.c_jump_rate * horizon)
        times = np.sort(rng_cj.uniform(0.0, horizon, size=count))
        mu = math.log(spec.c_jump_mean) - 0.5 * spec.c_jump_logsd**2
        for s in times:
            size = np.exp(mu + spec.c_jump_logsd * rng_cj.standard_normal(d))
            jumps.append((_grid_index(s, h, n), size))
    for s, size in spec.c_jumps:
        if s <= horizon:
            jumps.append((_grid_index(s, h, n), _as_vec(size, d, "c jump size")))
    jump_add = np.zeros((n + 1, d))
    for k, size in jumps:
        jump_add[k] += size

    if spec.vol_model == "constant":
        c0 = np.asarray(spec.c0, dtype=float)
        if c0.ndim == 0:
            c0 = float(c0) * np.eye(d)
        elif c0.ndim == 1:
            c0 = np.diag(_as_vec(c0, d, "c0"))
        if c0.shape != (d, d) or not np.allclose(c0, c0.T):
            raise ConfigError("c0 must be a symmetric d x d matrix")
        _psd_sqrt(c0)
        c_path = np.broadcast_to(c0, (n + 1, d, d)).copy()
        c_path += np.cumsum(jump_add, axis=0)[:, :, None] * np.eye(d)
        pre_c = c_path.copy()
        pre_c[1:] = c_path[:-1]
        volvol = np.zeros((n + 1, d, d, d, d))
    else:
        D0 = _as_vec(spec.c0, d, "c0")
        if np.any(D0 < 0):
            raise ConfigError("initial variance levels must be non-negative")
        dWp = rng_b.standard_normal((n, d)) * math.sqrt(h)
        dB = spec.rho * dW + math.sqrt(1.0 - spec.rho**2) * dWp
        D = np.empty((n + 1, d))
        Dpre = np.empty((n + 1, d))
        for j in range(d):
            D[:, j], Dpre[:, j] = _sqrt_euler(
                float(D0[j]),
                float(spec.kappa),
                float(spec.level),
                float(spec.xi),
                np.ascontiguousarray(dB[:, j]),
                h,
                np.ascontiguousarray(jump_add[:, j]),
            )
        R = _corr_matrix(d, spec.corr)
        c_path = _sqrt_cov(D, R)
        pre_c = _sqrt_cov(Dpre, R)
        volvol = _sqrt_volvol(D, R, float(spec.xi))

    # Price increments on the fine grid, volatility taken at the left point.
    if d == 1:
        sig = np.sqrt(np.clip(c_path[:-1, 0, 0], 0.0, None))
        dX = sig[:, None] * dW
    elif spec.vol_model == "sqrt":
        L = _psd_sqrt(_corr_matrix(d, spec.corr))
        dX = np.sqrt(np.clip(D[:-1], 0.0, None)) * (dW @ L.T)
    else:
        levels, seg = _unique_segments(c_path[:-1])
        sig = np.stack([_psd_sqrt(c) for c in levels])
        dX = np.einsum("kij,kj->ki", sig[seg], dW)

    t_left = np.arange(n) * h
    if callable(spec.drift):
        b = np.asarray(spec.drift(t_left, c_path[:-1]), dtype=float).reshape(n, d)
        dX = dX + b * h
    else:
        dX = dX + _as_vec(spec.drift, d, "drift") * h

    x_jumps = []
    if spec.x_jump_rate > 0:
        count = rng_xj.poisson(spec.x_jump_rate * horizon)
        times = np.sort(rng_xj.uniform(0.0, horizon, size=count))
        for s in times:
            if spec.x_jump_law == "symmetric":
                size = spec.x_jump_size * rng_xj.choice([-1.0, 1.0], size=d)
            else:
                size = spec.x_jump_size * rng_xj.standard_normal(d)
            k = min(int(s / h), n - 1)
            dX[k] += size
            x_jumps.append((float(s), size))

    x_fine = np.zeros((n + 1, d))
    np.cumsum(dX, axis=0, out=x_fine[1:])
    obs = np.zeros((N + 1, d))
    obs[1:] = np.cumsum(dX.reshape(N, m, d).sum(axis=1), axis=0)

    c_jumps = []
    for k in sorted({k for k, _ in jumps}):
        c_jumps.append(
            CJump(time=k * h, delta=c_path[k] - pre_c[k], c_before=pre_c[k].copy())
        )

    return SimulatedPath(
        spec=spec,
        delta_n=float(delta_n),
        series=ObservedSeries(delta_n, obs),
        fine_dt=h,
        c_path=c_path,
        volvol=volvol,
        c_jumps=c_jumps,
        x_jumps=x_jumps,
        x_fine=x_fine if keep_fine_x else None,
    )


def _unique_segments(cs):
    # piecewise-constant covariance: factorise each distinct level once
    change = np.ones(cs.shape[0], dtype=bool)
    change[1:] = np.any(cs[1:] != cs[:-1], axis=(1, 2))
    starts = np.flatnonzero(change)
    seg = np.cumsum(change) - 1
    return cs[starts], seg


def _sqrt_cov(D, R):
    s = np.sqrt(np.clip(D, 0.0, None))
    # (s_j s_k) R_jk rather than (s_j R_jk) s_k keeps c exactly symmetric
    return (s[:, :, None] * s[:, None, :]) * R


def _sqrt_volvol(D, R, xi):
    # sigma~^{jk,n} = (xi/2) R_jk (delta_nj sqrt(D_k) + delta_nk sqrt(D_j))
    n1, d = D.shape
    s = np.sqrt(np.clip(D, 0.0, None))
    eye = np.eye(d)
    sig = 0.5 * xi * R[None, :, :, None] * (
        eye[None, None, :, :] * s[:, None, :, None]
        + eye[None, :, None, :] * s[:, :, None, None]
    )
    # sig[t, j, k, n]
    return np.einsum("tjkn,tlmn->tjklm", sig, sig)


def true_integrated_functional(path, g):
    """Left-point Riemann sum of ``g(c_s)`` over the fine grid."""
    g = get_functional(g, path.spec.dim)
    return float(path.fine_dt * np.sum(g(path.c_path[:-1])))


def true_jump_functional(path, F):
    """Exact ``sum_s F(c_{s-}, Delta c_s)`` over the logged volatility jumps."""
    return float(sum(F(j.c_before, j.delta) for j in path.c_jumps))


@dataclass(frozen=True)
class LimitTerms:
    """Asymptotic bias components and the conditional variance of the limit."""

    A1: float
    A2: float
    A3: float
    A4: float
    Z_var: float

    @property
    def bias(self):
        return self.A1 + self.A2 + self.A3 + self.A4

    def to_dict(self):
        return {**asdict(self), "bias": self.bias}


def theoretical_limits(path, g, theta, quad_nodes=16):
    """Evaluate the bias terms ``A1..A4`` and ``Var(Z)`` on the true path.

    ``A1 = -(theta/2)(g(c_0) + g(c_t))``,
    ``A2 = (1/theta) int h(c_s) ds``,
    ``A3 = -(theta/12) int sum d2g(c_s) : c~_s ds``,
    ``A4 = theta sum_s G(c_{s-}, Delta c_s)`` and
    ``Z_var = int hbar(c_s) ds``; integrals use the fine-grid left-point rule.
    """
    g = get_functional(g, path.spec.dim)
    cs = path.c_path[:-1]
    dt = path.fine_dt
    a1 = -0.5 * theta * float(g(path.c_path[0]) + g(path.c_path[-1]))
    if g.is_linear:
        a2 = a3 = 0.0
    else:
        a2 = dt * float(np.sum(h_from_g(g, cs))) / theta
        a3 = 0.0
        if np.any(path.volvol):
            quad = np.einsum("tjklm,tjklm->t", g.hessian(cs), path.volvol[:-1])
            a3 = -theta / 12.0 * dt * float(np.sum(quad))
    a4 = 0.0
    if path.c_jumps and not g.is_linear:
        a4 = theta * float(
            sum(bias_kernel_G(g, j.c_before, j.delta, quad_nodes) for j in path.c_jumps)
        )
    zvar = dt * float(np.sum(hbar_from_g(g, cs)))
    return LimitTerms(A1=a1, A2=a2, A3=a3, A4=a4, Z_var=zvar)


def export_path(path, csv_path, functionals=("identity", "square")):
    """Write the observed series as CSV plus a ``<stem>.truth.json`` sidecar.

    The sidecar holds the volatility jump log, the true integrated
    functionals for ``functionals`` and the fine-grid covariance path.
    """
    write_series_csv(path.series, csv_path)
    truth = {
        "delta_n": path.delta_n,
        "horizon": path.horizon,
        "fine_dt": path.fine_dt,
        "dim": path.spec.dim,
        "scenario": path.spec.to_dict() if not callable(path.spec.drift) else None,
        "c_jumps": [
            {"time": j.time, "delta": _plain(j.delta), "c_before": _plain(j.c_before)}
            for j in path.c_jumps
        ],
        "x_jumps": [{"time": t, "size": _plain(s)} for t, s in path.x_jumps],
        "integrated": {
            name: true_integrated_functional(path, name) for name in functionals
        },
        "c_fine": path.c_path.reshape(path.c_path.shape[0], -1).tolist(),
    }
    out = truth_path_for(csv_path)
    with open(out, "w") as fh:
        json.dump(truth, fh)
    return out


def truth_path_for(csv_path):
    csv_path = str(csv_path)
    stem = csv_path[:-4] if csv_path.endswith(".csv") else csv_path
    return stem + ".truth.json"
