"""Estimation pipeline and Monte Carlo driver.

:func:`run_estimate` chains tuning, spot estimation, jump correction and
assembly for one series.  :func:`run_mc` repeats simulate -> estimate over
independently seeded replications and aggregates error, coverage and
studentized-statistic summaries.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import VolfnError
from .estimators import debiased_estimator
from .jumpfun import jump_term
from .simkit import SimulatedPath, simulate_path, theoretical_limits, true_integrated_functional
from .spotvol import EstimatorConfig, ObservedSeries, spot_cov_series, validate_config
from .symfun import MatrixFunctional, get_functional

__all__ = [
    "run_estimate",
    "run_mc",
    "replication_seed",
    "MCReport",
    "MC_COLUMNS",
    "write_mc_csv",
]


def run_estimate(source, g, cfg=None, *, p=None, r=None, level=0.95, truth=None):
    """Estimate ``int_0^t g(c_s) ds`` from a series or a simulated path.

    Parameters
    ----------
    source : ObservedSeries or SimulatedPath
    g : str or MatrixFunctional
    cfg : EstimatorConfig, optional
    p, r : float, optional
        Growth exponent and jump activity used to check the truncation
        exponent.  Default to ``g.growth_exponent`` and, for simulated paths,
        the scenario's ``activity_r`` (else 0).
    level : float
    truth : float, optional
        True integrated functional; computed from the fine grid when
        ``source`` is a simulated path.

    Returns
    -------
    EstimateReport
        ``report.config`` echoes the configuration, the derived tuning and
        the number of jump detections.
    """
    cfg = cfg or EstimatorConfig()
    path = source if isinstance(source, SimulatedPath) else None
    series = path.series if path is not None else source
    if not isinstance(series, ObservedSeries):
        raise TypeError("source must be an ObservedSeries or a SimulatedPath")
    g = get_functional(g, series.dim)
    if p is None:
        p = g.growth_exponent
    if r is None:
        r = path.spec.activity_r if path is not None else 0.0
    tuning = validate_config(cfg, p, r, series=series)
    spots = spot_cov_series(series, tuning.k_n, tuning.u_n)
    detections = []
    jt = 0.0
    if cfg.jump_correction:
        jt, detections = jump_term(
            spots, g, tuning.k_n, series.delta_n, tuning.u_prime_n, cfg.quad_nodes
        )
    if truth is None and path is not None:
        truth = true_integrated_functional(path, g)
    config = {
        **cfg.to_dict(),
        **tuning.to_dict(),
        "g": g.name,
        "p": float(p),
        "r": float(r),
        "n_jump_detections": len(detections),
    }
    return debiased_estimator(
        spots,
        g,
        tuning.k_n,
        series.delta_n,
        jt,
        level=level,
        border=cfg.border,
        config=config,
        truth=truth,
    )


def replication_seed(master_seed, index):
    """Seed of replication ``index``, derived from ``(master_seed, index)``."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(
        2, np.uint32
    )
    return int(state[0]) << 32 | int(state[1])


MC_BASE_COLUMNS = (
    "rep",
    "seed",
    "t",
    "k_n",
    "raw",
    "border",
    "a2_term",
    "a3_term",
    "jump_term",
    "debiased",
    "variance_est",
    "truth",
    "err_raw_norm",
    "err_debiased_norm",
    "studentized",
    "A1",
    "A2",
    "A3",
    "A4",
    "Z_var",
    "n_jump_detections",
)
MC_COLUMNS = MC_BASE_COLUMNS


def _replicate(args):
    scenario, g, cfg, delta_n, index, master_seed, levels = args
    seed = replication_seed(master_seed, index)
    spec = dataclasses.replace(scenario, seed=seed)
    try:
        path = simulate_path(spec, delta_n)
        rep = run_estimate(path, g, cfg)
    except VolfnError as exc:
        raise type(exc)(f"replication {index}: {exc}") from exc
    except Exception as exc:
        raise RuntimeError(f"replication {index} failed: {exc}") from exc
    theta_eff = rep.k_n * math.sqrt(delta_n)
    lim = theoretical_limits(path, g, theta_eff, cfg.quad_nodes)
    sq = math.sqrt(delta_n)
    row = {
        "rep": index,
        "seed": seed,
        "t": rep.t,
        "k_n": rep.k_n,
        "raw": rep.raw,
        "border": rep.border,
        "a2_term": rep.a2_term,
        "a3_term": rep.a3_term,
        "jump_term": rep.jump_term,
        "debiased": rep.debiased,
        "variance_est": rep.variance_est,
        "truth": rep.truth,
        "err_raw_norm": (rep.raw - rep.truth) / sq,
        "err_debiased_norm": (rep.debiased - rep.truth) / sq,
        "studentized": (
            (rep.debiased - rep.truth) / math.sqrt(rep.variance_est)
            if rep.variance_est > 0
            else float("nan")
        ),
        "A1": lim.A1,
        "A2": lim.A2,
        "A3": lim.A3,
        "A4": lim.A4,
        "Z_var": lim.Z_var,
        "n_jump_detections": rep.config["n_jump_detections"],
    }
    for lv in levels:
        half = stats.norm.ppf(0.5 * (1 + lv)) * math.sqrt(rep.variance_est)
        row[f"covered_{lv:g}"] = int(abs(rep.debiased - rep.truth) <= half)
    return row


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return m, se


@dataclass
class MCReport:
    """Aggregated Monte Carlo statistics.

    Errors are normalised by ``sqrt(delta_n)``.  ``terms`` holds the mean and
    standard error of each signed correction as it enters the de-biased
    estimator, also divided by ``sqrt(delta_n)``.  ``runtime_seconds`` is kept out of
    :meth:`to_dict` so that serialised reports are reproducible byte for
    byte.
    """

    replications: int
    delta_n: float
    g: str
    master_seed: int
    err_debiased_mean: float
    err_debiased_se: float
    err_raw_mean: float
    err_raw_se: float
    err_raw_var: float
    err_debiased_var: float
    zvar_mean: float
    theory_bias_mean: float
    theory_bias_continuous_mean: float
    terms: dict
    coverage: dict
    studentized_mean: float
    studentized_var: float
    studentized_skew: float
    rows: list = field(default_factory=list, repr=False)
    runtime_seconds: float = 0.0

    def to_dict(self):
        out = dataclasses.asdict(self)
        out.pop("rows")
        out.pop("runtime_seconds")
        out["coverage"] = {f"{k:g}": v for k, v in self.coverage.items()}
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _aggregate(rows, delta_n, g_name, master_seed, levels):
    col = lambda k: np.array([r[k] for r in rows], dtype=float)  # noqa: E731
    sq = math.sqrt(delta_n)
    e_deb = col("err_debiased_norm")
    e_raw = col("err_raw_norm")
    stud = col("studentized")
    stud = stud[np.isfinite(stud)]
    k_n = col("k_n")
    contributions = {
        "border": col("border") / sq,
        "a2": -1.5 * col("a2_term"),
        "a3": -col("a3_term"),
        "jump": -k_n * delta_n * col("jump_term") / sq,
    }
    terms = {}
    for name, values in contributions.items():
        m, se = _mean_se(values)
        terms[name] = {"mean": m, "se": se}
    dm, dse = _mean_se(e_deb)
    rm, rse = _mean_se(e_raw)
    coverage = {
        lv: float(np.mean([r[f"covered_{lv:g}"] for r in rows])) for lv in levels
    }
    bias = col("A1") + col("A2") + col("A3") + col("A4")
    return MCReport(
        replications=len(rows),
        delta_n=float(delta_n),
        g=g_name,
        master_seed=int(master_seed),
        err_debiased_mean=dm,
        err_debiased_se=dse,
        err_raw_mean=rm,
        err_raw_se=rse,
        err_raw_var=float(np.var(e_raw, ddof=1)),
        err_debiased_var=float(np.var(e_deb, ddof=1)),
        zvar_mean=float(np.mean(col("Z_var"))),
        theory_bias_mean=float(np.mean(bias)),
        theory_bias_continuous_mean=float(np.mean(col("A1") + col("A2") + col("A3"))),
        terms=terms,
        coverage=coverage,
        studentized_mean=float(np.mean(stud)) if stud.size else float("nan"),
        studentized_var=float(np.var(stud, ddof=1)) if stud.size > 1 else float("nan"),
        studentized_skew=float(stats.skew(stud)) if stud.size > 2 else float("nan"),
        rows=rows,
    )


def run_mc(
    scenario,
    g,
    cfg=None,
    *,
    delta_n,
    reps,
    levels=(0.95,),
    seed=0,
    workers=1,
):
    """Monte Carlo study of the estimator on simulated paths.

    Replication ``i`` simulates ``scenario`` with seed
    ``replication_seed(seed, i)``, so results do not depend on ``workers``.
    Theoretical bias terms are evaluated with the effective
    ``theta_n = k_n sqrt(delta_n)``.
    """
    if int(reps) < 2:
        raise ValueError("need at least two replications")
    cfg = cfg or EstimatorConfig()
    levels = tuple(float(lv) for lv in levels)
    for lv in levels:
        if not (0 < lv < 1):
            raise ValueError(f"coverage level {lv} outside (0, 1)")
    if isinstance(g, MatrixFunctional):
        if workers > 1:
            raise ValueError("parallel runs need g given by name")
        g_name = g.name
    else:
        g_name = str(g)
    jobs = [(scenario, g, cfg, delta_n, i, seed, levels) for i in range(int(reps))]
    start = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replicate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_replicate(job) for job in jobs]
    report = _aggregate(rows, delta_n, g_name, seed, levels)
    report.runtime_seconds = time.perf_counter() - start
    return report


def write_mc_csv(report, path):
    """Per-replication table; floats use 17 significant digits."""
    extra = sorted(k for k in report.rows[0] if k.startswith("covered_")) if report.rows else []
    columns = list(MC_COLUMNS) + extra
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in report.rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"
