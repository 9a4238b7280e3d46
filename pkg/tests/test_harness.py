import json
import math
from pathlib import Path

import numpy as np
import pytest

from volfn.errors import ConfigError, VolfnError
from volfn.harness import MC_COLUMNS, replication_seed, run_estimate, run_mc, write_mc_csv
from volfn.simkit import ScenarioSpec, simulate_path
from volfn.spotvol import EstimatorConfig, ObservedSeries, read_series_csv

DATA = Path(__file__).parent / "data"
CONST = ScenarioSpec(c0=0.04)
NO_TRUNC = EstimatorConfig(truncation_enabled=False)


def weighted_rv(inc, k, u):
    # each increment counts (#windows containing it) / k times
    n = len(inc)
    total = 0.0
    for l in range(n):
        if abs(inc[l]) <= u:
            windows = min(l, n - k) - max(0, l - k + 1) + 1
            total += windows / k * inc[l] ** 2
    return total


class TestRunEstimate:
    def test_identity_weighted_rv(self):
        path = simulate_path(ScenarioSpec(c0=0.04, x_jump_rate=5.0, seed=3), 1 / 2000)
        cfg = EstimatorConfig(trunc_scale=0.8)
        rep = run_estimate(path, "identity", cfg)
        inc = path.series.increments[:, 0]
        ref = weighted_rv(inc, rep.k_n, rep.config["u_n"])
        assert rep.a2_term == rep.a3_term == rep.jump_term == 0.0
        assert rep.debiased - rep.border == pytest.approx(ref, rel=1e-12)
        assert rep.truth == pytest.approx(0.04, rel=1e-12)

    def test_golden_quarticity(self):
        gold = json.loads((DATA / "fixture_golden.json").read_text())
        series = read_series_csv(DATA / "fixture_series.csv")
        cfg = EstimatorConfig(theta=gold["theta"], varpi=gold["varpi"], trunc_scale=gold["trunc_scale"])
        rep = run_estimate(series, "square", cfg)
        assert rep.k_n == gold["k_n"]
        assert rep.config["u_n"] == pytest.approx(gold["u_n"], rel=1e-12)
        assert rep.debiased == pytest.approx(gold["debiased"], rel=1e-12)
        assert rep.variance_est == pytest.approx(gold["variance_est"], rel=1e-12)

    def test_short_series(self):
        series = ObservedSeries(0.01, np.zeros((6, 1)))
        with pytest.raises(ConfigError):
            run_estimate(series, "square", NO_TRUNC)

    def test_config_echo(self):
        path = simulate_path(CONST, 1 / 1000)
        rep = run_estimate(path, "square")
        cfg = rep.config
        assert cfg["g"] == "square" and cfg["k_n"] == rep.k_n
        assert cfg["n_jump_detections"] == 0
        assert cfg["trunc_scale"] > 0 and math.isfinite(cfg["u_n"])
        json.loads(rep.to_json())

    def test_bad_varpi_names_inequality(self):
        path = simulate_path(CONST, 1 / 1000)
        with pytest.raises(ConfigError, match="varpi"):
            run_estimate(path, "square", EstimatorConfig(varpi=0.3))

    def test_rejects_other_sources(self):
        with pytest.raises(TypeError):
            run_estimate(np.zeros((10, 1)), "square")


class TestReplicationSeed:
    def test_distinct(self):
        seeds = {replication_seed(m, i) for m in range(5) for i in range(200)}
        assert len(seeds) == 1000

    def test_stable(self):
        assert replication_seed(42, 7) == replication_seed(42, 7)


class TestRunMC:
    def test_smoke(self):
        rep = run_mc(CONST, "square", NO_TRUNC, delta_n=1 / 1000, reps=2, seed=1)
        assert rep.replications == 2
        assert math.isfinite(rep.err_debiased_se) and math.isfinite(rep.err_raw_se)
        assert 0.0 <= rep.coverage[0.95] <= 1.0
        assert len(rep.rows) == 2
        assert set(MC_COLUMNS) <= set(rep.rows[0])

    def test_too_few_reps(self):
        with pytest.raises(ValueError):
            run_mc(CONST, "square", delta_n=1 / 1000, reps=1)

    def test_reproducible_bytes(self):
        kw = dict(delta_n=1 / 1000, reps=6, seed=5, levels=(0.9, 0.99))
        a = run_mc(CONST, "square", NO_TRUNC, **kw)
        b = run_mc(CONST, "square", NO_TRUNC, **kw)
        assert a.to_json() == b.to_json()

    def test_serial_equals_parallel(self):
        kw = dict(delta_n=1 / 1000, reps=8, seed=9)
        a = run_mc(CONST, "square", NO_TRUNC, workers=1, **kw)
        b = run_mc(CONST, "square", NO_TRUNC, workers=2, **kw)
        assert a.to_json() == b.to_json()

    def test_failure_names_replication(self):
        bad = ScenarioSpec(c0=0.04, horizon=0.004)
        with pytest.raises(VolfnError, match="replication 0"):
            run_mc(bad, "square", NO_TRUNC, delta_n=1 / 1000, reps=2)

    def test_coverage_monotone(self):
        rep = run_mc(CONST, "square", NO_TRUNC, delta_n=1 / 1000, reps=60, seed=2,
                     levels=(0.5, 0.8, 0.95, 0.99))
        covs = [rep.coverage[lv] for lv in (0.5, 0.8, 0.95, 0.99)]
        assert covs == sorted(covs)

    def test_se_definition(self):
        rep = run_mc(CONST, "square", NO_TRUNC, delta_n=1 / 1000, reps=20, seed=4)
        e = np.array([r["err_debiased_norm"] for r in rep.rows])
        assert rep.err_debiased_se == pytest.approx(e.std(ddof=1) / math.sqrt(20), rel=1e-12)
        assert rep.err_debiased_mean == pytest.approx(e.mean(), rel=1e-12)

    def test_csv(self, tmp_path):
        rep = run_mc(CONST, "square", NO_TRUNC, delta_n=1 / 1000, reps=3, levels=(0.95, 0.99))
        out = tmp_path / "mc.csv"
        write_mc_csv(rep, out)
        lines = out.read_text().splitlines()
        assert lines[0].split(",") == list(MC_COLUMNS) + ["covered_0.95", "covered_0.99"]
        assert len(lines) == 4

    @pytest.mark.slow
    def test_coverage_m500(self):
        rep = run_mc(CONST, "square", NO_TRUNC, delta_n=1 / 5000, reps=500, seed=11, workers=4)
        assert 0.91 <= rep.coverage[0.95] <= 0.98
        sd = math.sqrt(rep.studentized_var)
        assert abs(rep.studentized_mean) <= 3 * sd / math.sqrt(500)
