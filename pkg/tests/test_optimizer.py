import math

import numpy as np
import pytest
from scipy import integrate, stats

from sharpsearch.objectives import make_synthetic, materialize
from sharpsearch.optimizer import (
    Acquisition,
    ExhaustedSpaceError,
    LoopConfig,
    RunLog,
    expected_improvement,
    poi,
    propose_next,
    run_bayesian,
    run_grid,
    run_random,
    ucb,
)
from sharpsearch.space import CardinalityError, HyperparameterSpec, SearchSpace, parse_space
from sharpsearch.surrogate import KernelParams, fit, predict, tune_kernel


def ei_quadrature(mean, sigma, best, xi=0.0):
    if sigma == 0:
        return max(mean - best - xi, 0.0)
    f = lambda x: (x - best - xi) * stats.norm.pdf(x, mean, sigma)
    lo = best + xi
    return integrate.quad(f, lo, max(lo, mean) + 12 * sigma)[0]


class TestAcquisitions:
    def test_ei_no_improvement_possible(self):
        assert expected_improvement(0.3, 0.0, 0.5) == 0.0
        assert expected_improvement(0.5, 0.0, 0.5) == 0.0

    def test_ei_zero_sigma_positive(self):
        assert expected_improvement(0.7, 0.0, 0.5) == pytest.approx(0.2)

    def test_ei_at_best(self):
        assert expected_improvement(0.4, 1.0, 0.4) == pytest.approx(0.3989422804, abs=1e-10)

    @pytest.mark.parametrize("mean,sigma,best,xi", [
        (0.2, 0.5, 0.3, 0.0), (0.9, 0.1, 0.3, 0.0), (0.0, 2.0, 1.0, 0.01),
        (0.5, 0.05, 0.52, 0.01), (-1.0, 0.3, 0.0, 0.0),
    ])
    def test_ei_quadrature_oracle(self, mean, sigma, best, xi):
        got = expected_improvement(mean, sigma**2, best, xi)
        assert got == pytest.approx(ei_quadrature(mean, sigma, best, xi), abs=1e-8)

    def test_ei_vectorized_non_negative(self):
        rng = np.random.default_rng(0)
        m, v = rng.normal(size=500), rng.random(500) * (rng.random(500) > 0.2)
        ei = expected_improvement(m, v, 0.3, 0.01)
        assert ei.shape == (500,) and ei.min() >= 0

    def test_ucb(self):
        assert ucb(0.5, 0.04, 0.0) == 0.5
        assert ucb(0.5, 0.04, 2.0) == pytest.approx(0.9)

    def test_poi(self):
        assert poi(0.5, 0.1, 0.5) == pytest.approx(0.5)
        assert poi(0.6, 0.0, 0.5) == 1.0
        assert poi(0.5, 0.0, 0.5) == 0.0
        assert poi(0.2, 0.09, 0.5) == pytest.approx(stats.norm.cdf(-1.0))

    def test_acquisition_validation(self):
        with pytest.raises(ValueError):
            Acquisition("nope")
        with pytest.raises(ValueError):
            Acquisition("ei", -1.0)
        assert Acquisition.parse("ucb").param == 2.0
        assert Acquisition.parse("ei").param == 0.01


def fitted_on(space, bench, seed, n_obs=6, standardize=True, scale=1.0):
    rng = np.random.default_rng(seed)
    configs = []
    while len(configs) < n_obs:
        c = space.sample_uniform(rng)
        if c not in configs:
            configs.append(c)
    X = np.stack([space.encode(c) for c in configs])
    y = np.array([bench(c) for c in configs]) * scale
    params = tune_kernel((X, y), standardize=standardize)
    return fit((X, y), params, standardize=standardize), configs


class TestProposeNext:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_exhaustive_scan(self, table1, seed):
        bench = materialize(make_synthetic(table1, seed))
        model, seen = fitted_on(table1, bench, seed)
        acq = Acquisition("ei", 0.01)
        got = propose_next(model, table1, acq, seen, np.random.default_rng(seed))
        # oracle: score each unevaluated configuration one at a time, in enumeration order
        best_val, best_cfg = -math.inf, None
        incumbent = float(model.y.max())
        for c in table1.enumerate(256):
            if c in seen:
                continue
            m, v = predict(model, table1.encode(c))
            s = expected_improvement(m, v, incumbent, 0.01)
            if s > best_val:
                best_val, best_cfg = s, c
        assert got == best_cfg

    def test_forced_choice(self):
        space = parse_space("a categorical x, y\n")
        model = fit((np.array([[1.0, 0.0]]), [1.0]), KernelParams())
        assert propose_next(model, space, Acquisition(), [space.config(a="x")],
                            np.random.default_rng(0)) == space.config(a="y")

    def test_exhausted(self):
        space = parse_space("a categorical x, y\n")
        model = fit((np.eye(2), [1.0, 0.0]), KernelParams())
        with pytest.raises(ExhaustedSpaceError):
            propose_next(model, space, Acquisition(), list(space.enumerate(2)), np.random.default_rng(0))

    @pytest.mark.parametrize("seed", range(5))
    def test_scaling_invariance(self, table1, seed):
        bench = materialize(make_synthetic(table1, seed))
        m1, seen = fitted_on(table1, bench, seed, standardize=False)
        y2 = m1.y * 7.5
        m2 = fit((m1.X, y2), tune_kernel((m1.X, y2), standardize=False), standardize=False)
        acq = Acquisition("ei", 0.0)
        a = propose_next(m1, table1, acq, seen, np.random.default_rng(0))
        b = propose_next(m2, table1, acq, seen, np.random.default_rng(0))
        assert a == b

    def test_large_space_candidates(self, table3):
        land = make_synthetic(table3, 0)
        model, seen = fitted_on(table3, land, 0, n_obs=4)
        cfg = propose_next(model, table3, Acquisition(), seen, np.random.default_rng(0), candidate_limit=256)
        assert table3.contains(cfg) and cfg not in seen

    def test_no_model_uniform_unevaluated(self, table1):
        seen = list(table1.enumerate(256))[:255]
        cfg = propose_next(None, table1, Acquisition(), seen, np.random.default_rng(0))
        assert cfg == list(table1.enumerate(256))[255]


class TestBayesianLoop:
    def test_fifteen_records_phases(self, table1):
        bench = materialize(make_synthetic(table1, 1))
        log = run_bayesian(table1, bench, LoopConfig(n_iter=15, seed=4))
        assert len(log) == 15
        assert [r.phase for r in log] == ["init", "init"] + ["bayes"] * 13
        assert [r.iteration for r in log] == list(range(1, 16))
        assert len(set(log.configs())) == 15

    def test_full_budget_covers_space(self):
        space = parse_space("a numeric 1, 2, 3\nb categorical p, q, r\n")
        land = make_synthetic(space, 3)
        log = run_bayesian(space, land, LoopConfig(n_iter=9, seed=0))
        assert set(log.configs()) == set(space.enumerate(9))

    def test_budget_exceeds_space(self):
        space = parse_space("a numeric 1, 2\n")
        with pytest.raises(ExhaustedSpaceError):
            run_bayesian(space, lambda c: 0.0, LoopConfig(n_iter=3, n_init=1))

    @pytest.mark.parametrize("acq", ["ei", "ucb", "poi"])
    def test_deterministic(self, table1, acq):
        land = make_synthetic(table1, 2)
        loop = LoopConfig(n_iter=10, seed=11, acquisition=Acquisition.parse(acq))
        a = [(r.config, r.value) for r in run_bayesian(table1, land, loop)]
        b = [(r.config, r.value) for r in run_bayesian(table1, land, loop)]
        assert a == b

    def test_failures_recorded_not_fatal(self, table1):
        def flaky(cfg):
            if cfg["lr"] == 1.0:
                raise RuntimeError("diverged")
            return 0.5

        log = run_bayesian(table1, flaky, LoopConfig(n_iter=12, seed=0))
        assert len(log) == 12
        for r in log:
            assert (r.status == "failed") == (r.config["lr"] == 1.0)
            if r.failed:
                assert r.value == 0.0

    def test_nan_objective_is_failure(self, table1):
        log = run_bayesian(table1, lambda c: float("nan"), LoopConfig(n_iter=4, seed=0))
        assert all(r.failed and r.value == 0.0 for r in log)

    def test_best_so_far_monotone(self, table1):
        log = run_bayesian(table1, make_synthetic(table1, 5, noise_std=0.05), LoopConfig(n_iter=15, seed=1))
        assert np.all(np.diff(log.best_so_far()) >= 0)

    def test_loop_config_validation(self):
        with pytest.raises(ValueError):
            LoopConfig(n_iter=1, n_init=2)
        with pytest.raises(ValueError):
            LoopConfig(n_init=0)


class TestGrid:
    def test_exact_maximum(self, table1):
        bench = materialize(make_synthetic(table1, 8))
        log = run_grid(table1, bench)
        assert len(log) == 256 and {r.phase for r in log} == {"grid"}
        assert log.best().value == max(bench.table.values())
        assert log.configs() == list(table1.enumerate(256))

    def test_threads_preserve_order(self, table1, monkeypatch):
        bench = materialize(make_synthetic(table1, 8))
        serial = run_grid(table1, bench, threads=1)
        monkeypatch.setenv("SHARPSEARCH_THREADS", "4")
        threaded = run_grid(table1, bench)
        assert [(r.config, r.value) for r in serial] == [(r.config, r.value) for r in threaded]

    def test_single_configuration(self):
        space = SearchSpace([HyperparameterSpec.numeric("a", [1])])
        assert len(run_grid(space, lambda c: 0.3)) == 1

    def test_limit(self, table3):
        with pytest.raises(CardinalityError):
            run_grid(table3, lambda c: 0.0)


def test_random_baseline(table1):
    log = run_random(table1, lambda c: 0.1, 15, seed=3)
    assert len(set(log.configs())) == 15 and {r.phase for r in log} == {"random"}


class TestRunLog:
    def test_roundtrip(self, table1, tmp_path):
        log = run_bayesian(table1, make_synthetic(table1, 0), LoopConfig(n_iter=6, seed=0))
        path = tmp_path / "runlog.tsv"
        log.write(path)
        back = RunLog.read(path, table1)
        assert [(r.iteration, r.phase, r.config, r.value, r.seed, r.status) for r in back] == \
               [(r.iteration, r.phase, r.config, r.value, r.seed, r.status) for r in log]

    def test_best_earliest_tie(self, table1):
        log = RunLog()
        cfgs = list(table1.enumerate(256))[:3]
        for c, v in zip(cfgs, [0.2, 0.9, 0.9]):
            log.append("grid", c, v, 0)
        assert log.best().iteration == 2

    def test_rejects_gap(self):
        text = "1\tinit\ta=1\t0.5\t0\t0.0\n3\tbayes\ta=2\t0.6\t0\t0.0\n"
        with pytest.raises(ValueError, match=":2:"):
            RunLog.from_text(text)

    def test_rejects_bad_phase(self, table1):
        with pytest.raises(ValueError):
            RunLog().append("warmup", table1.config(dict(next(iter(table1.enumerate(1))))), 0.1, 0)

    def test_shipped_logs_parse(self, data_dir, table1, table3):
        t2 = RunLog.read(data_dir / "table2_runlog.tsv", table1)
        assert len(t2) == 15
        assert [r.phase for r in t2][:3] == ["init", "init", "bayes"]
        assert t2.best().iteration == 12
        t6 = RunLog.read(data_dir / "table6_runlog.tsv", table3)
        assert len(t6) == 9
