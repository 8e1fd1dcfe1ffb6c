# wienernet/tests/test_harness.py
"""
Tests for harness.py: setup, lambda rules, trials and the n_min search
"""
import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from wienernet.config import GraphSpec, ModelSpec, load_config
from wienernet.errors import SearchExhaustedError
from wienernet.graph import chain_graph, save_graph
from wienernet.harness import (
    build_graph,
    build_model,
    calibrate_kappa,
    calibrated_lambda,
    choose_lambda,
    compare_baselines,
    consistency_curve,
    decode_estimates,
    find_n_min,
    node_estimate,
    prepare,
    run_trial,
    run_trials,
    solver_options,
    success_interval,
    sweep_nmin_vs_p,
    trial_seed,
)
from wienernet.lds_sim import Regime, simulate
from wienernet.spectral import build_designs, default_frequency
from wienernet.theory import bound_N_min, lambda_lower


@pytest.fixture
def setup(small_config):
    return prepare(small_config)


class TestBuild:
    """Tests for graph and model construction from config sections"""

    @pytest.mark.parametrize("spec, nodes, edges", [
        (GraphSpec(kind="grid", rows=2, cols=3), 6, 7),
        (GraphSpec(kind="chain", size=5), 5, 4),
        (GraphSpec(kind="complete", size=4), 4, 6),
        (GraphSpec(kind="tree", size=6, seed=2), 6, 5),
    ])
    def test_graph_kinds(self, spec, nodes, edges):
        """Should build each graph family"""
        g = build_graph(spec)
        assert g.node_count == nodes
        assert len(g.edges) == edges

    def test_graph_from_file(self, tmp_path):
        """Should load an edge-list file"""
        path = tmp_path / "g.txt"
        save_graph(chain_graph(4), path)
        assert build_graph(GraphSpec(kind="file", edges_file=str(path))) == chain_graph(4)

    @pytest.mark.parametrize("rule", ["random", "uniform"])
    def test_model_radius(self, rule):
        """Should scale h to the target spectral radius"""
        g = chain_graph(4)
        model = build_model(ModelSpec(weight_rule=rule, target_radius=0.6), g)
        assert model.spectral_radius == pytest.approx(0.6)
        model.check_support(g)


class TestPrepare:
    """Tests for prepare()"""

    def test_configured_n(self, setup):
        """Should use the configured N and f = 2 pi / N"""
        assert setup.N == 32
        assert setup.frequency == pytest.approx(default_frequency(32))
        assert setup.constants.frequency == pytest.approx(setup.frequency)
        assert setup.p == 2
        assert setup.regime == Regime.RESTART_RECORD

    def test_default_n_from_bound(self, small_config):
        """Should derive N from the bound at its own frequency"""
        setup = prepare(replace(small_config, N=None))
        assert setup.frequency == pytest.approx(default_frequency(setup.N))
        assert setup.N >= 1
        assert abs(bound_N_min(setup.constants) - setup.N) <= max(2, setup.N // 10)

    def test_default_config_decay_rate(self):
        """Should keep the default 3x3 grid's delta_inv at or below 0.7"""
        setup = prepare(load_config())
        assert setup.p == 8
        assert setup.constants.delta_inv <= 0.7
        assert setup.constants.delta_inv == pytest.approx(0.69 * (1 + 1e-6))

    def test_oracle_per_node(self, setup):
        """Should hold one design-scale oracle per node"""
        assert len(setup.oracle) == 3
        assert all(e.scale == "design" for e in setup.oracle)
        assert setup.oracle[1].coefficient(0) != 0


class TestLambdaRules:
    """Tests for choose_lambda"""

    def test_calibrated_formula(self):
        """Should evaluate kappa sqrt(log(p^2/eps) / (n L))"""
        assert calibrated_lambda(0.5, 8, 0.05, 100, 0.4) == pytest.approx(
            0.5 * math.sqrt(math.log(64 / 0.05) / 40))

    def test_fixed(self, small_config, setup):
        """Should return the fixed value"""
        config = replace(small_config, lambda_rule="fixed", lambda_value=0.02)
        assert choose_lambda(config, setup, 50) == 0.02

    def test_grid_defers_to_cv(self, small_config, setup):
        """Should return None for per-node cross-validation"""
        assert choose_lambda(replace(small_config, lambda_rule="grid"), setup, 50) is None

    def test_theorem_rules(self, small_config, setup):
        """Should use the regime named by the rule"""
        config = replace(small_config, lambda_rule="theorem_consecutive")
        expected = lambda_lower(setup.constants, 2, small_config.epsilon, Regime.CONSECUTIVE, 50)
        assert choose_lambda(config, setup, 50) == pytest.approx(expected)

    def test_calibrated_shrinks_with_n(self, small_config, setup):
        """Should decrease like 1/sqrt(n)"""
        small = choose_lambda(small_config, setup, 100)
        large = choose_lambda(small_config, setup, 400)
        assert small / large == pytest.approx(2.0)


class TestTrials:
    """Tests for run_trial and run_trials"""

    def test_trial_seed(self):
        """Should be deterministic and distinct per trial"""
        assert trial_seed(3, 0) == trial_seed(3, 0)
        assert len({trial_seed(3, t) for t in range(20)}) == 20
        assert trial_seed(3, 0) != trial_seed(4, 0)

    def test_oracle_trial(self, small_config, setup):
        """Should recover the chain exactly from the population filters"""
        report = run_trial(small_config, 10, seed=1, setup=setup, oracle=True)
        assert report.success
        assert report.recovered.E_hat == setup.graph.edges

    def test_trial_is_deterministic(self, small_config, setup):
        """Should repeat exactly for the same seed"""
        first = run_trial(small_config, 40, seed=5, setup=setup)
        second = run_trial(small_config, 40, seed=5, setup=setup)
        assert first.node_errors == second.node_errors
        assert first.recovered.E_hat == second.recovered.E_hat

    def test_trial_diagnostics(self, small_config, setup):
        """Should report lambda-condition and restricted-eigenvalue summaries"""
        report = run_trial(small_config, 60, seed=2, setup=setup)
        assert 0.0 <= report.diagnostics["lambda_condition_rate"] <= 1.0
        assert report.diagnostics["kappa_hat_min"] > 0
        assert len(report.node_errors) == 3
        assert all(lam > 0 for lam in report.lambdas)

    def test_single_batch_helpers(self, small_config, setup):
        """Should decode oracle filters exactly and solve one node at a fixed lambda"""
        assert decode_estimates(small_config, setup, setup.oracle).E_hat == setup.graph.edges
        options = solver_options(small_config)
        assert options.tol == small_config.solver.tol
        batch = simulate(setup.model, setup.graph, setup.regime, 40, setup.N, seed=3)
        designs = build_designs(batch, setup.frequency)
        estimate = node_estimate(small_config, setup, designs[0], 0.01, options, seed=3)
        assert estimate.node == 0
        assert estimate.lam == 0.01

    def test_no_bound_violations(self, small_config, setup):
        """Should never break the error bound on nodes where the lambda condition holds"""
        reports = run_trials(replace(small_config, trials=5), 400, setup)
        assert sum(r.diagnostics["bound_violations"] for r in reports) == 0
        assert all(0.0 <= r.diagnostics["lambda_condition_rate"] <= 1.0 for r in reports)

    def test_workers_match_serial(self, small_config, setup):
        """Should give identical results on a thread pool"""
        serial = run_trials(small_config, 30, setup, diagnostics=False)
        threaded = run_trials(replace(small_config, workers=2), 30, setup, diagnostics=False)
        assert [r.node_errors for r in serial] == [r.node_errors for r in threaded]
        assert [r.seed for r in serial] == [r.seed for r in threaded]


class TestNMinSearch:
    """Tests for find_n_min and success_interval"""

    def test_oracle_succeeds_immediately(self, small_config, setup):
        """Should stop at search_start when every trial succeeds"""
        result = find_n_min(small_config, setup=setup, oracle=True)
        assert result.n_min == 1
        assert result.curve == {1: 3}
        assert result.required == 3

    def test_exhausted(self, small_config, setup, mocker):
        """Should raise SearchExhaustedError with the partial curve"""
        mocker.patch("wienernet.harness.run_trials", return_value=[])
        config = replace(small_config, search_start=4, search_stop=16)
        with pytest.raises(SearchExhaustedError) as exc_info:
            find_n_min(config, setup=setup)
        assert sorted(exc_info.value.curve) == [4, 8, 16]

    def test_bisection(self, small_config, setup, mocker):
        """Should return the smallest passing n between doublings"""
        class Report:
            def __init__(self, ok):
                self.success = ok

        def fake(config, n, setup, oracle=False, diagnostics=True, trials=None):
            return [Report(n >= 11) for _ in range(config.trials)]

        mocker.patch("wienernet.harness.run_trials", side_effect=fake)
        result = find_n_min(small_config, setup=setup)
        assert result.n_min == 11

    def test_all_successes_interval(self):
        """Should give the one-sided Clopper-Pearson bound for 45/45"""
        lower, upper = success_interval(45, 45)
        assert lower == pytest.approx(0.025 ** (1 / 45))
        assert upper == 1.0

    def test_interval_contains_rate(self):
        """Should bracket the observed rate"""
        lower, upper = success_interval(20, 45)
        assert lower < 20 / 45 < upper

    def test_interval_rejects_bad_counts(self):
        """Should reject successes > trials"""
        with pytest.raises(ValueError):
            success_interval(5, 3)


class TestComparisons:
    """Tests for baselines, calibration and the consistency curve"""

    def test_compare_baselines(self, small_config, setup):
        """Should tabulate mean errors per n for every method"""
        frame = compare_baselines(small_config, [40, 80], trials=2, setup=setup)
        assert list(frame.columns) == ["n", "regularized", "unregularized", "cig", "cig_singular", "trials"]
        assert list(frame["n"]) == [40, 80]
        assert (frame["regularized"] >= 0).all()
        assert (frame["trials"] == 2).all()
        assert frame["cig_singular"].between(0, 2).all()
        assert (frame[["unregularized", "cig"]].fillna(0) >= 0).all().all()

    def test_calibrate_kappa(self, small_config, setup):
        """Should pick a kappa from the grid"""
        best, frame = calibrate_kappa(small_config, 40, kappa_grid=(0.1, 1.0), trials=2, setup=setup)
        assert best in (0.1, 1.0)
        assert list(frame["kappa_cal"]) == [0.1, 1.0]
        assert frame["successes"].between(0, 2).all()

    def test_sweep_fits_log_p(self, small_config, mocker):
        """Should fit n_min = a + b log p and skip exhausted sizes"""
        def fake(config, verbose=False):
            p = config.graph.rows * config.graph.cols - 1
            if p > 10:
                raise SearchExhaustedError(message="no n", curve={})
            return SimpleNamespace(n_min=5.0 + 10.0 * math.log(p))

        mocker.patch("wienernet.harness.find_n_min", side_effect=fake)
        frame, (a, b) = sweep_nmin_vs_p(small_config, [(2, 2), (2, 3), (3, 3), (4, 4)])
        assert list(frame["p"]) == [3, 5, 8, 15]
        assert math.isnan(frame["n_min"].iloc[3])
        assert a == pytest.approx(5.0)
        assert b == pytest.approx(10.0)

    def test_consistency_curve(self, small_config, setup):
        """Should report a decreasing error and a negative slope"""
        config = replace(small_config, lambda_rule="calibrated", kappa_cal=0.2)
        frame, slope = consistency_curve(config, [50, 800], seeds=3, setup=setup)
        assert frame["mean_error"].iloc[1] < frame["mean_error"].iloc[0]
        assert slope < 0
        assert np.isfinite(slope)
