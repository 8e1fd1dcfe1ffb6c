"""
harness.py - End-to-end recovery trials, n_min search and baseline comparisons

One trial:
    simulate -> DFT designs for every node -> regularized Wiener filter per
    node -> threshold (tau1 = tau2 = m) -> score against the true edge set

Trials are seeded from (master seed, trial index) and run on a thread pool;
results are identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from wienernet import icons as console
from wienernet.config import ExperimentConfig, GraphSpec, ModelSpec
from wienernet.errors import (
    SearchExhaustedError,
    SpectrumError,
    TrialError,
    WienerNetError,
)
from wienernet.estimator import (
    DESIGN,
    RecoveryResult,
    SolverOptions,
    WienerEstimate,
    cig_baseline,
    cross_validate_lambda,
    estimate_to_design_scale,
    exact_wiener,
    largest_gap_threshold,
    solve_regularized_wiener,
    threshold_topology,
    unregularized_wiener,
)
from wienernet.graph import (
    Graph,
    chain_graph,
    complete_graph,
    grid_graph,
    load_graph,
    random_tree,
)
from wienernet.lds_sim import LdsModel, Regime, parse_regime, random_model, simulate, uniform_model
from wienernet.spectral import (
    SpectralDesign,
    analytic_psd,
    default_frequency,
    design_from_dft,
    dft_matrix,
    empirical_psd,
    normalize_model,
)
from wienernet.theory import (
    ModelConstants,
    bound_N_min,
    check_reference_N,
    compute_constants,
    diagnose_lambda_condition,
    diagnose_restricted_eigenvalue,
    lambda_lower,
    prop_error_bound,
)

N_FIXED_POINT_ROUNDS = 5
KAPPA_TRIALS = 20


# ============================================================================
# Experiment setup
# ============================================================================

def build_graph(spec: GraphSpec) -> Graph:
    if spec.kind == "grid":
        return grid_graph(spec.rows, spec.cols)
    if spec.kind == "chain":
        return chain_graph(spec.size)
    if spec.kind == "complete":
        return complete_graph(spec.size)
    if spec.kind == "tree":
        return random_tree(spec.size, spec.seed)
    return load_graph(Path(spec.edges_file))


def build_model(spec: ModelSpec, graph: Graph) -> LdsModel:
    if spec.weight_rule == "uniform":
        return uniform_model(
            graph, weight=spec.weight_high, self_weight=spec.self_weight,
            target_radius=spec.target_radius, ma_coeffs=spec.ma_coeffs,
            gain=spec.gain, gain_jitter=spec.gain_jitter, seed=spec.seed,
        )
    return random_model(
        graph, spec.seed, weight_low=spec.weight_low, weight_high=spec.weight_high,
        self_weight=spec.self_weight, target_radius=spec.target_radius,
        ma_coeffs=spec.ma_coeffs, gain=spec.gain, gain_jitter=spec.gain_jitter,
    )


@dataclass(frozen=True)
class ExperimentSetup:
    """Ground truth shared by every trial of an experiment."""
    graph: Graph
    model: LdsModel
    constants: ModelConstants
    N: int
    frequency: float
    regime: Regime
    oracle: Tuple[WienerEstimate, ...]
    raw_oracle: Tuple[WienerEstimate, ...]

    @property
    def p(self) -> int:
        return self.graph.node_count - 1


def oracle_estimates(model: LdsModel, graph: Graph, f: float) -> List[WienerEstimate]:
    """
    Exact Wiener filters of the normalized model, tagged with the design
    scale (the population limit of column-normalized designs).
    """
    psd = analytic_psd(normalize_model(model, f), f)
    return [replace(exact_wiener(psd, i), scale=DESIGN) for i in range(graph.node_count)]


def prepare(config: ExperimentConfig, verbose: bool = False) -> ExperimentSetup:
    """
    Build graph, model and constants. Without a configured N, N is the
    N_min bound iterated to a fixed point (the constants depend on the
    analysis frequency 2*pi/N).
    """
    graph = build_graph(config.graph)
    model = build_model(config.model, graph)
    regime = parse_regime(config.regime)

    if config.N is not None:
        N = config.N
        f = config.frequency if config.frequency is not None else default_frequency(N)
        constants = compute_constants(model, graph, f, config.min_decay_rate)
    else:
        N = 64
        for _ in range(N_FIXED_POINT_ROUNDS):
            f = config.frequency if config.frequency is not None else default_frequency(N)
            constants = compute_constants(model, graph, f, config.min_decay_rate)
            following = bound_N_min(constants)
            if following == N:
                break
            N = following
        f = config.frequency if config.frequency is not None else default_frequency(N)
        constants = compute_constants(model, graph, f, config.min_decay_rate)

    if config.reference_N is not None:
        check_reference_N(constants, config.reference_N, verbose=verbose)

    raw_psd = analytic_psd(model, f)
    if verbose:
        print(console.log_info(
            f"p={graph.p}, |E|={len(graph.edges)}, N={N}, f={f:.5f}, "
            f"L={constants.L:.4g}, U={constants.U:.4g}, C={constants.C:.4g}, "
            f"delta_inv={constants.delta_inv:.4g}, d={constants.d}, m={constants.m:.4g}",
            prefix="harness",
        ))

    return ExperimentSetup(
        graph=graph, model=model, constants=constants, N=N, frequency=f,
        regime=regime, oracle=tuple(oracle_estimates(model, graph, f)),
        raw_oracle=tuple(exact_wiener(raw_psd, i) for i in range(graph.node_count)),
    )


# ============================================================================
# Lambda and threshold rules
# ============================================================================

def calibrated_lambda(kappa_cal: float, p: int, epsilon: float, n: int, L: float) -> float:
    """kappa_cal * sqrt(log(p^2 / epsilon) / (n L))."""
    return kappa_cal * math.sqrt(math.log(max(p, 1) ** 2 / epsilon) / (n * L))


def choose_lambda(config: ExperimentConfig, setup: ExperimentSetup, n: int) -> Optional[float]:
    """Graph-wide lambda for the configured rule; None means per-node CV ('grid')."""
    rule = config.lambda_rule
    if rule == "fixed":
        return float(config.lambda_value)
    if rule == "calibrated":
        return calibrated_lambda(config.kappa_cal, setup.p, config.epsilon, n, setup.constants.L)
    if rule == "grid":
        return None
    if rule == "theorem_iid":
        regime = Regime.RESTART_RECORD
    elif rule == "theorem_consecutive":
        regime = Regime.CONSECUTIVE
    else:
        regime = setup.regime
    return lambda_lower(setup.constants, max(setup.p, 1), config.epsilon, regime, n)


def decode_estimates(
    config: ExperimentConfig, setup: ExperimentSetup, estimates: Sequence[WienerEstimate]
) -> RecoveryResult:
    """Threshold per-node filters with the configured rule (tau1 = tau2 = m unless 'gap')"""
    if config.threshold_rule == "gap":
        scores = threshold_topology(estimates, 0.0, 0.0).scores.values()
        tau1 = largest_gap_threshold([s[0] for s in scores])
        tau2 = largest_gap_threshold([s[1] for s in scores])
        return threshold_topology(estimates, tau1, tau2)
    m = setup.constants.m
    return threshold_topology(estimates, m, m)


def trial_seed(master: int, trial: int) -> int:
    return int(np.random.SeedSequence(int(master), spawn_key=(int(trial),)).generate_state(1, np.uint64)[0])


# ============================================================================
# Trials
# ============================================================================

@dataclass(frozen=True)
class TrialReport:
    seed: int
    n: int
    relative_error: int
    recovered: RecoveryResult
    node_errors: Tuple[float, ...]
    lambdas: Tuple[float, ...]
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.relative_error == 0


def _designs(setup: ExperimentSetup, n: int, seed: int) -> Tuple[np.ndarray, List[SpectralDesign]]:
    batch = simulate(setup.model, setup.graph, setup.regime, n, setup.N, seed)
    coeffs = dft_matrix(batch, setup.frequency)
    return coeffs, [design_from_dft(coeffs, i, setup.frequency) for i in range(setup.graph.node_count)]


def solver_options(config: ExperimentConfig) -> SolverOptions:
    """Solver settings from the config's solver section"""
    return SolverOptions(tol=config.solver.tol, max_iters=config.solver.max_iters,
                         power_iters=config.solver.power_iters)


def node_estimate(config, setup, design, lam, options, seed) -> WienerEstimate:
    """Solve one node; lam=None runs per-node cross-validation"""
    try:
        if lam is None:
            lam, _ = cross_validate_lambda(design, folds=min(5, design.n), seed=seed, options=options)
        return solve_regularized_wiener(design, lam, options)
    except WienerNetError as e:
        raise TrialError(
            message=f"Node {design.node + 1} failed in trial with seed {seed}",
            context={"node": design.node + 1, "n": design.n, "lambda": lam},
            cause=e,
        )


def run_trial(
    config: ExperimentConfig,
    n: int,
    seed: int,
    setup: Optional[ExperimentSetup] = None,
    oracle: bool = False,
    diagnostics: bool = True,
) -> TrialReport:
    setup = setup or prepare(config)
    if oracle:
        estimates = list(setup.oracle)
        result = decode_estimates(config, setup, estimates)
        return TrialReport(
            seed=seed, n=n, relative_error=result.relative_error(setup.graph), recovered=result,
            node_errors=tuple(0.0 for _ in estimates), lambdas=tuple(0.0 for _ in estimates),
            diagnostics={"oracle": True},
        )

    _, designs = _designs(setup, n, seed)
    options = solver_options(config)
    lam = choose_lambda(config, setup, n)
    estimates = [node_estimate(config, setup, d, lam, options, seed) for d in designs]
    result = decode_estimates(config, setup, estimates)

    node_errors, holds, kappas, violations = [], [], [], 0
    for design, estimate in zip(designs, estimates):
        truth = estimate_to_design_scale(setup.raw_oracle[design.node], design)
        error = float(np.linalg.norm(estimate.coefficients - truth.coefficients))
        node_errors.append(error)
        if not diagnostics:
            continue
        condition = diagnose_lambda_condition(design, truth, estimate.lam)
        kappa = diagnose_restricted_eigenvalue(design, truth, KAPPA_TRIALS, estimate=estimate, seed=seed)
        holds.append(condition.holds)
        kappas.append(kappa)
        if condition.holds and kappa > 0 and error > prop_error_bound(kappa, estimate.lam, setup.constants.d) * (1 + 1e-9):
            violations += 1

    summary: Dict[str, object] = {}
    if diagnostics:
        summary = {
            "lambda_condition_all": all(holds),
            "lambda_condition_rate": float(np.mean(holds)),
            "kappa_hat_min": float(min(kappas)),
            "bound_violations": violations,
        }
    return TrialReport(
        seed=seed, n=n, relative_error=result.relative_error(setup.graph), recovered=result,
        node_errors=tuple(node_errors), lambdas=tuple(e.lam for e in estimates), diagnostics=summary,
    )


def run_trials(
    config: ExperimentConfig,
    n: int,
    setup: ExperimentSetup,
    trials: Optional[int] = None,
    oracle: bool = False,
    diagnostics: bool = True,
) -> List[TrialReport]:
    count = config.trials if trials is None else trials
    seeds = [trial_seed(config.seed, t) for t in range(count)]

    def one(seed):
        return run_trial(config, n, seed, setup=setup, oracle=oracle, diagnostics=diagnostics)

    if config.workers > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]


# ============================================================================
# n_min search
# ============================================================================

@dataclass(frozen=True)
class NMinResult:
    n_min: int
    curve: Dict[int, int]
    trials: int
    required: int


def find_n_min(
    config: ExperimentConfig,
    setup: Optional[ExperimentSetup] = None,
    oracle: bool = False,
    verbose: bool = False,
) -> NMinResult:
    """
    Smallest n in [search_start, search_stop] whose trials all recover E
    (or at least required_successes of them): doubling, then bisection.
    """
    setup = setup or prepare(config, verbose=verbose)
    target = config.success_target
    curve: Dict[int, int] = {}

    def meets(n: int) -> bool:
        if n not in curve:
            reports = run_trials(config, n, setup, oracle=oracle, diagnostics=False)
            curve[n] = sum(r.success for r in reports)
            if verbose:
                print(console.log(console.status_icon(curve[n] >= target),
                                  f"n={n}: {curve[n]}/{config.trials} exact recoveries", prefix="nmin"))
        return curve[n] >= target

    lo = config.search_start
    if meets(lo):
        return NMinResult(n_min=lo, curve=dict(sorted(curve.items())), trials=config.trials, required=target)
    while True:
        hi = min(2 * lo, config.search_stop)
        if hi == lo:
            raise SearchExhaustedError(
                message=f"No n in [{config.search_start}, {config.search_stop}] reached {target}/{config.trials} successes",
                suggestion="Raise search_stop, increase N, or check the lambda rule (calibrate_kappa).",
                context={"curve": dict(sorted(curve.items()))},
                curve=dict(sorted(curve.items())),
            )
        if meets(hi):
            break
        lo = hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if meets(mid):
            hi = mid
        else:
            lo = mid
    return NMinResult(n_min=hi, curve=dict(sorted(curve.items())), trials=config.trials, required=target)


def success_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Clopper-Pearson interval for the per-trial success probability."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError(f"need 0 <= successes <= trials, trials >= 1 (got {successes}/{trials})")
    alpha = 1.0 - confidence
    lower = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
    upper = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return lower, upper


# ============================================================================
# Baselines, calibration and sweeps
# ============================================================================

def compare_baselines(
    config: ExperimentConfig,
    n_grid: Sequence[int],
    trials: Optional[int] = None,
    setup: Optional[ExperimentSetup] = None,
    verbose: bool = False,
) -> pd.DataFrame:
    """Mean relative error per n for the regularized filter, least squares and CIG."""
    setup = setup or prepare(config, verbose=verbose)
    count = config.trials if trials is None else trials
    options = solver_options(config)
    cig_threshold = setup.constants.m if config.cig_threshold is None else config.cig_threshold

    def one(n, seed):
        coeffs, designs = _designs(setup, n, seed)
        lam = choose_lambda(config, setup, n)
        regularized = [node_estimate(config, setup, d, lam, options, seed) for d in designs]
        plain = [unregularized_wiener(d) for d in designs]
        errors = [
            decode_estimates(config, setup, regularized).relative_error(setup.graph),
            decode_estimates(config, setup, plain).relative_error(setup.graph),
        ]
        try:
            cig = cig_baseline(empirical_psd(coeffs, setup.frequency), cig_threshold)
            errors.append(len(cig ^ setup.graph.edges))
        except SpectrumError:
            errors.append(math.nan)
        return errors

    rows = []
    for n in n_grid:
        seeds = [trial_seed(config.seed, t) for t in range(count)]
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                table = np.array(list(pool.map(lambda s: one(n, s), seeds)), dtype=float)
        else:
            table = np.array([one(n, s) for s in seeds], dtype=float)
        singular = int(np.isnan(table[:, 2]).sum())
        if singular and verbose:
            print(console.log_warning(f"n={n}: CIG estimate singular in {singular}/{count} trials", prefix="harness"))
        rows.append({
            "n": int(n),
            "regularized": float(table[:, 0].mean()),
            "unregularized": float(table[:, 1].mean()),
            "cig": float(np.nanmean(table[:, 2])) if singular < count else math.nan,
            "cig_singular": singular,
            "trials": count,
        })
    return pd.DataFrame(rows, columns=["n", "regularized", "unregularized", "cig", "cig_singular", "trials"])


def calibrate_kappa(
    config: ExperimentConfig,
    n: int,
    kappa_grid: Sequence[float] = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0),
    trials: Optional[int] = None,
    setup: Optional[ExperimentSetup] = None,
) -> Tuple[float, pd.DataFrame]:
    """
    Pilot grid for the calibrated rule: successes and mean relative error per
    kappa_cal at sample size n. Picks the most successes, then the lowest
    mean error, then the smallest kappa.
    """
    setup = setup or prepare(config)
    rows = []
    for kappa in kappa_grid:
        trial_config = replace(config, lambda_rule="calibrated", kappa_cal=float(kappa))
        reports = run_trials(trial_config, n, setup, trials=trials, diagnostics=False)
        rows.append({
            "kappa_cal": float(kappa),
            "successes": sum(r.success for r in reports),
            "mean_relative_error": float(np.mean([r.relative_error for r in reports])),
        })
    frame = pd.DataFrame(rows)
    best = frame.sort_values(["successes", "mean_relative_error", "kappa_cal"],
                             ascending=[False, True, True]).iloc[0]
    return float(best["kappa_cal"]), frame


def sweep_nmin_vs_p(
    config: ExperimentConfig,
    sizes: Sequence[Tuple[int, int]],
    verbose: bool = False,
) -> Tuple[pd.DataFrame, Tuple[float, float]]:
    """
    n_min for grids of the given (rows, cols) and the least-squares line
    n_min ~ a + b log p over sizes where the search succeeded.
    """
    rows = []
    for r, c in sizes:
        grid_config = replace(config, graph=replace(config.graph, kind="grid", rows=r, cols=c))
        p = r * c - 1
        try:
            n_min = find_n_min(grid_config, verbose=verbose).n_min
        except SearchExhaustedError:
            n_min = math.nan
            if verbose:
                print(console.log_warning(f"{r}x{c} grid: search exhausted", prefix="harness"))
        rows.append({"rows": r, "cols": c, "p": p, "log_p": math.log(p) if p > 0 else math.nan, "n_min": n_min})
    frame = pd.DataFrame(rows, columns=["rows", "cols", "p", "log_p", "n_min"])

    usable = frame.dropna()
    if len(usable) >= 2:
        design = np.column_stack([np.ones(len(usable)), usable["log_p"].to_numpy()])
        (a, b), *_ = np.linalg.lstsq(design, usable["n_min"].to_numpy(dtype=float), rcond=None)
        fit = (float(a), float(b))
    else:
        fit = (math.nan, math.nan)
    return frame, fit


def consistency_curve(
    config: ExperimentConfig,
    n_values: Sequence[int],
    seeds: int = 10,
    setup: Optional[ExperimentSetup] = None,
) -> Tuple[pd.DataFrame, float]:
    """Mean ||W_hat_i - W_i||_2 over nodes and seeds per n, plus its log-log slope."""
    setup = setup or prepare(config)
    rows = []
    for n in n_values:
        reports = run_trials(config, n, setup, trials=seeds, diagnostics=False)
        rows.append({"n": int(n), "mean_error": float(np.mean([np.mean(r.node_errors) for r in reports]))})
    frame = pd.DataFrame(rows, columns=["n", "mean_error"])
    if len(frame) < 2:
        return frame, math.nan
    slope = np.polyfit(np.log(frame["n"].to_numpy(dtype=float)), np.log(frame["mean_error"].to_numpy()), 1)[0]
    return frame, float(slope)
