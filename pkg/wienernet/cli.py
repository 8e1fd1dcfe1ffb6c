# cli.py - Command-line interface for wienernet
"""
wienernet CLI - topology recovery experiments for networked linear systems

COMMANDS:
    Data:
        wienernet simulate --n N              Simulate a trajectory batch
        wienernet recover [--batch FILE]      Recover the topology from one batch

    Experiments:
        wienernet nmin [--sizes 2x2,3x3]      Search n_min (45/45 exact recoveries)
        wienernet compare --n-grid 64,256     Regularized vs unregularized vs CIG
        wienernet calibrate --n N             Pilot grid for the calibrated lambda rule

    Theory:
        wienernet bounds [--reference-N 2900] Model constants and sufficient conditions
        wienernet diagnose --n N              Lambda condition, restricted eigenvalue, PSD gap

    Other:
        wienernet init [--out FILE]           Write a config template
        wienernet version                     Show version information

EXIT CODES:
    0 success, 2 theorem conditions infeasible, 1 any other error

EXAMPLES:
    # Desk-scale n_min search on a 3x3 grid
    wienernet nmin --config grid3.yaml --out results/grid3

    # Bounds for both regimes at epsilon = 0.05
    wienernet bounds --epsilon 0.05 --reference-N 2900
"""

import functools
import sys
from pathlib import Path
from typing import Callable, Dict, List, Tuple

import click
import numpy as np
import pandas as pd

from wienernet import __version__
from wienernet import icons as console
from wienernet.config import ExperimentConfig, create_config_template, load_config, parse_lambda_rule
from wienernet.errors import ConfigurationError, SearchExhaustedError, TheoremConstraintError, WienerNetError
from wienernet.estimator import export_scores_csv
from wienernet.graph import save_graph
from wienernet.harness import (
    ExperimentSetup,
    calibrate_kappa,
    choose_lambda,
    compare_baselines,
    consistency_curve,
    decode_estimates,
    find_n_min,
    node_estimate,
    prepare,
    run_trials,
    solver_options,
    success_interval,
    sweep_nmin_vs_p,
)
from wienernet.lds_sim import (
    Regime,
    TrajectoryBatch,
    export_batch_csv,
    load_batch,
    parse_regime,
    save_batch,
    simulate,
)
from wienernet.report import RunResults, emit_report
from wienernet.spectral import build_designs
from wienernet.theory import TheoryBounds, bound_lambda_and_n, check_reference_N, diagnose_psd_gap

EXIT_INFEASIBLE = 2

THEOREM_RULE_REGIMES = {"theorem_iid": Regime.RESTART_RECORD, "theorem_consecutive": Regime.CONSECUTIVE}


class InfeasibleTheorem(Exception):
    """Raised inside a command once results are written but the theorem regime is infeasible"""


# ============================================================================
# Shared options & error handling
# ============================================================================

def experiment_options(fn: Callable) -> Callable:
    """Options every experiment command accepts (highest config priority)."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     help="YAML/JSON experiment config"),
        click.option("--regime", type=click.Choice(["iid", "consecutive"]), help="Recording regime"),
        click.option("--epsilon", type=float, help="Failure probability in (0, 0.5)"),
        click.option("--trials", type=int, help="Trials per n"),
        click.option("--seed", type=int, help="Master seed"),
        click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory"),
        click.option("--lambda-rule", help="theorem | theorem_iid | theorem_consecutive | calibrated | grid | fixed:<v>"),
        click.option("--N", "samples", type=int, help="Samples per trajectory (default: N_min bound)"),
        click.option("--workers", type=int, help="Parallel trial workers"),
        click.option("--verbose", "-v", is_flag=True, help="Narrate each stage"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers) -> ExperimentConfig:
    overrides: Dict[str, object] = {
        "regime": regime,
        "epsilon": epsilon,
        "trials": trials,
        "seed": seed,
        "out": out,
        "N": samples,
        "workers": workers,
    }
    if lambda_rule:
        rule, value = parse_lambda_rule(lambda_rule)
        overrides["lambda_rule"] = rule
        overrides["lambda_value"] = value
    return load_config(config_path, overrides)


def handles_errors(fn: Callable) -> Callable:
    """Map wienernet errors onto exit codes: 2 infeasible theorem, 1 otherwise."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InfeasibleTheorem as e:
            click.echo(console.log_warning(str(e), prefix="theory"), err=True)
            sys.exit(EXIT_INFEASIBLE)
        except TheoremConstraintError as e:
            click.echo(str(e), err=True)
            sys.exit(EXIT_INFEASIBLE)
        except WienerNetError as e:
            click.echo(str(e), err=True)
            sys.exit(1)
    return wrapper


def _theorem_bounds(config: ExperimentConfig, setup: ExperimentSetup) -> Tuple[List[TheoryBounds], Dict[str, str]]:
    """Bounds for the regime the lambda rule uses; only theorem rules require them."""
    regime = THEOREM_RULE_REGIMES.get(config.lambda_rule, setup.regime)
    c, c_prime = config.universal_constants
    try:
        return [bound_lambda_and_n(setup.constants, max(setup.p, 1), config.epsilon, regime, c, c_prime)], {}
    except TheoremConstraintError as e:
        if config.lambda_rule.startswith("theorem"):
            raise
        return [], {"theorem_bounds": f"not applicable: {e.message}"}


def _check_theorem(config: ExperimentConfig, bounds: List[TheoryBounds]) -> None:
    if not config.lambda_rule.startswith("theorem"):
        return
    infeasible = [b for b in bounds if not b.feasible]
    if infeasible:
        b = infeasible[0]
        raise InfeasibleTheorem(
            f"{b.regime.value}: lambda_lo={b.lambda_lo:.4g} exceeds lambda_hi={b.lambda_hi:.4g} at n_min={b.n_min}"
        )


def _emit(results: RunResults, out: Path) -> None:
    paths = emit_report(results, out)
    click.echo(console.log_success(f"Wrote {len(paths)} file(s) to {out}", prefix=results.command))


def _number_list(text: str, option: str, kind: Callable = int) -> list:
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(
            message=f"{option} expects comma-separated {kind.__name__} values, got {text!r}",
            suggestion=f"Example: {option} {'64,256,1024' if kind is int else '0.1,0.5,1'}",
            cause=e,
        )


def _grid_sizes(text: str) -> List[Tuple[int, int]]:
    dims = []
    for item in (s.strip() for s in text.split(",") if s.strip()):
        parts = item.lower().split("x")
        try:
            rows, cols = (int(v) for v in parts)
        except ValueError as e:
            raise ConfigurationError(
                message=f"--sizes entry {item!r} is not ROWSxCOLS",
                suggestion="Example: --sizes 2x2,2x3,3x3",
                cause=e,
            )
        dims.append((rows, cols))
    return dims


def _check_batch(config: ExperimentConfig, batch: TrajectoryBatch) -> None:
    """Align N with the batch and refuse a batch recorded under another regime."""
    if config.N is None:
        config.N = batch.N
    elif config.N != batch.N:
        raise ConfigurationError(
            message=f"Batch has N={batch.N} samples per trajectory, configured N is {config.N}",
            suggestion=f"Pass --N {batch.N} or use the config that produced the batch.",
        )
    if parse_regime(config.regime) is not batch.regime:
        flag = "iid" if batch.regime is Regime.RESTART_RECORD else "consecutive"
        raise ConfigurationError(
            message=f"Batch was recorded as {batch.regime.value}, configured regime is {config.regime}",
            suggestion=f"Pass --regime {flag} or use the config that produced the batch.",
        )


# ============================================================================
# Command group
# ============================================================================

@click.group()
@click.option("--ascii", "ascii_only", is_flag=True, help="ASCII-only console icons")
def cli(ascii_only: bool):
    """
    wienernet - learn the topology of a networked linear system from
    nodal time series with a regularized Wiener filter.
    """
    if ascii_only:
        console.use_ascii_icons()


# ============================================================================
# Data Commands
# ============================================================================

@cli.command("simulate")
@experiment_options
@click.option("--n", "n", type=int, required=True, help="Number of trajectories")
@click.option("--csv", "as_csv", is_flag=True, help="Also write the batch as long-format CSV")
@handles_errors
def simulate_cmd(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers, verbose, n, as_csv):
    """
    Simulate n trajectories and write batch.wtb plus the graph edge list

    Examples:
        wienernet simulate --n 1000 --N 128 --out runs/a
        wienernet simulate --n 64 --regime consecutive --csv
    """
    config = _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers)
    if verbose:
        console.fence("Simulating trajectories")
    setup = prepare(config, verbose=verbose)
    batch = simulate(setup.model, setup.graph, setup.regime, n, setup.N, config.seed, workers=config.workers)

    config.out.mkdir(parents=True, exist_ok=True)
    save_batch(batch, config.out / "batch.wtb")
    save_graph(setup.graph, config.out / "graph.txt")
    if as_csv:
        export_batch_csv(batch, config.out / "batch.csv")
    click.echo(console.log(console.icons.SIMULATE,
                           f"{batch.n} x {batch.N} samples, {batch.node_count} nodes, burn-in {batch.burn_in}",
                           prefix="simulate"))
    _emit(RunResults(command="simulate", config=config.to_dict(), constants=setup.constants,
                     model=setup.model, extra={"batch": "batch.wtb", "graph": "graph.txt"}), config.out)


@cli.command()
@experiment_options
@click.option("--batch", "batch_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Batch written by 'wienernet simulate' (default: simulate --n trajectories)")
@click.option("--n", "n", type=int, default=1024, show_default=True, help="Trajectories when simulating")
@handles_errors
def recover(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers, verbose, batch_path, n):
    """
    Recover the topology from a single batch and write scores.csv

    Examples:
        wienernet recover --batch runs/a/batch.wtb
        wienernet recover --n 4096 --lambda-rule fixed:0.02
    """
    config = _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers)
    batch = None
    if batch_path is not None:
        batch = load_batch(batch_path)
        _check_batch(config, batch)
    setup = prepare(config, verbose=verbose)
    bounds, notes = _theorem_bounds(config, setup)
    if batch is not None:
        if batch.node_count != setup.graph.node_count:
            raise WienerNetError(
                message=f"Batch has {batch.node_count} nodes, configured graph has {setup.graph.node_count}",
                suggestion="Use the same config that produced the batch.",
            )
    else:
        batch = simulate(setup.model, setup.graph, setup.regime, n, setup.N, config.seed, workers=config.workers)

    if verbose:
        console.fence(f"Solving {batch.node_count} regularized Wiener filters")
    designs = build_designs(batch, setup.frequency)
    lam = choose_lambda(config, setup, batch.n)
    options = solver_options(config)
    estimates = [node_estimate(config, setup, d, lam, options, config.seed) for d in designs]
    result = decode_estimates(config, setup, estimates)
    error = result.relative_error(setup.graph)

    config.out.mkdir(parents=True, exist_ok=True)
    export_scores_csv(result, config.out / "scores.csv", truth=setup.graph)
    click.echo(console.log(console.status_icon(error == 0),
                           f"relative error {error} (|E_hat|={len(result.E_hat)}, |E|={len(setup.graph.edges)})",
                           prefix="recover"))
    _emit(RunResults(command="recover", config=config.to_dict(), constants=setup.constants, bounds=bounds,
                     model=setup.model,
                     extra={"relative_error": error, "n": batch.n, "N": batch.N, "scores": "scores.csv", **notes}),
          config.out)
    _check_theorem(config, bounds)


# ============================================================================
# Experiment Commands
# ============================================================================

@cli.command()
@experiment_options
@click.option("--sizes", help="Grid sizes for an n_min vs log p sweep, e.g. 2x2,2x3,3x3")
@click.option("--oracle", is_flag=True, help="Replace designs with exact Wiener filters")
@handles_errors
def nmin(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers, verbose, sizes, oracle):
    """
    Find n_min: the smallest n with exact recovery in every trial

    Examples:
        wienernet nmin --config grid3.yaml
        wienernet nmin --sizes 2x2,2x3,3x3 --trials 20
    """
    config = _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers)
    if sizes:
        dims = _grid_sizes(sizes)
        if verbose:
            console.fence(f"Sweeping n_min over {len(dims)} grid sizes")
        frame, fit = sweep_nmin_vs_p(config, dims, verbose=verbose)
        click.echo(frame.to_string(index=False))
        _emit(RunResults(command="nmin", config=config.to_dict(), tables={"nmin_vs_p": frame}, fit=fit), config.out)
        return

    if verbose:
        console.fence("Searching n_min")
    setup = prepare(config, verbose=verbose)
    bounds, notes = _theorem_bounds(config, setup)
    try:
        found = find_n_min(config, setup=setup, oracle=oracle, verbose=verbose)
        curve, n_min = found.curve, found.n_min
    except SearchExhaustedError as e:
        curve, n_min = e.curve, None
        click.echo(console.log_warning(e.message, prefix="nmin"), err=True)

    frame = pd.DataFrame(
        [{"n": n, "successes": s, "trials": config.trials,
          "ci_low": success_interval(s, config.trials)[0], "ci_high": success_interval(s, config.trials)[1]}
         for n, s in sorted(curve.items())],
        columns=["n", "successes", "trials", "ci_low", "ci_high"],
    )
    _emit(RunResults(command="nmin", config=config.to_dict(), constants=setup.constants, bounds=bounds,
                     model=setup.model, tables={"success_curve": frame},
                     extra={"n_min": n_min, "N": setup.N, "oracle": oracle, **notes}), config.out)
    if n_min is None:
        sys.exit(1)
    click.echo(console.log(console.icons.TARGET, f"n_min = {n_min}", prefix="nmin"))
    _check_theorem(config, bounds)


@cli.command()
@experiment_options
@click.option("--n-grid", required=True, help="Comma-separated n values, e.g. 32,128,512")
@handles_errors
def compare(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers, verbose, n_grid):
    """
    Compare regularized, unregularized and CIG recovery across n

    Examples:
        wienernet compare --n-grid 32,128,512,2048 --trials 200
    """
    config = _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers)
    if verbose:
        console.fence("Comparing baselines")
    setup = prepare(config, verbose=verbose)
    frame = compare_baselines(config, _number_list(n_grid, "--n-grid"), setup=setup, verbose=verbose)
    click.echo(frame.to_string(index=False))
    _emit(RunResults(command="compare", config=config.to_dict(), constants=setup.constants,
                     model=setup.model, tables={"baselines": frame}), config.out)


@cli.command()
@experiment_options
@click.option("--n", "n", type=int, required=True, help="Pilot sample size")
@click.option("--grid", "kappa_grid", default="0.05,0.1,0.2,0.5,1,2", show_default=True, help="kappa_cal values")
@handles_errors
def calibrate(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers, verbose, n, kappa_grid):
    """
    Pick kappa_cal for the calibrated lambda rule from a pilot grid

    Examples:
        wienernet calibrate --n 2048 --trials 20
    """
    config = _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers)
    setup = prepare(config, verbose=verbose)
    grid = _number_list(kappa_grid, "--grid", float)
    best, frame = calibrate_kappa(config, n, grid, setup=setup)
    click.echo(frame.to_string(index=False))
    click.echo(console.log(console.icons.TARGET, f"kappa_cal = {best:g}", prefix="calibrate"))
    _emit(RunResults(command="calibrate", config=config.to_dict(), constants=setup.constants,
                     model=setup.model, tables={"calibration": frame}, extra={"kappa_cal": best, "n": n}),
          config.out)


# ============================================================================
# Theory Commands
# ============================================================================

@cli.command()
@experiment_options
@click.option("--reference-N", "reference_N", type=float, help="Quoted N to check against the N_min formula")
@handles_errors
def bounds(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers, verbose, reference_N):
    """
    Print model constants and sufficient-condition bounds for both regimes

    Exits 2 when lambda_lo > lambda_hi for the configured regime.

    Examples:
        wienernet bounds --epsilon 0.05
        wienernet bounds --config grid5.yaml --reference-N 2900
    """
    config = _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers)
    if reference_N is not None:
        config.reference_N = reference_N
    setup = prepare(config, verbose=verbose)
    k = setup.constants
    click.echo(console.log(console.icons.THEORY,
                           f"L={k.L:.4g} U={k.U:.4g} C={k.C:.4g} delta_inv={k.delta_inv:.4g} d={k.d} m={k.m:.4g}",
                           prefix="bounds"))

    c, c_prime = config.universal_constants
    computed: List[TheoryBounds] = []
    for reg in (Regime.RESTART_RECORD, Regime.CONSECUTIVE):
        try:
            b = bound_lambda_and_n(k, max(setup.p, 1), config.epsilon, reg, c, c_prime)
        except TheoremConstraintError as e:
            click.echo(console.log_warning(f"{reg.value}: {e.message}", prefix="bounds"))
            continue
        computed.append(b)
        click.echo(console.log(
            console.status_icon(b.feasible),
            f"{reg.value}: n_min={b.n_min:.4g} N_min={b.N_min} lambda in [{b.lambda_lo:.4g}, {b.lambda_hi:.4g}]",
            prefix="bounds",
        ))

    extra = {}
    if config.reference_N is not None:
        extra["reference_N"] = check_reference_N(k, config.reference_N, verbose=False)
    _emit(RunResults(command="bounds", config=config.to_dict(), constants=k, bounds=computed, model=setup.model,
                     extra=extra), config.out)
    mine = [b for b in computed if b.regime is setup.regime]
    if not mine:
        raise TheoremConstraintError(message=f"No bounds available for regime {setup.regime.value}")
    if not mine[0].feasible:
        raise InfeasibleTheorem(
            f"{mine[0].regime.value}: lambda_lo={mine[0].lambda_lo:.4g} exceeds lambda_hi={mine[0].lambda_hi:.4g}"
        )


@cli.command()
@experiment_options
@click.option("--n", "n", type=int, required=True, help="Trajectories per trial")
@click.option("--n-values", help="Also measure the estimation-error decay over these n, e.g. 256,1024,4096")
@handles_errors
def diagnose(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers, verbose, n, n_values):
    """
    Check the lambda condition, restricted eigenvalue and PSD gap on trials

    Examples:
        wienernet diagnose --n 4096 --trials 100
        wienernet diagnose --n 1024 --n-values 256,1024,4096,16384
    """
    config = _load(config_path, regime, epsilon, trials, seed, out, lambda_rule, samples, workers)
    n_list = _number_list(n_values, "--n-values") if n_values else []
    setup = prepare(config, verbose=verbose)
    gap = diagnose_psd_gap(setup.model, setup.frequency, setup.N, constants=setup.constants)
    click.echo(console.log(console.status_icon(gap.lemma_holds),
                           f"PSD gap {gap.gap:.3g} <= {gap.bound:.3g} (N={setup.N}, 1/2U={gap.half_inverse_U:.3g})",
                           prefix="diagnose"))

    reports = run_trials(config, n, setup)
    frame = pd.DataFrame([
        {"seed": r.seed, "relative_error": r.relative_error,
         "lambda_condition": int(r.diagnostics["lambda_condition_all"]),
         "kappa_hat_min": r.diagnostics["kappa_hat_min"],
         "bound_violations": r.diagnostics["bound_violations"],
         "mean_node_error": float(np.mean(r.node_errors))}
        for r in reports
    ])
    rate = float(frame["lambda_condition"].mean())
    click.echo(console.log(console.icons.INFO, f"lambda condition held in {rate:.0%} of {len(reports)} trials",
                           prefix="diagnose"))
    tables = {"diagnostics": frame}
    extra = {"psd_gap": gap.gap, "psd_gap_bound": gap.bound, "lemma_holds": gap.lemma_holds,
             "lambda_condition_rate": rate, "bound_violations": int(frame["bound_violations"].sum())}
    if n_list:
        curve, slope = consistency_curve(config, n_list, seeds=config.trials, setup=setup)
        tables["consistency"] = curve
        extra["consistency_slope"] = slope
        click.echo(console.log(console.icons.CHART, f"log-log error slope {slope:.3f}", prefix="diagnose"))
    _emit(RunResults(command="diagnose", config=config.to_dict(), constants=setup.constants,
                     model=setup.model, tables=tables, extra=extra), config.out)


# ============================================================================
# Other Commands
# ============================================================================

@cli.command()
@click.option("--out", "target", type=click.Path(dir_okay=False, path_type=Path),
              default=Path("experiment.yaml"), show_default=True, help="Template path")
@click.option("--force", is_flag=True, help="Overwrite an existing file")
def init(target: Path, force: bool):
    """Write a commented experiment config template"""
    if target.exists() and not force:
        click.echo(console.log_warning(f"{target} already exists (use --force to overwrite)"), err=True)
        sys.exit(1)
    target.write_text(create_config_template(), encoding="utf-8")
    click.echo(console.log_success(f"Created {target}"))


@cli.command()
def version():
    """Show wienernet version"""
    click.echo(f"wienernet v{__version__}")
    click.echo("Topology learning for networked linear systems via regularized Wiener filters")


# ============================================================================
# Entry Point
# ============================================================================

if __name__ == "__main__":
    cli()
