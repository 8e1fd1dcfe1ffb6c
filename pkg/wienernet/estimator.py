"""
estimator.py - Wiener filter oracle, regularized solver, baselines and decoder

Regularized Wiener filter for node i:

    argmin_beta  (1/2n) ||Y - X beta||_2^2 + lambda * sum_j |beta_j|

solved by accelerated proximal gradient (FISTA) on the complex problem.
The prox of lambda*|.| on a complex entry is modulus soft-thresholding.

Coefficients carry a scale tag: "raw" for oracles computed from a PSD,
"design" for anything living in the column-normalized design of a
SpectralDesign. Thresholding refuses to mix the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from wienernet.errors import (
    DesignError,
    ScaleMismatchError,
    SpectrumError,
    TrialError,
    non_convergence_error,
)
from wienernet.graph import Graph, Pair, two_hop_closure
from wienernet.spectral import SpectralDesign, SpectralMatrix, column_nodes

RAW = "raw"
DESIGN = "design"


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 50_000
    power_iters: int = 30
    record_history: bool = False


@dataclass(frozen=True)
class WienerEstimate:
    node: int
    coefficients: np.ndarray
    lam: float = 0.0
    scale: str = DESIGN
    solver_stats: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(coeffs)):
            raise DesignError(
                message=f"Wiener estimate for node {self.node + 1} has non-finite entries",
                context={"node": self.node + 1},
            )
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def columns(self) -> List[int]:
        return column_nodes(self.node, self.coefficients.size + 1)

    def coefficient(self, j: int) -> complex:
        """W_i[j] by node id."""
        if j == self.node:
            return 0j
        return complex(self.coefficients[j if j < self.node else j - 1])


@dataclass(frozen=True)
class RecoveryResult:
    E_M_hat: FrozenSet[Pair]
    E_hat: FrozenSet[Pair]
    tau1: float
    tau2: float
    scores: Dict[Pair, Tuple[float, float]]

    def false_positives(self, truth: Graph) -> FrozenSet[Pair]:
        return frozenset(self.E_hat - truth.edges)

    def false_negatives(self, truth: Graph) -> FrozenSet[Pair]:
        return frozenset(truth.edges - self.E_hat)

    def relative_error(self, truth: Graph) -> int:
        """|E_hat \\ E| + |E \\ E_hat|."""
        return len(self.E_hat ^ truth.edges)


# ============================================================================
# Exact oracle
# ============================================================================

def exact_wiener(psd: SpectralMatrix, node: int) -> WienerEstimate:
    """
    W_i[j] = -K(i, j) / K(i, i) with K = Phi^{-1}, cross-checked against the
    population regression conj(Phi_ibar)^{-1} conj(Phi_{ibar, i}).
    """
    k = psd.inverse()
    cols = column_nodes(node, psd.node_count)
    coeffs = -k[node, cols] / k[node, node]

    phi = psd.matrix
    mismatch = 0.0
    if cols:
        regression = linalg.solve(phi[np.ix_(cols, cols)].conj(), phi[cols, node].conj(), assume_a="her")
        mismatch = float(np.max(np.abs(regression - coeffs)))
    allowed = 1e-10 * max(1.0, float(np.max(np.abs(coeffs), initial=0.0))) * max(1.0, float(np.linalg.cond(phi)))
    if mismatch > allowed:
        raise SpectrumError(
            message=f"Inverse-PSD and regression forms of W_{node + 1} disagree by {mismatch:.3g}",
            suggestion="The spectral matrix is too ill-conditioned for an exact oracle.",
            context={"node": node + 1, "mismatch": mismatch, "allowed": allowed},
        )
    return WienerEstimate(
        node=node, coefficients=coeffs, lam=0.0, scale=RAW,
        solver_stats={"cross_check": mismatch},
    )


def estimate_to_design_scale(estimate: WienerEstimate, design: SpectralDesign) -> WienerEstimate:
    if estimate.scale == DESIGN:
        return estimate
    if estimate.node != design.node or estimate.coefficients.size != design.p:
        raise ScaleMismatchError(
            message=f"Estimate for node {estimate.node + 1} does not match design for node {design.node + 1}",
            context={"estimate_len": estimate.coefficients.size, "design_p": design.p},
        )
    return WienerEstimate(
        node=estimate.node,
        coefficients=design.to_design_scale(estimate.coefficients),
        lam=estimate.lam,
        scale=DESIGN,
        solver_stats=dict(estimate.solver_stats),
    )


# ============================================================================
# Regularized solver
# ============================================================================

def _gram(design: SpectralDesign) -> Tuple[np.ndarray, np.ndarray, float]:
    x, y, n = design.design, design.response, design.n
    gram = (x.conj().T @ x) / n
    corr = (x.conj().T @ y) / n
    energy = float(np.real(np.vdot(y, y))) / (2 * n)
    return gram, corr, energy


def _smooth(gram, corr, energy, beta) -> float:
    return float(0.5 * np.real(np.vdot(beta, gram @ beta)) - np.real(np.vdot(corr, beta)) + energy)


def _kkt(gram, corr, beta, lam) -> float:
    grad = gram @ beta - corr
    mod = np.abs(beta)
    zero = mod == 0
    residual = np.empty(beta.shape)
    residual[zero] = np.maximum(0.0, np.abs(grad[zero]) - lam)
    nz = ~zero
    residual[nz] = np.abs(grad[nz] + lam * beta[nz] / mod[nz])
    return float(residual.max(initial=0.0))


def _soft_threshold(z: np.ndarray, level: float) -> np.ndarray:
    mod = np.abs(z)
    shrink = np.zeros_like(mod)
    keep = mod > level
    shrink[keep] = 1.0 - level / mod[keep]
    return z * shrink


def _power_iteration(gram: np.ndarray, iters: int) -> float:
    if gram.shape[0] == 0:
        return 0.0
    v = np.ones(gram.shape[0], dtype=complex) / np.sqrt(gram.shape[0])
    estimate = 0.0
    for _ in range(iters):
        w = gram @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        previous, estimate = estimate, float(np.real(np.vdot(v, gram @ v)))
        if previous and abs(estimate - previous) <= 1e-10 * abs(estimate):
            break
    return estimate


def kkt_residual(design: SpectralDesign, beta: np.ndarray, lam: float) -> float:
    """Max group-lasso KKT violation over coordinates."""
    gram, corr, _ = _gram(design)
    return _kkt(gram, corr, np.asarray(beta, dtype=complex), lam)


def objective(design: SpectralDesign, beta: np.ndarray, lam: float) -> float:
    beta = np.asarray(beta, dtype=complex)
    resid = design.response - design.design @ beta
    return float(np.real(np.vdot(resid, resid))) / (2 * design.n) + lam * float(np.sum(np.abs(beta)))


def lambda_max(design: SpectralDesign) -> float:
    """(1/n) ||X^H Y||_inf; beta = 0 is optimal for any lambda >= this."""
    return float(np.max(np.abs(design.design.conj().T @ design.response))) / design.n


def solve_regularized_wiener(
    design: SpectralDesign,
    lam: float,
    options: Optional[SolverOptions] = None,
    warm_start: Optional[np.ndarray] = None,
) -> WienerEstimate:
    options = options or SolverOptions()
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if not (np.all(np.isfinite(design.design)) and np.all(np.isfinite(design.response))):
        raise DesignError(message="Design contains NaN or inf", context={"node": design.node + 1})

    gram, corr, energy = _gram(design)
    p = design.p

    def total(b):
        return _smooth(gram, corr, energy, b) + lam * float(np.sum(np.abs(b)))

    beta = np.zeros(p, dtype=complex) if warm_start is None else np.array(warm_start, dtype=complex)
    lipschitz = _power_iteration(gram, options.power_iters)
    current = total(beta)
    residual = _kkt(gram, corr, beta, lam)
    history = [current] if options.record_history else None

    if lipschitz == 0.0 or residual <= options.tol:
        return _finished(design, beta, lam, 0, residual, current, 0, history)

    z = beta.copy()
    t = 1.0
    restarts = 0
    momentum = False
    for iteration in range(1, options.max_iters + 1):
        step = 1.0 / lipschitz
        candidate = _soft_threshold(z - step * (gram @ z - corr), lam * step)
        value = total(candidate)
        if value > current + 1e-12 * max(1.0, abs(current)):
            if momentum:
                # restart from the last accepted iterate
                z, t, momentum = beta.copy(), 1.0, False
                restarts += 1
            else:
                lipschitz *= 2.0
            continue

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = candidate + ((t - 1.0) / t_next) * (candidate - beta)
        momentum = t > 1.0
        beta, t, current = candidate, t_next, value
        if history is not None:
            history.append(current)

        residual = _kkt(gram, corr, beta, lam)
        if residual <= options.tol:
            return _finished(design, beta, lam, iteration, residual, current, restarts, history)

    raise non_convergence_error(residual, options.max_iters, options.tol, design.node)


def _finished(design, beta, lam, iterations, residual, value, restarts, history) -> WienerEstimate:
    stats = {
        "iterations": iterations,
        "kkt_residual": residual,
        "objective": value,
        "restarts": restarts,
    }
    if history is not None:
        stats["history"] = history
    return WienerEstimate(node=design.node, coefficients=beta, lam=float(lam), scale=DESIGN, solver_stats=stats)


def unregularized_wiener(design: SpectralDesign) -> WienerEstimate:
    """Minimum-norm least squares (pseudo-inverse)."""
    beta, _, rank, _ = linalg.lstsq(design.design, design.response)
    return WienerEstimate(
        node=design.node, coefficients=beta, lam=0.0, scale=DESIGN,
        solver_stats={"rank": int(rank), "objective": objective(design, beta, 0.0)},
    )


def lambda_path(design: SpectralDesign, count: int = 20, ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced grid from lambda_max down to ratio * lambda_max."""
    top = lambda_max(design)
    if top == 0.0:
        return np.zeros(count)
    return np.geomspace(top, top * ratio, count)


def solve_path(
    design: SpectralDesign,
    lambdas: Sequence[float],
    options: Optional[SolverOptions] = None,
) -> List[WienerEstimate]:
    """Warm-started solutions along a decreasing lambda grid."""
    estimates = []
    warm = None
    for lam in lambdas:
        estimate = solve_regularized_wiener(design, float(lam), options, warm_start=warm)
        warm = estimate.coefficients
        estimates.append(estimate)
    return estimates


def _subset(design: SpectralDesign, rows: np.ndarray) -> SpectralDesign:
    return SpectralDesign(
        node=design.node,
        frequency=design.frequency,
        response=design.response[rows],
        design=design.design[rows],
        column_scales=design.column_scales,
        response_scale=design.response_scale,
    )


def cross_validate_lambda(
    design: SpectralDesign,
    grid: Optional[Sequence[float]] = None,
    folds: int = 5,
    seed: int = 0,
    options: Optional[SolverOptions] = None,
) -> Tuple[float, np.ndarray]:
    """K-fold held-out squared error per lambda; returns (best lambda, errors)."""
    if folds < 2 or folds > design.n:
        raise ValueError(f"folds must lie in [2, n={design.n}], got {folds}")
    grid = lambda_path(design) if grid is None else np.asarray(grid, dtype=float)
    order = np.random.default_rng(seed).permutation(design.n)
    errors = np.zeros(len(grid))
    for held in np.array_split(order, folds):
        train = np.setdiff1d(order, held)
        estimates = solve_path(_subset(design, train), grid, options)
        for k, estimate in enumerate(estimates):
            resid = design.response[held] - design.design[held] @ estimate.coefficients
            errors[k] += float(np.real(np.vdot(resid, resid)))
    errors /= design.n
    return float(grid[int(np.argmin(errors))]), errors


# ============================================================================
# Baseline and decoder
# ============================================================================

def cig_baseline(psd: SpectralMatrix, threshold: float, normalize: bool = True) -> FrozenSet[Pair]:
    """
    Pairs with |Phi^{-1}(i, j)| >= threshold. With normalize=True the PSD is
    first scaled to unit diagonal, matching the normalized designs.
    """
    matrix = psd.matrix
    if normalize:
        diag = np.real(np.diag(matrix))
        if np.any(diag <= 0):
            raise SpectrumError(message="PSD has a non-positive diagonal entry", context={"kind": psd.kind.value})
        s = 1.0 / np.sqrt(diag)
        matrix = s[:, None] * matrix * s[None, :]
    k = SpectralMatrix(frequency=psd.frequency, matrix=matrix, kind=psd.kind).inverse()
    rows, cols = np.nonzero(np.triu(np.abs(k) >= threshold, k=1))
    return frozenset((int(i), int(j)) for i, j in zip(rows, cols))


def coefficient_matrix(estimates: Union[Sequence[WienerEstimate], Mapping[int, WienerEstimate]]) -> np.ndarray:
    """Stack per-node filters into W with W[i, j] = W_i[j], zero diagonal."""
    by_node = dict(estimates) if isinstance(estimates, Mapping) else {e.node: e for e in estimates}
    if not by_node:
        raise TrialError(message="No Wiener estimates supplied")
    node_count = next(iter(by_node.values())).coefficients.size + 1
    missing = [i + 1 for i in range(node_count) if i not in by_node]
    if missing:
        raise TrialError(message=f"Missing Wiener estimates for nodes {missing}", context={"node_count": node_count})
    scales = {e.scale for e in by_node.values()}
    if len(scales) > 1:
        raise ScaleMismatchError(
            message="Estimates mix raw and design scales",
            suggestion="Convert oracles with estimate_to_design_scale before thresholding.",
            context={"scales": sorted(scales)},
        )
    w = np.zeros((node_count, node_count), dtype=complex)
    for i in range(node_count):
        w[i, column_nodes(i, node_count)] = by_node[i].coefficients
    return w


def threshold_topology(
    estimates: Union[Sequence[WienerEstimate], Mapping[int, WienerEstimate]],
    tau1: float,
    tau2: float,
) -> RecoveryResult:
    """
    E_M_hat = {(ij): |W_i[j]| + |W_j[i]| >= tau1}
    E_hat   = {(ij) in E_M_hat: |Im W_i[j]| + |Im W_j[i]| >= tau2}
    """
    w = coefficient_matrix(estimates)
    magnitude = np.abs(w) + np.abs(w).T
    imaginary = np.abs(w.imag) + np.abs(w.imag).T
    node_count = w.shape[0]

    scores: Dict[Pair, Tuple[float, float]] = {}
    e_m, e = set(), set()
    for i in range(node_count):
        for j in range(i + 1, node_count):
            mag, im = float(magnitude[i, j]), float(imaginary[i, j])
            scores[(i, j)] = (mag, im)
            if mag >= tau1:
                e_m.add((i, j))
                if im >= tau2:
                    e.add((i, j))
    return RecoveryResult(E_M_hat=frozenset(e_m), E_hat=frozenset(e), tau1=tau1, tau2=tau2, scores=scores)


def largest_gap_threshold(scores: Sequence[float]) -> float:
    """
    Heuristic threshold for model-free use: midpoint of the widest gap in
    the sorted scores. With fewer than two distinct scores, the single
    value is returned (everything passes).
    """
    values = np.unique(np.asarray(scores, dtype=float))
    if values.size == 0:
        return 0.0
    if values.size == 1:
        return float(values[0])
    gaps = np.diff(values)
    k = int(np.argmax(gaps))
    return float(0.5 * (values[k] + values[k + 1]))


def export_scores_csv(result: RecoveryResult, path: Path, truth: Optional[Graph] = None) -> None:
    """Columns: i, j (1-based), magnitude_score, imag_score, in_E_M_hat, in_E_hat[, in_E, in_E_M]."""
    rows = []
    closure = two_hop_closure(truth) if truth is not None else None
    for (i, j), (mag, im) in sorted(result.scores.items()):
        row = {
            "i": i + 1,
            "j": j + 1,
            "magnitude_score": mag,
            "imag_score": im,
            "in_E_M_hat": int((i, j) in result.E_M_hat),
            "in_E_hat": int((i, j) in result.E_hat),
        }
        if truth is not None:
            row["in_E"] = int((i, j) in truth.edges)
            row["in_E_M"] = int((i, j) in closure.pairs)
        rows.append(row)
    columns = ["i", "j", "magnitude_score", "imag_score", "in_E_M_hat", "in_E_hat"]
    if truth is not None:
        columns += ["in_E", "in_E_M"]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format="%.17g")
