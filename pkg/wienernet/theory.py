"""
theory.py - Model constants, sufficient-condition bounds and diagnostics

Constants are evaluated on the normalized model (unit PSD diagonal at the
analysis frequency), the population counterpart of the column-normalized
designs, so m, L and U are in the same scale as the thresholds applied to
solver output.

    L, U      extreme eigenvalues of Phi_x(f)^{-1}
    C, delta  autocorrelation envelope ||R_x(tau)||_2 <= C delta^{-|tau|}
    d         max E_M-degree
    m_i       min over true edges (ij) of |Im W_i[j]|;  m = min_i m_i

The universal constants c, c' in the first i.i.d. sample-size term have no
published value; they default to 1 and that term is marked constant-dependent.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from wienernet import icons as console
from wienernet.errors import (
    ScaleMismatchError,
    TheoremConstraintError,
    degenerate_separation_error,
    epsilon_constraint_error,
)
from wienernet.estimator import DESIGN, WienerEstimate, exact_wiener
from wienernet.graph import Graph, two_hop_closure
from wienernet.lds_sim import LdsModel, Regime, parse_regime
from wienernet.spectral import (
    AutocorrSequence,
    SpectralDesign,
    analytic_autocorr,
    analytic_psd,
    expected_finite_psd,
    normalize_model,
)

DECAY_MARGIN = 1e-6
DEGENERATE_IMAG = 1e-12
SUPPORT_TOL = 1e-10


@dataclass(frozen=True)
class ModelConstants:
    L: float
    U: float
    C: float
    delta_inv: float
    d: int
    m: float
    m_i: Tuple[float, ...]
    frequency: float = 0.0

    @property
    def delta(self) -> float:
        return math.inf if self.delta_inv == 0.0 else 1.0 / self.delta_inv

    @property
    def delta_minus_one(self) -> float:
        """delta - 1 = (1 - delta^{-1}) / delta^{-1}."""
        return math.inf if self.delta_inv == 0.0 else (1.0 - self.delta_inv) / self.delta_inv

    def to_dict(self) -> Dict[str, object]:
        out = asdict(self)
        out["m_i"] = list(self.m_i)
        out["delta"] = self.delta
        return {k: _json_number(v) for k, v in out.items()}


@dataclass(frozen=True)
class TheoryBounds:
    regime: Regime
    epsilon: float
    lambda_lo: float
    lambda_hi: float
    n_min: int
    N_min: int
    kappa: float
    epsilon_splits: Tuple[float, float, float]
    universal_constants: Tuple[float, float] = (1.0, 1.0)
    n_terms: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    constant_dependent_terms: Tuple[int, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.lambda_lo <= self.lambda_hi

    def to_dict(self) -> Dict[str, object]:
        out = asdict(self)
        out["regime"] = self.regime.value
        out["feasible"] = self.feasible
        out["epsilon_splits"] = list(self.epsilon_splits)
        out["universal_constants"] = list(self.universal_constants)
        out["n_terms"] = [_json_number(t) for t in self.n_terms]
        out["constant_dependent_terms"] = list(self.constant_dependent_terms)
        return {k: _json_number(v) for k, v in out.items()}


def _json_number(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


# ============================================================================
# Constants
# ============================================================================

def fit_envelope(seq: AutocorrSequence, radius: float, min_decay_rate: float = 0.1) -> Tuple[float, float]:
    """
    (C, delta_inv) with ||R_x(tau)|| <= C delta_inv^tau at every stored lag.

    delta_inv sits just above the asymptotic decay rate. Finite-memory
    sequences (radius 0 but a nonzero lag) fall back to min_decay_rate;
    white sequences get delta_inv = 0 and C = ||R_x(0)||.
    """
    norms = seq.norms()
    base = float(norms[0])
    tail = norms[1:]
    if tail.size == 0 or np.all(tail <= 1e-14 * max(base, 1e-300)):
        return base, 0.0
    rate = radius * (1.0 + DECAY_MARGIN) if radius > 0.0 else min_decay_rate
    taus = np.arange(norms.size)
    positive = norms > 0
    log_c = np.max(np.log(norms[positive]) - taus[positive] * math.log(rate))
    return float(math.exp(log_c)), float(rate)


def envelope_holds(seq: AutocorrSequence, C: float, delta_inv: float, rtol: float = 1e-9) -> bool:
    norms = seq.norms()
    envelope = C * np.power(delta_inv, np.arange(norms.size))
    return bool(np.all(norms <= envelope * (1.0 + rtol) + 1e-300))


def compute_constants(
    model: LdsModel,
    graph: Graph,
    f: float,
    min_decay_rate: float = 0.1,
) -> ModelConstants:
    model.check_support(graph)
    model.check_stable()
    normalized = normalize_model(model, f)
    psd = analytic_psd(normalized, f)
    eig = linalg.eigvalsh(psd.inverse())
    seq = analytic_autocorr(normalized)
    C, delta_inv = fit_envelope(seq, normalized.spectral_radius, min_decay_rate)
    d = two_hop_closure(graph).max_degree(graph.node_count)

    m_i: List[float] = []
    flat_pairs, flat_values = [], []
    for i in range(graph.node_count):
        w = exact_wiener(psd, i)
        values = [abs(w.coefficient(j).imag) for j in graph.neighbors(i)]
        for j, v in zip(graph.neighbors(i), values):
            if v <= DEGENERATE_IMAG:
                flat_pairs.append((i + 1, j + 1))
                flat_values.append(v)
        m_i.append(min(values) if values else math.inf)
    if flat_pairs:
        raise degenerate_separation_error(flat_pairs, flat_values)

    return ModelConstants(
        L=float(eig[0]),
        U=float(eig[-1]),
        C=C,
        delta_inv=delta_inv,
        d=int(d),
        m=float(min(m_i)) if m_i else math.inf,
        m_i=tuple(float(v) for v in m_i),
        frequency=float(f),
    )


def constants_over_grid(
    model: LdsModel,
    graph: Graph,
    frequencies: Sequence[float],
    min_decay_rate: float = 0.1,
) -> Tuple[List[ModelConstants], ModelConstants]:
    """Per-frequency constants and their worst case (min L, m; max U, C, delta_inv)."""
    per = [compute_constants(model, graph, f, min_decay_rate) for f in frequencies]
    if not per:
        raise ValueError("constants_over_grid needs at least one frequency")
    worst = ModelConstants(
        L=min(c.L for c in per),
        U=max(c.U for c in per),
        C=max(c.C for c in per),
        delta_inv=max(c.delta_inv for c in per),
        d=per[0].d,
        m=min(c.m for c in per),
        m_i=tuple(min(vals) for vals in zip(*(c.m_i for c in per))),
        frequency=math.nan,
    )
    return per, worst


# ============================================================================
# Bounds
# ============================================================================

def n_formula(C: float, delta_inv: float, U: float) -> float:
    """4 C U delta^{-1} / (1 - delta^{-1})^2 before rounding."""
    return 4.0 * C * U * delta_inv / (1.0 - delta_inv) ** 2


def bound_N_min(constants: ModelConstants) -> int:
    return max(1, int(math.ceil(n_formula(constants.C, constants.delta_inv, constants.U))))


def check_reference_N(constants: ModelConstants, reference: float, tolerance: float = 0.05, verbose: bool = True) -> Dict[str, object]:
    """Compare the N formula with a quoted reference value; flag gaps above tolerance."""
    formula = n_formula(constants.C, constants.delta_inv, constants.U)
    gap = abs(formula - reference) / max(abs(reference), 1e-300)
    flagged = gap > tolerance
    if flagged and verbose:
        print(console.log_warning(
            f"N formula gives {formula:.1f}, reference quotes {reference:g} ({gap:.1%} apart)",
            prefix="theory",
        ))
    return {"formula": formula, "N_min": bound_N_min(constants), "reference": reference,
            "relative_gap": gap, "flagged": flagged}


def consecutive_multiplier(constants: ModelConstants) -> float:
    """3 + 24 sqrt(3) U C / (delta - 1)."""
    return 3.0 + 24.0 * math.sqrt(3.0) * constants.U * constants.C / constants.delta_minus_one


def _validate_epsilon(epsilon: float, p: int, regime: Regime) -> None:
    if p < 1:
        raise TheoremConstraintError(message=f"Bounds need p >= 1 (got p={p})", context={"p": p})
    if not 0.0 < epsilon < 0.5:
        raise TheoremConstraintError(
            message=f"epsilon must lie in (0, 0.5), got {epsilon}",
            context={"epsilon": epsilon},
        )
    if regime is Regime.CONSECUTIVE and epsilon <= 8.0 / p:
        raise epsilon_constraint_error(epsilon, p)


def lambda_lower(constants: ModelConstants, p: int, epsilon: float, regime: Union[str, Regime], n: float) -> float:
    regime = parse_regime(regime)
    factor = 3.0 if regime is Regime.RESTART_RECORD else consecutive_multiplier(constants)
    return 4.0 * math.sqrt(factor * math.log(8.0 * p * p / epsilon) / (n * constants.L))


def lambda_upper(constants: ModelConstants, m: Optional[float] = None) -> float:
    """m / (1536 U sqrt(d))."""
    m = constants.m if m is None else m
    if constants.d == 0:
        return math.inf
    return m / (1536.0 * constants.U * math.sqrt(constants.d))


def _n_terms(constants: ModelConstants, p: int, epsilon: float, regime: Regime, m: float,
             c: float, c_prime: float) -> Tuple[float, float, float]:
    L, U, d = constants.L, constants.U, constants.d
    log_union = math.log(8.0 * p * p / epsilon)
    if regime is Regime.RESTART_RECORD:
        first = math.log(4.0 * c_prime * p / epsilon) / c
        second = 3456.0 ** 2 * (U / L + 0.5) * math.log(2.0 * p) * d
        third = 3.0 * 6144.0 ** 2 * (U * U / L) * d * log_union / (m * m)
    else:
        coupling = 4.0 * math.sqrt(8.0) * constants.C * U / constants.delta_minus_one
        first = 33.0 ** 2 * math.log(p) * (U / L + 0.5 + coupling) ** 2
        second = 2.0 * math.log(8.0 * p * p / (p * epsilon - 8.0))
        third = consecutive_multiplier(constants) * 6144.0 ** 2 * (U * U / L) * d * log_union / (m * m)
    return first, second, third


def _bounds(constants: ModelConstants, p: int, epsilon: float, regime: Regime, m: float,
            c: float, c_prime: float) -> TheoryBounds:
    _validate_epsilon(epsilon, p, regime)
    terms = _n_terms(constants, p, epsilon, regime, m, c, c_prime)
    worst = max(terms)
    n_min = max(1, int(math.ceil(worst))) if math.isfinite(worst) else 2 ** 62
    eps1 = epsilon / p
    return TheoryBounds(
        regime=regime,
        epsilon=epsilon,
        lambda_lo=lambda_lower(constants, p, epsilon, regime, n_min),
        lambda_hi=lambda_upper(constants, m),
        n_min=n_min,
        N_min=bound_N_min(constants),
        kappa=1.0 / (256.0 * constants.U),
        epsilon_splits=(eps1, eps1 / 2.0, eps1 / 2.0),
        universal_constants=(c, c_prime),
        n_terms=terms,
        constant_dependent_terms=(0,) if regime is Regime.RESTART_RECORD else (),
    )


def bound_lambda_and_n(
    constants: ModelConstants,
    p: int,
    epsilon: float,
    regime: Union[str, Regime],
    c: float = 1.0,
    c_prime: float = 1.0,
) -> TheoryBounds:
    """Graph-level bounds: success for every node with probability >= 1 - epsilon."""
    return _bounds(constants, p, epsilon, parse_regime(regime), constants.m, c, c_prime)


def bound_node(
    constants: ModelConstants,
    node: int,
    p: int,
    epsilon_node: float,
    regime: Union[str, Regime],
    c: float = 1.0,
    c_prime: float = 1.0,
) -> TheoryBounds:
    """Node-level bounds with margin m_i at failure probability epsilon_node = epsilon / p."""
    return _bounds(constants, p, epsilon_node * p, parse_regime(regime), constants.m_i[node], c, c_prime)


# ============================================================================
# Diagnostics
# ============================================================================

@dataclass(frozen=True)
class LambdaCondition:
    holds: bool
    lhs: float


@dataclass(frozen=True)
class ConeCheck:
    holds: bool
    on_support_l1: float
    off_support_l1: float


@dataclass(frozen=True)
class PsdGap:
    gap: float
    bound: float
    lemma_holds: bool
    half_inverse_U: float
    N_min: int


def _check_oracle(design: SpectralDesign, oracle: WienerEstimate) -> None:
    if oracle.scale != DESIGN or oracle.node != design.node or oracle.coefficients.size != design.p:
        raise ScaleMismatchError(
            message=f"Oracle for node {oracle.node + 1} is not in the design scale of node {design.node + 1}",
            suggestion="Convert with estimate_to_design_scale(oracle, design) first.",
            context={"oracle_scale": oracle.scale, "oracle_node": oracle.node + 1, "design_node": design.node + 1},
        )


def diagnose_lambda_condition(design: SpectralDesign, oracle: WienerEstimate, lam: float) -> LambdaCondition:
    """lambda >= (2/n) ||X^H (Y - X W_i)||_inf."""
    _check_oracle(design, oracle)
    resid = design.response - design.design @ oracle.coefficients
    lhs = 2.0 * float(np.max(np.abs(design.design.conj().T @ resid), initial=0.0)) / design.n
    return LambdaCondition(holds=bool(lam >= lhs), lhs=lhs)


def _support(oracle: WienerEstimate) -> np.ndarray:
    return np.abs(oracle.coefficients) > SUPPORT_TOL


def diagnose_restricted_eigenvalue(
    design: SpectralDesign,
    oracle: WienerEstimate,
    trials: int,
    estimate: Optional[WienerEstimate] = None,
    seed: int = 0,
) -> float:
    """
    kappa_hat = min (1/n) ||X D||^2 / ||D||^2 over sampled cone directions:
    Gaussian on the oracle support plus an off-support part at the 3x boundary,
    and the measured error D = estimate - oracle when given.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    _check_oracle(design, oracle)
    rng = np.random.default_rng(seed)
    on = _support(oracle)
    off = ~on
    directions = []
    for _ in range(trials):
        delta = np.zeros(design.p, dtype=complex)
        if on.any():
            delta[on] = rng.standard_normal(on.sum()) + 1j * rng.standard_normal(on.sum())
            if off.any():
                part = rng.standard_normal(off.sum()) + 1j * rng.standard_normal(off.sum())
                part *= 3.0 * np.sum(np.abs(delta[on])) / np.sum(np.abs(part))
                delta[off] = part
        else:
            delta = rng.standard_normal(design.p) + 1j * rng.standard_normal(design.p)
        directions.append(delta)
    if estimate is not None:
        measured = estimate.coefficients - oracle.coefficients
        if np.linalg.norm(measured) > 0:
            directions.append(measured)

    kappa = math.inf
    for delta in directions:
        projected = design.design @ delta
        ratio = float(np.real(np.vdot(projected, projected))) / design.n / float(np.real(np.vdot(delta, delta)))
        kappa = min(kappa, ratio)
    return kappa


def diagnose_cone(
    design: SpectralDesign,
    oracle: WienerEstimate,
    estimate: WienerEstimate,
    tol: float = 1e-9,
) -> ConeCheck:
    """||D_{M-perp}||_1 <= 3 ||D_M||_1 + tol for D = estimate - oracle."""
    _check_oracle(design, oracle)
    delta = estimate.coefficients - oracle.coefficients
    on = _support(oracle)
    on_l1 = float(np.sum(np.abs(delta[on])))
    off_l1 = float(np.sum(np.abs(delta[~on])))
    return ConeCheck(holds=off_l1 <= 3.0 * on_l1 + tol, on_support_l1=on_l1, off_support_l1=off_l1)


def prop_error_bound(kappa: float, lam: float, d: int) -> float:
    """(3 / kappa) lambda sqrt(d)."""
    if kappa <= 0:
        return math.inf
    return 3.0 * lam * math.sqrt(d) / kappa


def diagnose_psd_gap(
    model: LdsModel,
    f: float,
    N: int,
    constants: Optional[ModelConstants] = None,
    graph: Optional[Graph] = None,
) -> PsdGap:
    """
    ||Phi_x - Phi_hat_x||_2 on the normalized model versus
    2 C delta^{-1} / (N (1 - delta^{-1})^2), tightened to 1/(2U) once N >= N_min.
    """
    normalized = normalize_model(model, f)
    if constants is None:
        if graph is None:
            raise ValueError("diagnose_psd_gap needs constants or the graph to compute them")
        constants = compute_constants(model, graph, f)
    phi = analytic_psd(normalized, f).matrix
    phi_hat = expected_finite_psd(normalized, f, N).matrix
    gap = float(np.linalg.norm(phi - phi_hat, 2))

    formula = 2.0 * constants.C * constants.delta_inv / (N * (1.0 - constants.delta_inv) ** 2)
    n_min = bound_N_min(constants)
    half_inverse_U = 1.0 / (2.0 * constants.U)
    bound = min(formula, half_inverse_U) if N >= n_min else formula
    slack = 1e-12 * float(np.linalg.norm(phi, 2))
    return PsdGap(gap=gap, bound=bound, lemma_holds=gap <= bound + slack,
                  half_inverse_U=half_inverse_U, N_min=n_min)


# ============================================================================
# Reports
# ============================================================================

def model_hash(model: LdsModel) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(model.h, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(model.noise_gain, dtype="<f8").tobytes())
    digest.update(np.asarray(model.ma_coeffs, dtype="<f8").tobytes())
    return digest.hexdigest()[:16]


def bounds_report(
    constants: ModelConstants,
    bounds: Iterable[TheoryBounds],
    model: Optional[LdsModel] = None,
    reference_N: Optional[float] = None,
) -> Dict[str, object]:
    """JSON-ready report keyed by model hash, then 'regime/epsilon'."""
    key = model_hash(model) if model is not None else "unknown"
    entries = {f"{b.regime.value}/{b.epsilon:g}": b.to_dict() for b in bounds}
    report: Dict[str, object] = {
        "model_hash": key,
        "constants": constants.to_dict(),
        "bounds": entries,
    }
    if reference_N is not None:
        report["reference_N"] = check_reference_N(constants, reference_N, verbose=False)
    return report
