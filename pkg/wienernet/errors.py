# errors.py - Custom exceptions for wienernet
"""
Custom exception classes with improved error messages for wienernet

All exceptions include:
- Clear error description
- Actionable suggestions
- Relevant context (node indices, residuals, shapes)
"""
from pathlib import Path
from typing import Optional, Dict, Any, List


class WienerNetError(Exception):
    """Base exception for all wienernet errors"""

    def __init__(
        self,
        message: str,
        suggestion: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
        cause: Optional[Exception] = None
    ):
        self.message = message
        self.suggestion = suggestion
        self.context = context or {}
        self.cause = cause
        super().__init__(self.format_message())

    def format_message(self) -> str:
        """Format error with all details"""
        lines = [
            "",
            "=" * 70,
            f"{self.__class__.__name__}",
            "=" * 70,
            "",
            self.message,
        ]

        if self.context:
            lines.append("")
            lines.append("Context:")
            for key, value in self.context.items():
                lines.append(f"  {key}: {value}")

        if self.suggestion:
            lines.append("")
            lines.append("Suggestion:")
            lines.append(f"  {self.suggestion}")

        if self.cause:
            lines.append("")
            lines.append(f"Caused by: {type(self.cause).__name__}: {self.cause}")

        lines.append("")
        lines.append("=" * 70)
        lines.append("")

        return "\n".join(lines)


class ConfigurationError(WienerNetError):
    """Experiment configuration is missing or invalid"""
    pass


class GraphError(WienerNetError):
    """Graph structure or edge-list file is invalid"""
    pass


class ModelError(WienerNetError):
    """Dynamical model is unusable"""
    pass


class UnstableModelError(ModelError):
    """Spectral radius too close to (or above) one"""
    pass


class SupportMismatchError(ModelError):
    """Off-diagonal support of h disagrees with the graph"""
    pass


class DegenerateModelError(ModelError):
    """Model violates a separation assumption (e.g. m = 0)"""
    pass


class BatchFormatError(WienerNetError):
    """Trajectory batch file is corrupt or truncated"""
    pass


class DesignError(WienerNetError):
    """Spectral design cannot be built"""
    pass


class SolverError(WienerNetError):
    """Regularized Wiener filter solver failed"""
    pass


class ConvergenceError(SolverError):
    """Solver hit max_iters before the KKT tolerance"""

    def __init__(self, *args, residual: float = float("nan"), iterations: int = 0, **kwargs):
        self.residual = residual
        self.iterations = iterations
        super().__init__(*args, **kwargs)


class SpectrumError(WienerNetError):
    """Spectral matrix is singular or not positive definite"""
    pass


class ScaleMismatchError(WienerNetError):
    """Oracle and design live in different coefficient scales"""
    pass


class TheoremConstraintError(WienerNetError):
    """Inputs violate a sufficient-condition constraint (e.g. epsilon >= 8/p)"""
    pass


class TrialError(WienerNetError):
    """A node failed inside an experiment trial"""
    pass


class SearchExhaustedError(WienerNetError):
    """n_min search ran out of range without meeting the success criterion"""

    def __init__(self, *args, curve: Optional[Dict[int, int]] = None, **kwargs):
        self.curve = dict(curve or {})
        super().__init__(*args, **kwargs)


# ============================================================================
# Specific error factory functions
# ============================================================================

def unstable_model_error(radius: float, limit: float) -> UnstableModelError:
    """Create error for a non-stationary model"""
    return UnstableModelError(
        message=f"Model is not stable: spectral radius {radius:.6g} >= {limit:.6g}",
        suggestion=(
            "Scale the weighted adjacency down, e.g.\n"
            "  random_model(graph, seed, target_radius=0.69)\n\n"
            "States are wide-sense stationary only when rho(h) < 1."
        ),
        context={
            "spectral_radius": radius,
            "limit": limit,
        }
    )


def support_mismatch_error(
    missing: List[tuple],
    extra: List[tuple],
    node_count: int
) -> SupportMismatchError:
    """Create error when h has entries off the graph (or misses edges)"""
    return SupportMismatchError(
        message="Off-diagonal support of h does not match the graph edges",
        suggestion=(
            "Rebuild the model from the graph so every edge (i, j) has\n"
            "nonzero h[i, j] and h[j, i], and every non-edge is zero."
        ),
        context={
            "node_count": node_count,
            "edges_without_weight": missing[:10],
            "weights_without_edge": extra[:10],
        }
    )


def degenerate_separation_error(pairs: List[tuple], m_values: List[float]) -> DegenerateModelError:
    """Create error for a true edge whose Wiener coefficient is real"""
    return DegenerateModelError(
        message="Separation margin m is zero: a true edge has a purely real Wiener coefficient",
        suggestion=(
            "Imaginary parts vanish when h_ij / phi_i == h_ji / phi_j.\n"
            "Use asymmetric weights (weight_rule: random) or unequal\n"
            "noise gains (gain_jitter > 0)."
        ),
        context={
            "pairs": pairs[:10],
            "imag_magnitudes": m_values[:10],
        }
    )


def zero_column_error(node: int) -> DesignError:
    """Create error for an identically zero node"""
    return DesignError(
        message=f"Node {node + 1} has an identically zero DFT column",
        suggestion=(
            "Column normalization needs every node to carry energy at the\n"
            "analysis frequency. Check the batch (all-zero trajectories?) or\n"
            "pick a different frequency."
        ),
        context={"node": node + 1}
    )


def non_convergence_error(residual: float, iterations: int, tol: float, node: Optional[int]) -> ConvergenceError:
    """Create error when the proximal gradient solver does not converge"""
    return ConvergenceError(
        message=f"Solver did not reach KKT residual {tol:g} within {iterations} iterations",
        suggestion=(
            "Increase solver.max_iters, loosen solver.tol, or raise lambda.\n"
            "lambda = 0 on a rank-deficient design converges slowly; use\n"
            "unregularized_wiener for the minimum-norm solution instead."
        ),
        context={
            "node": None if node is None else node + 1,
            "last_residual": residual,
            "iterations": iterations,
        },
        residual=residual,
        iterations=iterations,
    )


def singular_spectrum_error(kind: str, min_eig: float, cause: Optional[Exception] = None) -> SpectrumError:
    """Create error for a singular / indefinite spectral matrix"""
    return SpectrumError(
        message=f"Spectral matrix ({kind}) is singular or not positive definite",
        suggestion=(
            "Empirical estimates need n >= p + 1 trajectories to be invertible.\n"
            "Analytic matrices are singular only for ill-posed models."
        ),
        context={"kind": kind, "min_eigenvalue": min_eig},
        cause=cause,
    )


def epsilon_constraint_error(epsilon: float, p: int) -> TheoremConstraintError:
    """Create error for the consecutive-regime epsilon constraint"""
    return TheoremConstraintError(
        message=f"Consecutive regime requires epsilon > 8/p (got epsilon={epsilon:g}, 8/p={8.0 / p:.4g})",
        suggestion=(
            "Raise epsilon, use a larger network, or switch to the\n"
            "restart_record (iid) regime, which has no such constraint."
        ),
        context={"epsilon": epsilon, "p": p, "minimum": 8.0 / p}
    )


def batch_format_error(path: Path, problem: str, cause: Optional[Exception] = None) -> BatchFormatError:
    """Create error for an unreadable batch file"""
    return BatchFormatError(
        message=f"Cannot read trajectory batch {path.name}: {problem}",
        suggestion=(
            "Batch files start with the magic bytes WTB1 followed by the\n"
            "header described in FORMATS.md. Re-run `wienernet simulate`\n"
            "to regenerate the file."
        ),
        context={"file": str(path)},
        cause=cause,
    )
