"""
spectral.py - DFT features, normalized designs and PSD / autocorrelation oracles

Conventions (used everywhere in wienernet):

    X_i(f)   = (1/sqrt(N)) sum_k x_i(k) e^{-i f k}
    R_x(tau) = E[x(k + tau) x(k)^T],   R_x(-tau) = R_x(tau)^T
    Phi_x(f) = E[X X^H] = sum_tau R_x(tau) e^{-i f tau}

A design for node i regresses the column X_i on the other nodes' columns;
rows are DFT coefficients of one trajectory, column l holds node
column_nodes(i)[l]. Every column is rescaled to norm sqrt(n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from wienernet.errors import (
    DesignError,
    SpectrumError,
    singular_spectrum_error,
    zero_column_error,
)
from wienernet.lds_sim import LdsModel, TrajectoryBatch

HERMITIAN_TOL = 1e-12
LYAPUNOV_TOL = 1e-10
AUTOCORR_CUTOFF = 1e-12
MAX_TAU = 100_000


def default_frequency(N: int) -> float:
    """Analysis frequency 2*pi/N (the first non-DC DFT bin)."""
    return 2.0 * math.pi / N


def column_nodes(node: int, node_count: int) -> List[int]:
    """Design column l -> node id, i.e. [0..p] without node."""
    return [j for j in range(node_count) if j != node]


# ============================================================================
# Types
# ============================================================================

class SpectralKind(str, Enum):
    ANALYTIC_PSD = "analytic_psd"
    EXPECTED_FINITE = "expected_finite"
    EMPIRICAL = "empirical"


@dataclass(frozen=True)
class SpectralMatrix:
    frequency: float
    matrix: np.ndarray
    kind: SpectralKind

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise SpectrumError(message=f"Spectral matrix must be square, got {m.shape}")
        scale = max(float(np.max(np.abs(m))), 1e-300)
        asym = float(np.max(np.abs(m - m.conj().T)))
        if asym > HERMITIAN_TOL * scale:
            raise SpectrumError(
                message=f"Spectral matrix is not Hermitian (asymmetry {asym:.3g})",
                context={"kind": self.kind, "relative_asymmetry": asym / scale},
            )
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "kind", SpectralKind(self.kind))

    @property
    def node_count(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvalsh(self.matrix)

    def inverse(self) -> np.ndarray:
        """Phi^{-1}; raises SpectrumError unless positive definite."""
        try:
            factor = linalg.cho_factor(self.matrix)
        except linalg.LinAlgError as e:
            raise singular_spectrum_error(self.kind.value, float(self.eigenvalues()[0]), cause=e)
        inv = linalg.cho_solve(factor, np.eye(self.node_count, dtype=complex))
        return 0.5 * (inv + inv.conj().T)


@dataclass(frozen=True)
class AutocorrSequence:
    """R_x(0..tau_max) stacked as (tau_max + 1, p+1, p+1)."""
    matrices: np.ndarray

    @property
    def tau_max(self) -> int:
        return self.matrices.shape[0] - 1

    def lag(self, tau: int) -> np.ndarray:
        if abs(tau) > self.tau_max:
            return np.zeros(self.matrices.shape[1:])
        return self.matrices[tau] if tau >= 0 else self.matrices[-tau].T

    def norms(self) -> np.ndarray:
        """Spectral norm ||R_x(tau)||_2 for tau = 0..tau_max."""
        return np.linalg.norm(self.matrices, ord=2, axis=(1, 2))


@dataclass(frozen=True)
class SpectralDesign:
    node: int
    frequency: float
    response: np.ndarray
    design: np.ndarray
    column_scales: np.ndarray
    response_scale: float

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    @property
    def columns(self) -> List[int]:
        return column_nodes(self.node, self.p + 1)

    def to_raw_scale(self, beta: np.ndarray) -> np.ndarray:
        return (self.response_scale / self.column_scales) * np.asarray(beta)

    def to_design_scale(self, beta_raw: np.ndarray) -> np.ndarray:
        return (self.column_scales / self.response_scale) * np.asarray(beta_raw)


# ============================================================================
# DFT and designs
# ============================================================================

def dft_coefficient(samples: np.ndarray, f: float) -> complex:
    x = np.asarray(samples, dtype=float)
    if x.size < 1:
        raise ValueError("dft_coefficient needs at least one sample")
    k = np.arange(x.size)
    return complex(np.sum(x * np.exp(-1j * f * k)) / math.sqrt(x.size))


def dft_matrix(batch: TrajectoryBatch, f: float) -> np.ndarray:
    """DFT coefficient of every (trajectory, node): shape (n, p+1)."""
    phases = np.exp(-1j * f * np.arange(batch.N)) / math.sqrt(batch.N)
    return np.einsum("rkp,k->rp", batch.data, phases)


def design_from_dft(coeffs: np.ndarray, node: int, f: float) -> SpectralDesign:
    coeffs = np.asarray(coeffs, dtype=complex)
    n, node_count = coeffs.shape
    if not 0 <= node < node_count:
        raise DesignError(message=f"Node {node + 1} is outside 1..{node_count}")
    if not np.all(np.isfinite(coeffs)):
        raise DesignError(message="DFT coefficients contain NaN or inf", context={"node": node + 1})

    norms = np.linalg.norm(coeffs, axis=0) / math.sqrt(n)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise zero_column_error(int(zero[0]))

    cols = column_nodes(node, node_count)
    scales = norms[cols]
    return SpectralDesign(
        node=node,
        frequency=float(f),
        response=coeffs[:, node] / norms[node],
        design=coeffs[:, cols] / scales,
        column_scales=scales,
        response_scale=float(norms[node]),
    )


def build_design(batch: TrajectoryBatch, node: int, f: float) -> SpectralDesign:
    return design_from_dft(dft_matrix(batch, f), node, f)


def build_designs(batch: TrajectoryBatch, f: float) -> List[SpectralDesign]:
    """One design per node, sharing a single DFT pass."""
    coeffs = dft_matrix(batch, f)
    return [design_from_dft(coeffs, i, f) for i in range(batch.node_count)]


def empirical_psd(coeffs: np.ndarray, f: float) -> SpectralMatrix:
    """(1/n) sum_r X_r X_r^H; rows of coeffs are X_r^T."""
    z = np.asarray(coeffs, dtype=complex)
    return SpectralMatrix(frequency=f, matrix=(z.T @ z.conj()) / z.shape[0], kind=SpectralKind.EMPIRICAL)


def export_design_csv(design: SpectralDesign, path: Path) -> None:
    """Interleaved Re/Im columns: y_re, y_im, x<j>_re, x<j>_im (1-based j)."""
    frame = pd.DataFrame({"y_re": design.response.real, "y_im": design.response.imag})
    for l, j in enumerate(design.columns):
        frame[f"x{j + 1}_re"] = design.design[:, l].real
        frame[f"x{j + 1}_im"] = design.design[:, l].imag
    frame.insert(0, "row", np.arange(1, design.n + 1))
    frame.to_csv(path, index=False, float_format="%.17g")


# ============================================================================
# Analytic oracles
# ============================================================================

def augmented_system(model: LdsModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    s(k) = [x(k); w(k-1)],  s(k+1) = A s(k) + B w(k)

        A = [[h, theta1 G], [0, 0]],   B = [[theta0 G], [I]],   G = diag(gain)
    """
    p1 = model.node_count
    theta0, theta1 = model.ma_coeffs
    gain = np.diag(model.noise_gain)
    a = np.zeros((2 * p1, 2 * p1))
    a[:p1, :p1] = model.h
    a[:p1, p1:] = theta1 * gain
    b = np.vstack([theta0 * gain, np.eye(p1)])
    return a, b


def stationary_covariance(model: LdsModel) -> np.ndarray:
    """Augmented stationary covariance Sigma = A Sigma A^T + B B^T."""
    model.check_stable()
    a, b = augmented_system(model)
    q = b @ b.T
    sigma = linalg.solve_discrete_lyapunov(a, q)
    sigma = 0.5 * (sigma + sigma.T)

    # fixed-point polish keeps the residual inside tolerance near rho = 1
    for _ in range(200):
        residual = np.max(np.abs(a @ sigma @ a.T + q - sigma))
        if residual <= LYAPUNOV_TOL * max(1.0, float(np.max(np.abs(sigma)))):
            return sigma
        sigma = a @ sigma @ a.T + q
    raise SpectrumError(
        message=f"Lyapunov residual {residual:.3g} above {LYAPUNOV_TOL:g}",
        suggestion="The model is numerically too close to instability; lower target_radius.",
        context={"spectral_radius": model.spectral_radius},
    )


def analytic_autocorr(model: LdsModel, tau_max: Optional[int] = None) -> AutocorrSequence:
    """
    Exact R_x(tau) = [A^tau Sigma]_xx. With tau_max=None, stops at the first
    lag whose norm drops below 1e-12 ||R_x(0)||, capped at 1e5.
    """
    sigma = stationary_covariance(model)
    a, _ = augmented_system(model)
    p1 = model.node_count
    cap = MAX_TAU if tau_max is None else int(tau_max)
    if cap < 0:
        raise ValueError(f"tau_max must be >= 0, got {tau_max}")

    lags = [sigma[:p1, :p1].copy()]
    floor = AUTOCORR_CUTOFF * np.linalg.norm(lags[0], 2)
    current = sigma
    for _ in range(cap):
        current = a @ current
        lag = current[:p1, :p1].copy()
        lags.append(lag)
        if tau_max is None and np.linalg.norm(lag, 2) < floor:
            break
    return AutocorrSequence(matrices=np.stack(lags))


def analytic_psd(model: LdsModel, f: float) -> SpectralMatrix:
    """Phi_x = (I - H)^{-1} Phi_P (I - H)^{-H}, H_ij = h_ij / (e^{if} - h_ii)."""
    model.check_stable()
    theta0, theta1 = model.ma_coeffs
    z = np.exp(1j * f)
    denom = z - np.diag(model.h)
    off = model.h - np.diag(np.diag(model.h))
    transfer = off / denom[:, None]
    excitation = (model.noise_gain ** 2) * abs(theta0 + theta1 / z) ** 2 / np.abs(denom) ** 2

    system = np.eye(model.node_count) - transfer
    try:
        inv = linalg.solve(system, np.eye(model.node_count, dtype=complex))
    except linalg.LinAlgError as e:
        raise SpectrumError(
            message="I - H(f) is singular; the model is ill-posed at this frequency",
            context={"frequency": f},
            cause=e,
        )
    phi = inv @ np.diag(excitation) @ inv.conj().T
    return SpectralMatrix(frequency=f, matrix=phi, kind=SpectralKind.ANALYTIC_PSD)


def _windowed_dtft(seq: AutocorrSequence, f: float, weights: np.ndarray) -> np.ndarray:
    taus = np.arange(weights.size)
    phases = weights * np.exp(-1j * f * taus)
    mats = seq.matrices[: weights.size]
    positive = np.einsum("t,tij->ij", phases[1:], mats[1:])
    return mats[0] + positive + positive.conj().T


def psd_from_autocorr(seq: AutocorrSequence, f: float) -> SpectralMatrix:
    """Truncated DTFT sum_{|tau| <= tau_max} R_x(tau) e^{-i f tau}."""
    weights = np.ones(seq.tau_max + 1)
    return SpectralMatrix(frequency=f, matrix=_windowed_dtft(seq, f, weights), kind=SpectralKind.ANALYTIC_PSD)


def expected_finite_psd(
    model: LdsModel,
    f: float,
    N: int,
    seq: Optional[AutocorrSequence] = None,
) -> SpectralMatrix:
    """Bartlett-windowed (1/N) sum_{|q| < N} (N - |q|) R_x(q) e^{-i f q}."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if seq is None:
        seq = analytic_autocorr(model)
    lags = min(N - 1, seq.tau_max)
    weights = 1.0 - np.arange(lags + 1) / N
    return SpectralMatrix(frequency=f, matrix=_windowed_dtft(seq, f, weights), kind=SpectralKind.EXPECTED_FINITE)


def normalization_scales(model: LdsModel, f: float) -> np.ndarray:
    """diag(Phi_x(f))^{-1/2}."""
    phi = analytic_psd(model, f).matrix
    return 1.0 / np.sqrt(np.real(np.diag(phi)))


def normalize_model(model: LdsModel, f: float) -> LdsModel:
    """Model of the rescaled states whose PSD has unit diagonal at f."""
    return model.rescaled(normalization_scales(model, f))
