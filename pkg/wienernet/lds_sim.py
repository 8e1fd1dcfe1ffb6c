"""
lds_sim.py - Networked linear dynamical system driven by MA(1) noise

    x_i(k+1) = h_ii x_i(k) + sum_{(ij) in E} h_ij x_j(k) + e_i(k)
    e_i(k)   = gain_i * (theta0 w_i(k) + theta1 w_i(k-1)),  w ~ N(0, 1) iid

Trajectories are recorded in one of two regimes:
- restart_record: n independent runs, each with its own burn-in
- consecutive:    one run of length burn_in + n*N cut into n windows

Randomness comes from numpy Generators keyed by (seed, regime, trajectory)
through SeedSequence spawn keys, so any subset of trajectories can be
generated in any order (or in parallel) and still be bit-identical.

Batch file format (little-endian):
    b"WTB1" | regime:u8 | n:u32 | N:u32 | p1:u32 | seed:u64 | burn_in:u32 | f64 data (n, N, p1)
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from wienernet.errors import (
    ModelError,
    batch_format_error,
    support_mismatch_error,
    unstable_model_error,
)
from wienernet.graph import Graph

try:
    from numba import njit
    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False


STABILITY_MARGIN = 1e-6
BURN_IN_TOLERANCE = 1e-8
RESTART_BLOCK = 2048          # trajectories generated per block in restart_record
CONSECUTIVE_CHUNK = 65536     # samples generated per chunk in consecutive

BATCH_MAGIC = b"WTB1"
BATCH_HEADER = struct.Struct("<4sBIIIQI")


class Regime(str, Enum):
    RESTART_RECORD = "restart_record"
    CONSECUTIVE = "consecutive"

    @property
    def code(self) -> int:
        return 0 if self is Regime.RESTART_RECORD else 1

    @classmethod
    def from_code(cls, code: int) -> "Regime":
        return {0: cls.RESTART_RECORD, 1: cls.CONSECUTIVE}[code]


def parse_regime(value: Union[str, Regime]) -> Regime:
    """Accept enum values plus the CLI spellings 'iid' and 'non-iid'."""
    if isinstance(value, Regime):
        return value
    aliases = {
        "iid": Regime.RESTART_RECORD,
        "restart_record": Regime.RESTART_RECORD,
        "restart-record": Regime.RESTART_RECORD,
        "consecutive": Regime.CONSECUTIVE,
        "non-iid": Regime.CONSECUTIVE,
        "non_iid": Regime.CONSECUTIVE,
    }
    key = str(value).strip().lower()
    if key not in aliases:
        raise ValueError(f"Unknown regime {value!r}; expected one of {sorted(aliases)}")
    return aliases[key]


def spectral_radius(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


# ============================================================================
# Model
# ============================================================================

@dataclass(frozen=True)
class LdsModel:
    """Ground-truth weighted adjacency h plus MA(1) excitation parameters."""
    h: np.ndarray
    noise_gain: np.ndarray
    ma_coeffs: Tuple[float, float] = (1.0, -0.3)

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        gain = np.array(self.noise_gain, dtype=float).reshape(-1)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ModelError(message=f"h must be square, got shape {h.shape}")
        if gain.shape[0] != h.shape[0]:
            raise ModelError(
                message=f"noise_gain has {gain.shape[0]} entries for {h.shape[0]} nodes",
                context={"h_shape": h.shape, "gain_shape": gain.shape},
            )
        if not np.all(gain > 0):
            raise ModelError(
                message="noise_gain entries must be strictly positive (persistent excitation)",
                context={"noise_gain": gain.tolist()},
            )
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(gain))):
            raise ModelError(message="Model contains non-finite entries")
        h.setflags(write=False)
        gain.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "noise_gain", gain)
        object.__setattr__(self, "ma_coeffs", (float(self.ma_coeffs[0]), float(self.ma_coeffs[1])))

    @property
    def node_count(self) -> int:
        return self.h.shape[0]

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.h)

    def check_stable(self) -> None:
        radius = self.spectral_radius
        if radius >= 1.0 - STABILITY_MARGIN:
            raise unstable_model_error(radius, 1.0 - STABILITY_MARGIN)

    def check_support(self, graph: Graph) -> None:
        if graph.node_count != self.node_count:
            raise ModelError(
                message=f"Graph has {graph.node_count} nodes but h is {self.node_count} x {self.node_count}",
            )
        adj = graph.adjacency()
        nonzero = self.h != 0
        np.fill_diagonal(nonzero, False)
        missing = [(int(i), int(j)) for i, j in zip(*np.nonzero(adj & ~nonzero))]
        extra = [(int(i), int(j)) for i, j in zip(*np.nonzero(nonzero & ~adj))]
        if missing or extra:
            raise support_mismatch_error(missing, extra, graph.node_count)

    def rescaled(self, scales: Sequence[float]) -> "LdsModel":
        """Model of x~ = S x for S = diag(scales): h -> S h S^-1, gain -> S gain."""
        s = np.asarray(scales, dtype=float)
        return LdsModel(
            h=(s[:, None] * self.h) / s[None, :],
            noise_gain=s * self.noise_gain,
            ma_coeffs=self.ma_coeffs,
        )


def _scale_to_radius(h: np.ndarray, target_radius: float) -> np.ndarray:
    if not 0.0 <= target_radius < 1.0:
        raise ModelError(
            message=f"target_radius must lie in [0, 1), got {target_radius}",
            context={"target_radius": target_radius},
        )
    radius = spectral_radius(h)
    if radius == 0.0:
        return h
    return h * (target_radius / radius)


def _gains(node_count: int, gain: float, gain_jitter: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= gain_jitter < 1.0:
        raise ModelError(message=f"gain_jitter must lie in [0, 1), got {gain_jitter}")
    jitter = rng.uniform(-1.0, 1.0, size=node_count)
    return gain * (1.0 + gain_jitter * jitter)


def random_model(
    graph: Graph,
    seed: int,
    weight_low: float = 0.2,
    weight_high: float = 1.0,
    self_weight: float = 0.5,
    target_radius: float = 0.69,
    ma_coeffs: Tuple[float, float] = (1.0, -0.3),
    gain: float = 1.0,
    gain_jitter: float = 0.0,
) -> LdsModel:
    """
    Positive weights drawn independently for h_ij and h_ji, so every edge
    carries an asymmetric coupling and a nonzero imaginary Wiener part.
    h is rescaled to spectral radius target_radius.
    """
    rng = np.random.default_rng(seed)
    n = graph.node_count
    h = np.zeros((n, n))
    for i, j in graph.sorted_edges():
        h[i, j] = rng.uniform(weight_low, weight_high)
        h[j, i] = rng.uniform(weight_low, weight_high)
    h[np.diag_indices(n)] = self_weight * rng.uniform(weight_low, weight_high, size=n)
    h = _scale_to_radius(h, target_radius)
    return LdsModel(h=h, noise_gain=_gains(n, gain, gain_jitter, rng), ma_coeffs=ma_coeffs)


def uniform_model(
    graph: Graph,
    weight: float = 1.0,
    self_weight: float = 0.5,
    target_radius: float = 0.69,
    ma_coeffs: Tuple[float, float] = (1.0, -0.3),
    gain: float = 1.0,
    gain_jitter: float = 0.0,
    seed: int = 0,
) -> LdsModel:
    """Equal symmetric weights; needs gain_jitter > 0 for a nonzero margin m."""
    n = graph.node_count
    h = graph.adjacency().astype(float) * weight
    h[np.diag_indices(n)] = self_weight * weight
    h = _scale_to_radius(h, target_radius)
    rng = np.random.default_rng(seed)
    return LdsModel(h=h, noise_gain=_gains(n, gain, gain_jitter, rng), ma_coeffs=ma_coeffs)


def burn_in_length(model: LdsModel) -> int:
    """K with rho(h)^K < 1e-8, at least 1 (zero state is never stationary)."""
    radius = model.spectral_radius
    if radius <= 0.0:
        return 1
    return max(1, int(math.ceil(math.log(BURN_IN_TOLERANCE) / math.log(radius))))


# ============================================================================
# Noise
# ============================================================================

class NoiseStream:
    """
    Sequential MA(1) generator. Chunked draws continue the same innovation
    sequence, carrying w(k-1) across chunk boundaries.
    """

    def __init__(self, model: LdsModel, rng: np.random.Generator):
        self.gain = np.asarray(model.noise_gain)
        self.theta0, self.theta1 = model.ma_coeffs
        self.rng = rng
        self.previous = rng.standard_normal(model.node_count)

    def draw(self, length: int) -> np.ndarray:
        w = self.rng.standard_normal((length, self.gain.shape[0]))
        lagged = np.empty_like(w)
        lagged[0] = self.previous
        lagged[1:] = w[:-1]
        self.previous = w[-1].copy()
        return self.gain * (self.theta0 * w + self.theta1 * lagged)


def sample_noise(model: LdsModel, length: int, rng: np.random.Generator) -> np.ndarray:
    """e(k) = gain_i (theta0 w_i(k) + theta1 w_i(k-1)), shape (length, p+1)."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    return NoiseStream(model, rng).draw(length)


def _stream(seed: int, regime: Regime, trajectory: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(regime.code, int(trajectory))))


# ============================================================================
# State recursion
# ============================================================================

def _propagate_loops(h, e, x):
    """states[k] = x(k); x(k+1) = h x(k) + e(k). Returns (states, x(len(e)))."""
    steps, nodes = e.shape
    states = np.empty_like(e)
    current = x.copy()
    following = np.empty_like(current)
    for k in range(steps):
        for i in range(nodes):
            states[k, i] = current[i]
        for i in range(nodes):
            acc = e[k, i]
            for j in range(nodes):
                acc += h[i, j] * current[j]
            following[i] = acc
        for i in range(nodes):
            current[i] = following[i]
    return states, current


def _propagate_numpy(h, e, x):
    states = np.empty_like(e)
    current = x.copy()
    for k in range(e.shape[0]):
        states[k] = current
        current = h @ current + e[k]
    return states, current


if NUMBA_AVAILABLE:
    _propagate = njit(cache=True, nogil=True)(_propagate_loops)
else:
    _propagate = _propagate_numpy


# ============================================================================
# Trajectory batches
# ============================================================================

@dataclass(frozen=True)
class TrajectoryBatch:
    """n trajectories x N samples x (p+1) nodes."""
    regime: Regime
    data: np.ndarray
    seed: int
    burn_in: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"Batch data must be 3-D (n, N, p+1), got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "regime", parse_regime(self.regime))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def node_count(self) -> int:
        return self.data.shape[2]


def _restart_block(model: LdsModel, seed: int, start: int, stop: int, N: int, burn_in: int) -> np.ndarray:
    total = burn_in + N
    noise = np.stack([
        NoiseStream(model, _stream(seed, Regime.RESTART_RECORD, r)).draw(total)
        for r in range(start, stop)
    ])
    state = np.zeros((stop - start, model.node_count))
    out = np.empty((stop - start, N, model.node_count))
    h_t = np.asarray(model.h).T
    for k in range(total):
        if k >= burn_in:
            out[:, k - burn_in, :] = state
        state = state @ h_t + noise[:, k, :]
    return out


def _consecutive_run(model: LdsModel, seed: int, n: int, N: int, burn_in: int) -> np.ndarray:
    stream = NoiseStream(model, _stream(seed, Regime.CONSECUTIVE, 0))
    total = burn_in + n * N
    h = np.ascontiguousarray(model.h)
    state = np.zeros(model.node_count)
    record = np.empty((n * N, model.node_count))
    produced = 0
    while produced < total:
        length = min(CONSECUTIVE_CHUNK, total - produced)
        states, state = _propagate(h, np.ascontiguousarray(stream.draw(length)), state)
        lo, hi = produced, produced + length
        keep_lo = max(lo, burn_in)
        if keep_lo < hi:
            record[keep_lo - burn_in:hi - burn_in] = states[keep_lo - lo:]
        produced = hi
    return record.reshape(n, N, model.node_count)


def simulate(
    model: LdsModel,
    graph: Graph,
    regime: Union[str, Regime],
    n: int,
    N: int,
    seed: int,
    workers: int = 1,
) -> TrajectoryBatch:
    """
    Simulate n trajectories of N samples in the given recording regime.

    Identical (model, regime, n, N, seed) reproduce bit-identical data for
    any worker count.
    """
    regime = parse_regime(regime)
    if n < 1 or N < 1:
        raise ValueError(f"n and N must be >= 1 (got n={n}, N={N})")
    model.check_stable()
    model.check_support(graph)
    burn_in = burn_in_length(model)

    if regime is Regime.CONSECUTIVE:
        data = _consecutive_run(model, seed, n, N, burn_in)
    else:
        blocks = [(start, min(start + RESTART_BLOCK, n)) for start in range(0, n, RESTART_BLOCK)]
        if workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda b: _restart_block(model, seed, b[0], b[1], N, burn_in), blocks))
        else:
            parts = [_restart_block(model, seed, start, stop, N, burn_in) for start, stop in blocks]
        data = np.concatenate(parts, axis=0)

    return TrajectoryBatch(regime=regime, data=data, seed=int(seed), burn_in=burn_in)


# ============================================================================
# Batch I/O
# ============================================================================

def save_batch(batch: TrajectoryBatch, path: Path) -> None:
    header = BATCH_HEADER.pack(
        BATCH_MAGIC, batch.regime.code, batch.n, batch.N, batch.node_count,
        int(batch.seed) & 0xFFFFFFFFFFFFFFFF, batch.burn_in,
    )
    payload = np.ascontiguousarray(batch.data, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_batch(path: Path) -> TrajectoryBatch:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < BATCH_HEADER.size:
        raise batch_format_error(path, f"file is {len(raw)} bytes, shorter than the {BATCH_HEADER.size}-byte header")
    magic, regime_code, n, N, p1, seed, burn_in = BATCH_HEADER.unpack_from(raw, 0)
    if magic != BATCH_MAGIC:
        raise batch_format_error(path, f"bad magic {magic!r}")
    try:
        regime = Regime.from_code(regime_code)
    except KeyError as e:
        raise batch_format_error(path, f"unknown regime tag {regime_code}", cause=e)
    expected = n * N * p1 * 8
    payload = raw[BATCH_HEADER.size:]
    if len(payload) != expected:
        raise batch_format_error(
            path,
            f"shape mismatch: header says {n} x {N} x {p1} ({expected} bytes), payload has {len(payload)} bytes",
        )
    data = np.frombuffer(payload, dtype="<f8").reshape(n, N, p1).astype(np.float64)
    return TrajectoryBatch(regime=regime, data=data, seed=int(seed), burn_in=int(burn_in))


def export_batch_csv(batch: TrajectoryBatch, path: Path) -> None:
    """Long format: trajectory, k, x_1 .. x_{p+1} (1-based node labels)."""
    n, N, p1 = batch.data.shape
    frame = pd.DataFrame(batch.data.reshape(n * N, p1), columns=[f"x_{i + 1}" for i in range(p1)])
    frame.insert(0, "k", np.tile(np.arange(N), n))
    frame.insert(0, "trajectory", np.repeat(np.arange(1, n + 1), N))
    frame.to_csv(path, index=False, float_format="%.17g")
