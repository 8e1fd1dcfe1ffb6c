"""
report.py - Write experiment results: CSV tables, SVG plots, JSON manifest

Output directory layout:
    <out>/<table>.csv        one file per non-empty table
    <out>/<plot>.svg         error-vs-n, n_min-vs-log p, success curve
    <out>/manifest.json      config, constants, bounds, sha256 of every file

Nothing time-dependent is written, so rerunning a manifest reproduces every
byte (SVG ids are salted with a fixed string and the Date metadata is
dropped).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from wienernet import __version__  # noqa: E402
from wienernet.lds_sim import LdsModel  # noqa: E402
from wienernet.theory import ModelConstants, TheoryBounds, bounds_report  # noqa: E402

MANIFEST_NAME = "manifest.json"
SVG_SALT = "wienernet"


@dataclass
class RunResults:
    """Everything one CLI command produced."""
    command: str
    config: Dict[str, Any]
    constants: Optional[ModelConstants] = None
    bounds: List[TheoryBounds] = field(default_factory=list)
    model: Optional[LdsModel] = None
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    fit: Optional[Tuple[float, float]] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def compute_sha256(file_path: Path) -> str:
    """Compute SHA256 hash of a file."""
    sha256 = hashlib.sha256()
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            sha256.update(chunk)
    return sha256.hexdigest()


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats -> null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


# ============================================================================
# Plots
# ============================================================================

def _figure():
    plt.rcParams["svg.hashsalt"] = SVG_SALT
    return plt.subplots(figsize=(6.0, 4.0))


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_error_vs_n(frame: pd.DataFrame, path: Path) -> None:
    fig, ax = _figure()
    for column, label in (("regularized", "regularized Wiener"),
                          ("unregularized", "unregularized Wiener"),
                          ("cig", "CIG")):
        if column in frame:
            ax.plot(frame["n"], frame[column], marker="o", label=label)
    ax.set_xscale("log")
    ax.set_xlabel("n (trajectories)")
    ax.set_ylabel("mean relative error")
    ax.legend()
    _save(fig, path)


def plot_nmin_vs_logp(frame: pd.DataFrame, fit: Optional[Tuple[float, float]], path: Path) -> None:
    fig, ax = _figure()
    ax.plot(frame["log_p"], frame["n_min"], marker="o", linestyle="none", label="n_min")
    if fit is not None and all(math.isfinite(v) for v in fit):
        xs = np.linspace(float(frame["log_p"].min()), float(frame["log_p"].max()), 50)
        ax.plot(xs, fit[0] + fit[1] * xs, linestyle="--", label=f"fit {fit[0]:.3g} + {fit[1]:.3g} log p")
    ax.set_xlabel("log p")
    ax.set_ylabel("n_min")
    ax.legend()
    _save(fig, path)


def plot_success_curve(frame: pd.DataFrame, path: Path) -> None:
    fig, ax = _figure()
    ax.plot(frame["n"], frame["successes"], marker="o")
    if "trials" in frame:
        ax.axhline(float(frame["trials"].iloc[0]), linestyle=":", color="grey")
    ax.set_xscale("log")
    ax.set_xlabel("n (trajectories)")
    ax.set_ylabel("exact recoveries")
    _save(fig, path)


# ============================================================================
# Emission
# ============================================================================

def _write_table(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def emit_report(results: RunResults, out_dir: Path, plots: bool = True) -> List[Path]:
    """
    Write tables, plots and the manifest; returns the written paths
    (manifest last). Filesystem errors propagate.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    items = []

    for name in sorted(results.tables):
        frame = results.tables[name]
        if frame is None or frame.empty:
            continue
        path = out_dir / f"{name}.csv"
        _write_table(frame, path)
        written.append(path)

    if plots:
        tables = results.tables
        if "baselines" in tables and not tables["baselines"].empty:
            path = out_dir / "error_vs_n.svg"
            plot_error_vs_n(tables["baselines"], path)
            written.append(path)
        if "nmin_vs_p" in tables and not tables["nmin_vs_p"].dropna().empty:
            path = out_dir / "nmin_vs_logp.svg"
            plot_nmin_vs_logp(tables["nmin_vs_p"].dropna(), results.fit, path)
            written.append(path)
        if "success_curve" in tables and not tables["success_curve"].empty:
            path = out_dir / "success_curve.svg"
            plot_success_curve(tables["success_curve"], path)
            written.append(path)

    for path in written:
        items.append({
            "relative_path": path.name,
            "checksum": f"sha256:{compute_sha256(path)}",
            "size_bytes": path.stat().st_size,
        })

    manifest: Dict[str, Any] = {
        "version": __version__,
        "command": results.command,
        "config": results.config,
        "items": items,
    }
    if results.constants is not None:
        manifest["theory"] = bounds_report(results.constants, results.bounds, results.model)
    if results.fit is not None:
        manifest["fit"] = {"intercept": results.fit[0], "slope": results.fit[1]}
    if results.extra:
        manifest["extra"] = results.extra

    content = json.dumps(_plain({"config": results.config, "items": items}), sort_keys=True).encode("utf-8")
    manifest["content_hash"] = hashlib.sha256(content).hexdigest()

    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(manifest_path)
    return written
