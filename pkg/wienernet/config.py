# config.py - Experiment configuration for wienernet
"""
wienernet experiment configuration with YAML/JSON file support.

Configuration Resolution Order (lowest to highest priority):
1. Built-in defaults (ExperimentConfig field defaults)
2. ~/.wienernet/config.yaml (global defaults)
3. --config <path> (YAML or JSON; JSON is valid YAML)
4. Environment variables (WIENERNET_SEED, WIENERNET_OUT, WIENERNET_TRIALS,
   WIENERNET_EPSILON, WIENERNET_WORKERS)
5. Command-line flags (passed to load_config as overrides)

Usage:
    from wienernet.config import load_config

    config = load_config(Path("grid3.yaml"), overrides={"seed": 7})
    print(config.epsilon, config._sources["seed"])
"""

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from wienernet.errors import ConfigurationError
from wienernet.icons import log_warning
from wienernet.lds_sim import parse_regime

GRAPH_KINDS = {"grid", "chain", "complete", "tree", "file"}
WEIGHT_RULES = {"random", "uniform"}
LAMBDA_RULES = {"theorem", "theorem_iid", "theorem_consecutive", "calibrated", "fixed", "grid"}
THRESHOLD_RULES = {"margin", "gap"}


@dataclass
class GraphSpec:
    kind: str = "grid"
    rows: int = 3
    cols: int = 3
    size: int = 9
    seed: int = 0
    edges_file: Optional[str] = None


@dataclass
class ModelSpec:
    weight_rule: str = "random"
    weight_low: float = 0.2
    weight_high: float = 1.0
    self_weight: float = 0.5
    target_radius: float = 0.69
    ma_coeffs: Tuple[float, float] = (1.0, -0.3)
    gain: float = 1.0
    gain_jitter: float = 0.0
    seed: int = 0


@dataclass
class SolverSpec:
    tol: float = 1e-8
    max_iters: int = 50_000
    power_iters: int = 30


@dataclass
class ExperimentConfig:
    """Complete experiment configuration"""
    graph: GraphSpec = field(default_factory=GraphSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)

    # Sampling
    regime: str = "restart_record"
    N: Optional[int] = None            # None -> N_min from the model constants
    frequency: Optional[float] = None  # None -> 2*pi/N

    # Estimation
    epsilon: float = 0.05
    lambda_rule: str = "calibrated"
    lambda_value: Optional[float] = None
    kappa_cal: float = 1.0
    threshold_rule: str = "margin"
    cig_threshold: Optional[float] = None
    universal_constants: Tuple[float, float] = (1.0, 1.0)
    min_decay_rate: float = 0.1
    reference_N: Optional[float] = None

    # Experiment
    n_values: List[int] = field(default_factory=list)
    search_start: int = 16
    search_stop: int = 131_072
    trials: int = 45
    required_successes: Optional[int] = None
    seed: int = 0
    workers: int = 1
    out: Path = Path("results")

    # Extra settings from config file
    extra: Dict[str, Any] = field(default_factory=dict)

    # Track where values came from (for debugging)
    _sources: Dict[str, str] = field(default_factory=dict)

    @property
    def success_target(self) -> int:
        return self.trials if self.required_successes is None else self.required_successes

    def to_dict(self) -> Dict[str, Any]:
        """Plain dict for manifests (sources and extras excluded)."""
        def plain(obj):
            out = {}
            for f in fields(obj):
                if f.name in {"extra", "_sources"}:
                    continue
                value = getattr(obj, f.name)
                if hasattr(value, "__dataclass_fields__"):
                    value = plain(value)
                elif isinstance(value, Path):
                    value = str(value)
                elif isinstance(value, tuple):
                    value = list(value)
                out[f.name] = value
            return out
        return plain(self)


SECTIONS = {"graph": GraphSpec, "model": ModelSpec, "solver": SolverSpec}

ENV_VARS = {
    "WIENERNET_SEED": "seed",
    "WIENERNET_OUT": "out",
    "WIENERNET_TRIALS": "trials",
    "WIENERNET_EPSILON": "epsilon",
    "WIENERNET_WORKERS": "workers",
}


def _coerce(template: Any, value: Any, key: str) -> Any:
    """Convert value to the type of the field default."""
    if value is None:
        return None
    if isinstance(template, bool):
        if isinstance(value, str):
            return value.lower() in {"1", "true", "yes", "on"}
        return bool(value)
    if isinstance(template, int) and not isinstance(template, bool):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, Path):
        return Path(value).expanduser()
    if isinstance(template, tuple):
        items = [float(v) for v in value]
        if len(items) != len(template):
            raise ValueError(f"{key} needs {len(template)} values, got {len(items)}")
        return tuple(items)
    if isinstance(template, list):
        return [int(v) for v in value]
    return value


# Optional fields whose default is None; coerce to these types when set
OPTIONAL_TYPES = {
    "N": int,
    "frequency": float,
    "lambda_value": float,
    "cig_threshold": float,
    "reference_N": float,
    "required_successes": int,
    "edges_file": str,
}


class ConfigLoader:
    """Load configuration from multiple sources"""

    def __init__(self, config_path: Optional[Path] = None, home: Optional[Path] = None):
        self.config_path = Path(config_path) if config_path else None
        self.home = Path(home) if home else Path.home()
        self.config = ExperimentConfig()
        self.issues: List[str] = []

    def load(self, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        """Load configuration from all sources in priority order"""
        self._load_global_config()
        self._load_config_file()
        self._load_env_vars()
        if overrides:
            self._apply(overrides, "cli")
        self._validate()
        return self.config

    def _load_global_config(self):
        """Load ~/.wienernet/config.yaml if it exists"""
        global_config = self.home / ".wienernet" / "config.yaml"
        if global_config.exists():
            self._load_file(global_config, "global")

    def _load_config_file(self):
        if self.config_path is None:
            return
        if not self.config_path.exists():
            raise ConfigurationError(
                message=f"Config file not found: {self.config_path}",
                suggestion="Create one with:\n  wienernet init --out experiment.yaml",
                context={"path": str(self.config_path)},
            )
        self._load_file(self.config_path, self.config_path.name)

    def _load_file(self, path: Path, source_name: str):
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(
                message=f"Failed to parse {path.name}",
                suggestion="Config files are YAML (JSON is accepted too).",
                context={"path": str(path)},
                cause=e,
            )
        if not isinstance(data, dict):
            raise ConfigurationError(
                message=f"{path.name} must contain a mapping at the top level",
                context={"path": str(path), "found": type(data).__name__},
            )
        self._apply(data, source_name)

    def _apply(self, data: Dict[str, Any], source_name: str):
        """Map keys (nested sections or dotted 'graph.rows' names) onto the config"""
        for key, value in data.items():
            if key in SECTIONS and isinstance(value, dict):
                for sub_key, sub_value in value.items():
                    self._set(f"{key}.{sub_key}", sub_value, source_name)
            else:
                self._set(key, value, source_name)

    def _set(self, key: str, value: Any, source_name: str):
        target: Any = self.config
        attr = key
        if "." in key:
            section, attr = key.split(".", 1)
            if section not in SECTIONS:
                self._unknown(key, value, source_name)
                return
            target = getattr(self.config, section)
        names = {f.name for f in fields(target)} - {"extra", "_sources"} - set(SECTIONS)
        if attr not in names:
            self._unknown(key, value, source_name)
            return
        if attr == "lambda_rule" and str(value).startswith("fixed:"):
            value, fixed = parse_lambda_rule(str(value))
            self.config.lambda_value = fixed
            self.config._sources["lambda_value"] = source_name
        template = getattr(type(target)(), attr) if attr not in OPTIONAL_TYPES else None
        try:
            if attr in OPTIONAL_TYPES:
                coerced = None if value is None else OPTIONAL_TYPES[attr](value)
            else:
                coerced = _coerce(template, value, key)
        except (TypeError, ValueError) as e:
            self.issues.append(f"{key}: cannot use {value!r} ({e}) [from {source_name}]")
            return
        setattr(target, attr, coerced)
        self.config._sources[key] = source_name

    def _unknown(self, key: str, value: Any, source_name: str):
        self.config.extra[key] = value
        print(log_warning(f"Unknown setting '{key}' in {source_name} (kept in extra)", prefix="config"))

    def _load_env_vars(self):
        """Load from environment variables"""
        for env_name, key in ENV_VARS.items():
            raw = os.environ.get(env_name)
            if raw is not None and raw != "":
                self._set(key, raw, f"env:{env_name}")

    def _validate(self):
        c = self.config
        issues = self.issues

        if not 0.0 < c.epsilon < 0.5:
            issues.append(f"epsilon must lie in (0, 0.5), got {c.epsilon}")
        if c.trials < 1:
            issues.append(f"trials must be >= 1, got {c.trials}")
        if c.required_successes is not None and not 1 <= c.required_successes <= c.trials:
            issues.append(f"required_successes must lie in [1, trials={c.trials}], got {c.required_successes}")
        if c.search_start < 1 or c.search_stop < c.search_start:
            issues.append(f"search range [{c.search_start}, {c.search_stop}] is empty")
        if any(n < 1 for n in c.n_values):
            issues.append(f"n_values must be positive, got {c.n_values}")
        if c.N is not None and c.N < 1:
            issues.append(f"N must be >= 1, got {c.N}")
        if c.workers < 1:
            issues.append(f"workers must be >= 1, got {c.workers}")
        try:
            parse_regime(c.regime)
        except ValueError as e:
            issues.append(str(e))

        if c.lambda_rule not in LAMBDA_RULES:
            issues.append(f"lambda_rule must be one of {sorted(LAMBDA_RULES)}, got {c.lambda_rule!r}")
        if c.lambda_rule == "fixed" and (c.lambda_value is None or c.lambda_value < 0):
            issues.append("lambda_rule 'fixed' needs lambda_value >= 0")
        if c.kappa_cal <= 0:
            issues.append(f"kappa_cal must be positive, got {c.kappa_cal}")
        if c.threshold_rule not in THRESHOLD_RULES:
            issues.append(f"threshold_rule must be one of {sorted(THRESHOLD_RULES)}, got {c.threshold_rule!r}")
        if not 0.0 < c.min_decay_rate < 1.0:
            issues.append(f"min_decay_rate must lie in (0, 1), got {c.min_decay_rate}")

        g = c.graph
        if g.kind not in GRAPH_KINDS:
            issues.append(f"graph.kind must be one of {sorted(GRAPH_KINDS)}, got {g.kind!r}")
        if g.kind == "grid" and (g.rows < 1 or g.cols < 1):
            issues.append(f"graph grid needs positive rows/cols, got {g.rows} x {g.cols}")
        if g.kind in {"chain", "complete", "tree"} and g.size < 1:
            issues.append(f"graph.size must be >= 1, got {g.size}")
        if g.kind == "file" and not g.edges_file:
            issues.append("graph.kind 'file' needs graph.edges_file")

        m = c.model
        if m.weight_rule not in WEIGHT_RULES:
            issues.append(f"model.weight_rule must be one of {sorted(WEIGHT_RULES)}, got {m.weight_rule!r}")
        if not 0.0 <= m.target_radius < 1.0:
            issues.append(f"model.target_radius must lie in [0, 1), got {m.target_radius}")
        if m.gain <= 0:
            issues.append(f"model.gain must be positive, got {m.gain}")
        if not 0.0 <= m.gain_jitter < 1.0:
            issues.append(f"model.gain_jitter must lie in [0, 1), got {m.gain_jitter}")
        if m.weight_low > m.weight_high:
            issues.append(f"model.weight_low {m.weight_low} exceeds weight_high {m.weight_high}")

        s = c.solver
        if s.tol <= 0 or s.max_iters < 1 or s.power_iters < 1:
            issues.append("solver.tol must be positive and solver.max_iters, solver.power_iters >= 1")

        if issues:
            raise ConfigurationError(
                message=f"Invalid experiment configuration ({len(issues)} issue(s))",
                suggestion="Fix the following:\n" + "\n".join(f"  - {issue}" for issue in issues),
                context={"sources": dict(c._sources)},
            )


# ============================================================================
# Public API
# ============================================================================

def load_config(
    config_path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
    home: Optional[Path] = None,
) -> ExperimentConfig:
    """
    Get the complete experiment configuration.

    Args:
        config_path: Optional YAML/JSON file (the --config flag)
        overrides: Highest-priority values, keyed by field name or
            dotted section name ('graph.rows'); None values are ignored
        home: Directory holding .wienernet/ (defaults to the user home)

    Raises:
        ConfigurationError: listing every schema issue found
    """
    cleaned = {k: v for k, v in (overrides or {}).items() if v is not None}
    return ConfigLoader(config_path, home).load(cleaned)


def parse_lambda_rule(value: str) -> Tuple[str, Optional[float]]:
    """'fixed:0.01' -> ('fixed', 0.01); other rules carry no value."""
    if value.startswith("fixed:"):
        try:
            return "fixed", float(value.split(":", 1)[1])
        except ValueError as e:
            raise ConfigurationError(
                message=f"Cannot parse lambda rule {value!r}",
                suggestion="Use --lambda-rule fixed:<value>, e.g. fixed:0.01",
                cause=e,
            )
    return value, None


def create_config_template(include_comments: bool = True) -> str:
    """
    Generate an experiment YAML template.

    Returns:
        YAML string ready to write to file
    """
    if include_comments:
        return '''# wienernet experiment configuration
# Priority: defaults < ~/.wienernet/config.yaml < this file < WIENERNET_* env < CLI flags

graph:
  kind: grid          # grid | chain | complete | tree | file
  rows: 3
  cols: 3
  # size: 9           # chain / complete / tree
  # edges_file: g.txt # kind: file (0-based edge list)

model:
  weight_rule: random # random (asymmetric positive) | uniform
  target_radius: 0.69  # spectral radius of h; delta_inv lands just above it
  ma_coeffs: [1.0, -0.3]
  gain: 1.0
  gain_jitter: 0.0
  seed: 0

solver:
  tol: 1.0e-8         # KKT residual
  max_iters: 50000

regime: restart_record  # restart_record (iid) | consecutive
# N: 128              # samples per trajectory; default N_min from the model
# frequency: 0.049    # default 2*pi/N
epsilon: 0.05
lambda_rule: calibrated # theorem | theorem_iid | theorem_consecutive | calibrated | fixed | grid
kappa_cal: 1.0
threshold_rule: margin  # margin (tau1 = tau2 = m) | gap (largest-gap heuristic)

trials: 45
search_start: 16
search_stop: 131072
seed: 0
workers: 1
out: results
'''
    return '''graph:
  kind: grid
  rows: 3
  cols: 3
model:
  weight_rule: random
  target_radius: 0.69
regime: restart_record
epsilon: 0.05
lambda_rule: calibrated
trials: 45
seed: 0
out: results
'''
