"""Solve configuration: defaults, JSON loading and validation."""
import dataclasses
import json
import logging
from dataclasses import dataclass, field

from .errors import ConfigError
from .ml import ForestConfig
from .qsim import DEFAULT_SHOTS, NoiseModel
from .qubo import DEFAULT_ALPHA

logger = logging.getLogger(__name__)

METHODS = ("classical", "quantum", "quantum_ml", "hybrid", "hybrid_ml")
ENCODINGS = ("auto", "qubo", "compact")


def normalize_method(name):
    """Accept the command-line spelling ``quantum-ml`` as well as ``quantum_ml``."""
    method = str(name).strip().lower().replace("-", "_")
    if method not in METHODS:
        raise ConfigError(f"Unknown method {name!r}; choose from {', '.join(METHODS)}")
    return method


def _forest_config(value):
    if value is None:
        return ForestConfig()
    if isinstance(value, ForestConfig):
        return value
    try:
        return ForestConfig(**value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"Bad forest settings {value!r}: {err}") from err


def _noise_model(value):
    if value is None or value is False:
        return None
    if value is True:
        return NoiseModel()
    if isinstance(value, NoiseModel):
        return value
    try:
        return NoiseModel.from_dict(value)
    except (TypeError, ValueError, AttributeError) as err:
        raise ConfigError(f"Bad noise settings {value!r}: {err}") from err


@dataclass(frozen=True)
class SolveConfig:
    """Everything one solve needs besides the instance.

    Attributes
    ----------
    method: str
        classical, quantum, quantum_ml, hybrid or hybrid_ml
    encoding: str
        qubo, compact, or auto (qubo while it needs at most 16 qubits)
    p: int
        QAOA layers
    shots: int
        measurements in the final sampling
    max_iters: int
        objective evaluations allowed to the optimizer, over all restarts
    cost_threshold: float or None
        stop optimizing once a sampled tour is at most this many km
    alpha: float
        penalty multiplier of the QUBO encoding
    noise: NoiseModel or None
    k: int
        clusters in the hybrid methods
    ml_runs: int
        quantum runs pooled to train the cost forest
    seed: int
    restarts: int
        Nelder-Mead starts sharing the max_iters budget
    stall_evals: int
        evaluations without a 1e-6 km improvement that end a start
    noise_trajectories: int
        Pauli-error trajectories the noisy shots are split over
    ml_shortlist: int or None
        price only the first K re-ranked candidates, plus the tours the
        plain quantum and hybrid methods would pick; None prices them all
    variants_per_cluster: int
        sampled paths per cluster kept for stitched variants
    archive_path: str or None
        JSON-lines parameter archive for ML-informed starts
    forest: ForestConfig
    min_cities, max_cities: int
        accepted instance sizes
    """
    method: str = "quantum"
    encoding: str = "auto"
    p: int = 1
    shots: int = DEFAULT_SHOTS
    max_iters: int = 100
    cost_threshold: float = None
    alpha: float = DEFAULT_ALPHA
    noise: NoiseModel = None
    k: int = 3
    ml_runs: int = 50
    seed: int = 0
    restarts: int = 3
    stall_evals: int = 10
    noise_trajectories: int = 8
    ml_shortlist: int = 5
    variants_per_cluster: int = 3
    archive_path: str = None
    forest: ForestConfig = field(default_factory=ForestConfig)
    min_cities: int = 4
    max_cities: int = 8

    def __post_init__(self):
        object.__setattr__(self, "method", normalize_method(self.method))
        object.__setattr__(self, "noise", _noise_model(self.noise))
        object.__setattr__(self, "forest", _forest_config(self.forest))
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"Unknown encoding {self.encoding!r}; choose from {', '.join(ENCODINGS)}")

        positive = ("p", "shots", "max_iters", "k", "ml_runs", "restarts",
                    "stall_evals", "noise_trajectories", "variants_per_cluster")
        for name in positive:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.alpha < 1:
            raise ConfigError(f"Penalty multiplier alpha={self.alpha} must be >= 1")
        if self.cost_threshold is not None and self.cost_threshold <= 0:
            raise ConfigError("cost_threshold must be positive")
        if self.ml_shortlist is not None and self.ml_shortlist < 1:
            raise ConfigError("ml_shortlist must be at least 1")
        if not 3 <= self.min_cities <= self.max_cities:
            raise ConfigError(f"City range [{self.min_cities}, {self.max_cities}] is empty or below 3")

    @classmethod
    def from_dict(cls, d):
        """Build from a mapping with the attribute names as keys."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    def replace(self, **overrides):
        """A copy with some fields changed; overrides that are None are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return SolveConfig.from_dict({**self._fields(), **changes})

    def _fields(self):
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def to_dict(self):
        out = self._fields()
        out["noise"] = None if self.noise is None else self.noise.to_dict()
        out["forest"] = self.forest.to_dict()
        return out


def load_config(path, **overrides):
    """Read a JSON configuration file, then apply any non-None overrides.

    Parameters
    ----------
    path: str or Path or None
        None means start from the defaults
    **overrides:
        field values, typically from the command line

    Returns
    -------
    config: SolveConfig
    """
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                values = json.load(f)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"Cannot read configuration {path}: {err}") from err
        if not isinstance(values, dict):
            raise ConfigError(f"Configuration {path} must hold a JSON object")
        logger.debug("Loaded configuration from %s", path)
    return SolveConfig.from_dict(values).replace(**overrides)
