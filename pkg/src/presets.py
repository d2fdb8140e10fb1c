"""
Run configuration: JSON parsing, validation and the four case-study presets.

A configuration names a preset or "custom". A preset fixes the problem
definition (domain, data, coefficient), which replaces any problem fields
given in the file; algorithm settings given in the file (tol, theta,
max_iter, ...) take precedence over the preset's defaults.
"""

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np

from .adaptivity import (
    BUBBLES,
    CARRIERS,
    ELEMENT_EDGES,
    ESTIMATORS,
    STRATEGIES,
    SUBDIVISIONS,
    EstimatorConfig,
    MarkingConfig,
)
from .errors import ConfigError
from .fem import Coefficient, DeterministicProblem
from .goal import COMBINATORS
from .mesh import DomainKind
from .sgfem.adaptive import VERSIONS
from .sgfem.assembly import StochasticProblem
from .sgfem.coefficients import EXPANSIONS, ParametricCoefficient
from .sgfem.measures import MEASURES, MeasureFamily

SCHEMA_VERSION = 1
MODES = ("deterministic", "goafem", "sgfem")
PRESETS = ("example1", "example2", "example3", "example4", "custom")
DOMAINS = ("square", "lshape", "slit")


def _one(points: np.ndarray) -> np.ndarray:
    return np.ones(len(points))


def _zero(points: np.ndarray) -> np.ndarray:
    return np.zeros(len(points))


def _edge_singular(points: np.ndarray) -> np.ndarray:
    """(1 - x1)^-0.4, singular along x1 = 1."""
    return (1.0 - points[:, 0]) ** -0.4


def _quadratic_boundary(points: np.ndarray) -> np.ndarray:
    """(1 - x1)^2."""
    return (1.0 - points[:, 0]) ** 2


SOURCES: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": _one,
    "zero": _zero,
    "edge_singular": _edge_singular,
}
BOUNDARY_DATA: Dict[str, Optional[Callable[[np.ndarray], np.ndarray]]] = {
    "zero": None,
    "quadratic": _quadratic_boundary,
}

PROBLEM_FIELDS = (
    "mode",
    "domain",
    "slit_delta",
    "level",
    "diffusion",
    "source",
    "dirichlet",
    "point",
    "x0",
    "radius",
    "expansion",
    "decay",
    "sigma",
    "lengths",
    "correlation",
    "mean",
    "measure",
    "sigma0",
)


@dataclass(frozen=True)
class RunConfig:
    schema: int = SCHEMA_VERSION
    mode: str = "deterministic"
    preset: str = "custom"
    # problem
    domain: str = "square"
    slit_delta: float = 0.005
    level: int = 0
    diffusion: Any = 1.0  # positive scalar or symmetric 2x2 matrix
    source: str = "one"
    dirichlet: str = "zero"
    point: Optional[Tuple[float, float]] = None  # point value reported in the summary
    # deterministic and goal-oriented
    order: int = 1
    estimator: str = "ees2"
    bubble: str = "linear"
    subdivision: Optional[str] = None
    marking: str = "doerfler"
    theta: float = 0.5
    carrier: str = "elements"
    element_edges: str = "all"
    x0: Tuple[float, float] = (0.4, -0.5)
    radius: float = 0.2
    combinator: str = "GO4"
    reference: bool = False
    # stochastic
    expansion: str = "ce2"
    decay: float = 2.0
    sigma: float = 1.0
    lengths: Tuple[float, float] = (1.0, 1.0)
    correlation: float = 1.0
    mean: float = 1.0
    measure: str = "uniform"
    sigma0: float = 1.0
    theta_x: float = 0.7
    theta_p: float = 0.9
    extra: int = 1
    version: int = 2
    # loop and output
    tol: float = 1e-3
    max_iter: int = 50
    output_dir: Optional[str] = None

    def __post_init__(self):
        validate(self)


PRESET_VALUES: Dict[str, Dict[str, Any]] = {
    # anisotropic diffusion on the square, P1 with the hierarchical estimator,
    # 128 initial triangles, marked elements bisected at their reference edge
    "example1": {
        "mode": "deterministic",
        "domain": "square",
        "level": 2,
        "diffusion": [[1.0, 0.0], [0.0, 100.0]],
        "source": "one",
        "dirichlet": "zero",
        "order": 1,
        "estimator": "ees2",
        "theta": 0.5,
        "element_edges": "reference",
        "tol": 1e-3,
    },
    # harmonic function on the L-shape, point value near the reentrant corner
    "example2": {
        "mode": "deterministic",
        "domain": "lshape",
        "level": 1,
        "diffusion": 1.0,
        "source": "zero",
        "dirichlet": "quadratic",
        "point": (0.01, 0.01),
        "order": 2,
        "estimator": "ees1",
        "bubble": "quartic",
        "theta": 0.5,
        "tol": 4e-5,
        "max_iter": 60,
    },
    # mollified point value on the slit domain
    "example3": {
        "mode": "goafem",
        "domain": "slit",
        "slit_delta": 0.005,
        "level": 1,
        "diffusion": 1.0,
        "source": "one",
        "dirichlet": "zero",
        "x0": (0.4, -0.5),
        "radius": 0.2,
        "estimator": "ees3",
        "theta": 0.3,
        "combinator": "GO4",
        "tol": 8e-5,
    },
    # parametric diffusion on the L-shape, 96 initial triangles
    "example4": {
        "mode": "sgfem",
        "domain": "lshape",
        "level": 2,
        "source": "edge_singular",
        "expansion": "ce2",
        "decay": 2.0,
        "measure": "truncated_gaussian",
        "sigma0": 1.0,
        "estimator": "ees3",
        "theta_x": 0.7,
        "theta_p": 0.9,
        "extra": 1,
        "version": 2,
        "tol": 1.5e-2,
        "max_iter": 40,
    },
}


def _choice(value, allowed, key):
    if value not in allowed:
        raise ConfigError(f"'{value}' is not one of {', '.join(map(str, allowed))}", key)


def validate(config: RunConfig) -> None:
    """
    Raises:
        ConfigError: naming the first offending key
    """
    if config.schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {config.schema}, expected {SCHEMA_VERSION}", "schema")
    _choice(config.mode, MODES, "mode")
    _choice(config.preset, PRESETS, "preset")
    _choice(config.domain, DOMAINS, "domain")
    _choice(config.source, tuple(SOURCES), "source")
    _choice(config.dirichlet, tuple(BOUNDARY_DATA), "dirichlet")
    _choice(config.order, (1, 2), "order")
    _choice(config.estimator, ESTIMATORS, "estimator")
    _choice(config.bubble, BUBBLES, "bubble")
    if config.subdivision is not None:
        _choice(config.subdivision, SUBDIVISIONS, "subdivision")
    _choice(config.marking, STRATEGIES, "marking")
    _choice(config.carrier, CARRIERS, "carrier")
    _choice(config.element_edges, ELEMENT_EDGES, "element_edges")
    _choice(config.combinator, COMBINATORS, "combinator")
    _choice(config.expansion, EXPANSIONS, "expansion")
    _choice(config.measure, MEASURES, "measure")
    _choice(config.version, VERSIONS, "version")
    if not config.tol > 0.0:
        raise ConfigError(f"must be positive, got {config.tol}", "tol")
    if config.max_iter < 0:
        raise ConfigError(f"must be nonnegative, got {config.max_iter}", "max_iter")
    if config.level < 0:
        raise ConfigError(f"must be nonnegative, got {config.level}", "level")
    if config.extra < 1:
        raise ConfigError(f"must be >= 1, got {config.extra}", "extra")
    if not config.radius > 0.0:
        raise ConfigError(f"must be positive, got {config.radius}", "radius")
    low = 0.0 if config.marking == "maximum" else np.nextafter(0.0, 1.0)
    for key in ("theta", "theta_x", "theta_p"):
        value = getattr(config, key)
        if not low <= value <= 1.0:
            raise ConfigError(f"outside the admissible range for {config.marking} marking, got {value}", key)
    if config.mode == "sgfem" and config.order != 1:
        raise ConfigError("stochastic runs are estimated with P1 elements only", "order")
    if config.mode == "sgfem" and config.estimator not in ("ees1", "ees3"):
        raise ConfigError(f"stochastic runs support ees1 and ees3, got '{config.estimator}'", "estimator")
    if config.mode == "goafem" and config.estimator not in ("ees2", "ees3"):
        raise ConfigError(f"goal-oriented runs need an edge estimator, got '{config.estimator}'", "estimator")
    diffusion = np.asarray(config.diffusion, dtype=float)
    if diffusion.shape not in ((), (2, 2)):
        raise ConfigError("must be a scalar or a 2x2 matrix", "diffusion")


def _tuples(values: Dict[str, Any]) -> Dict[str, Any]:
    converted = dict(values)
    for key in ("point", "x0", "lengths"):
        if converted.get(key) is not None:
            value = converted[key]
            if not isinstance(value, (list, tuple)) or len(value) != 2:
                raise ConfigError("expected a pair of numbers", key)
            converted[key] = tuple(float(v) for v in value)
    return converted


def config_from_dict(document: Dict[str, Any]) -> RunConfig:
    """
    Build a RunConfig from a parsed JSON object.

    Raises:
        ConfigError: for unknown keys, bad types or invalid values
    """
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in document:
        if key not in known:
            raise ConfigError("unknown configuration key", key)
    values = dict(document)
    preset = values.get("preset", "custom")
    _choice(preset, PRESETS, "preset")
    if preset != "custom":
        defaults = PRESET_VALUES[preset]
        settings = {k: v for k, v in defaults.items() if k not in PROBLEM_FIELDS}
        problem = {k: v for k, v in defaults.items() if k in PROBLEM_FIELDS}
        values = {**settings, **values, **problem}
    try:
        return RunConfig(**_tuples(values))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value: {exc}") from exc


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Read and validate a JSON run configuration.

    Raises:
        ConfigError: if the file is missing, is not valid JSON or fails validation
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(document)


def preset_config(name: str, **overrides) -> RunConfig:
    """Configuration of a named preset with algorithm settings overridden."""
    return config_from_dict({"preset": name, **overrides})


def build_domain(config: RunConfig) -> DomainKind:
    if config.domain == "square":
        return DomainKind.square()
    if config.domain == "lshape":
        return DomainKind.lshape()
    return DomainKind.slit(config.slit_delta)


def build_coefficient(config: RunConfig) -> Coefficient:
    diffusion = np.asarray(config.diffusion, dtype=float)
    if diffusion.shape == ():
        return Coefficient.constant(float(diffusion))
    return Coefficient.tensor(diffusion)


def build_problem(config: RunConfig) -> DeterministicProblem:
    return DeterministicProblem(
        build_domain(config),
        build_coefficient(config),
        SOURCES[config.source],
        BOUNDARY_DATA[config.dirichlet],
    )


def build_stochastic_problem(config: RunConfig) -> StochasticProblem:
    measure = MeasureFamily(config.measure, config.sigma0)
    coefficient = ParametricCoefficient(
        config.expansion,
        measure,
        decay=config.decay,
        sigma=config.sigma,
        lengths=config.lengths,
        correlation=config.correlation,
        mean=config.mean,
    )
    return StochasticProblem(build_domain(config), coefficient, SOURCES[config.source])


def estimator_config(config: RunConfig) -> EstimatorConfig:
    return EstimatorConfig(config.estimator, config.bubble, config.subdivision)


def marking_config(config: RunConfig) -> MarkingConfig:
    carrier = "elements" if config.estimator == "ees1" else config.carrier
    return MarkingConfig(config.marking, config.theta, carrier, config.element_edges)


def with_output(config: RunConfig, output_dir: Optional[str]) -> RunConfig:
    return replace(config, output_dir=output_dir) if output_dir else config
