"""
Marking strategies and the SOLVE -> ESTIMATE -> MARK -> REFINE driver.
"""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, MarkingError
from .estimation import ErrorIndicators, estimate_ees1, estimate_ees2, estimate_ees3
from .fem import DeterministicProblem, FieldSolution, solve_deterministic
from .mesh import Mesh, generate_structured, refine_leb

logger = logging.getLogger(__name__)

STRATEGIES = ("maximum", "doerfler")
CARRIERS = ("elements", "edges")
ESTIMATORS = ("ees1", "ees2", "ees3")
BUBBLES = ("linear", "quadratic", "quartic")
SUBDIVISIONS = ("bisec3", "red")
ELEMENT_EDGES = ("all", "reference")  # edges bisected for a marked element


@dataclass(frozen=True)
class MarkingConfig:
    strategy: str = "doerfler"
    theta: float = 0.5
    carrier: str = "elements"
    element_edges: str = "all"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown marking strategy '{self.strategy}'", "marking")
        if self.carrier not in CARRIERS:
            raise ConfigError(f"unknown marking carrier '{self.carrier}'", "carrier")
        if self.element_edges not in ELEMENT_EDGES:
            raise ConfigError(f"unknown element edge rule '{self.element_edges}'", "element_edges")
        low_ok = self.theta >= 0.0 if self.strategy == "maximum" else self.theta > 0.0
        if not (low_ok and self.theta <= 1.0):
            raise ConfigError(f"theta={self.theta} outside the admissible range", "theta")


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Error estimation strategy.

    bubble only matters for ees1. subdivision is the element
    sub-triangulation carrying the linear bubbles (ees1, default bisec3) or
    the detail hats (ees2/ees3, default red).
    """

    strategy: str = "ees2"
    bubble: str = "linear"
    subdivision: Optional[str] = None

    def __post_init__(self):
        if self.strategy not in ESTIMATORS:
            raise ConfigError(f"unknown estimator '{self.strategy}'", "estimator")
        if self.bubble not in BUBBLES:
            raise ConfigError(f"unknown bubble space '{self.bubble}'", "bubble")
        if self.subdivision is not None and self.subdivision not in SUBDIVISIONS:
            raise ConfigError(f"unknown subdivision '{self.subdivision}'", "subdivision")

    @property
    def sub_triangulation(self) -> str:
        if self.subdivision is not None:
            return self.subdivision
        return "bisec3" if self.strategy == "ees1" else "red"


def _values(indicators: Union[ErrorIndicators, np.ndarray]) -> np.ndarray:
    values = indicators.values if isinstance(indicators, ErrorIndicators) else indicators
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise MarkingError("cannot mark an empty indicator set")
    return values


def mark_maximum(indicators: Union[ErrorIndicators, np.ndarray], theta: float) -> np.ndarray:
    """
    Maximum strategy: every carrier with beta >= theta * max(beta).

    Returns:
        Sorted carrier ids
    """
    if not 0.0 <= theta <= 1.0:
        raise MarkingError(f"theta must lie in [0, 1], got {theta}")
    values = _values(indicators)
    return np.flatnonzero(values >= theta * values.max())


def mark_doerfler(indicators: Union[ErrorIndicators, np.ndarray], theta: float) -> np.ndarray:
    """
    Bulk criterion: smallest set with sum beta^2 >= theta * total.

    Carriers are taken in descending order of beta, ties by ascending id.

    Returns:
        Sorted carrier ids (empty, with a warning, for all-zero indicators)
    """
    if not 0.0 < theta <= 1.0:
        raise MarkingError(f"theta must lie in (0, 1], got {theta}")
    values = _values(indicators)
    order = np.lexsort((np.arange(values.size), -values))
    cumulative = np.cumsum(values[order] ** 2)
    total = cumulative[-1]
    if total == 0.0:
        logger.warning("All error indicators vanish, nothing to mark")
        return np.zeros(0, dtype=np.int64)
    count = min(int(np.searchsorted(cumulative, theta * total, side="left")) + 1, values.size)
    return np.sort(order[:count])


def mark(indicators: ErrorIndicators, config: MarkingConfig) -> np.ndarray:
    if config.strategy == "maximum":
        return mark_maximum(indicators, config.theta)
    return mark_doerfler(indicators, config.theta)


def elements_to_edges(mesh: Mesh, elements: np.ndarray, rule: str = "all") -> np.ndarray:
    """
    Edges to bisect for a set of marked elements.

    "all" takes every edge (bisec3 of each marked element), "reference" only
    the reference edge, so each marked element is bisected at least once.
    """
    edge_ids = mesh.edge_table.edge_of_triangle[np.asarray(elements, dtype=np.int64)]
    if rule == "reference":
        return np.unique(edge_ids[:, 2])
    if rule != "all":
        raise ConfigError(f"unknown element edge rule '{rule}'", "element_edges")
    return np.unique(edge_ids)


def estimate(
    config: EstimatorConfig,
    solution: FieldSolution,
    problem: DeterministicProblem,
    carrier: str = "elements",
) -> ErrorIndicators:
    """Run the configured estimator, localized on `carrier` where that is a choice."""
    mesh, space = solution.mesh, solution.space
    if config.strategy == "ees1":
        if carrier != "elements":
            raise ConfigError("ees1 only produces element indicators", "carrier")
        return estimate_ees1(mesh, space, solution, problem, config.bubble, config.sub_triangulation)
    if config.strategy == "ees2":
        return estimate_ees2(mesh, space, solution, problem, carrier, config.sub_triangulation)
    return estimate_ees3(mesh, space, solution, problem, carrier, config.sub_triangulation)


@dataclass
class IterationRecord:
    iteration: int
    dofs: int
    elements: int
    eta: float
    marked: int
    t_solve: float = 0.0
    t_estimate: float = 0.0
    t_mark: float = 0.0
    t_refine: float = 0.0


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{value:.17g}"
    if value is None:
        return ""
    return str(value)


@dataclass
class AdaptiveReport:
    """Per-iteration history of an adaptive run and its terminal status."""

    records: List = field(default_factory=list)
    status: str = "running"

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def final(self):
        return self.records[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(record, name) for record in self.records], dtype=float)

    def slope(self, last_fraction: float = 0.5, value: str = "eta") -> float:
        """Least-squares slope of log(value) against log(dofs) over the final iterations."""
        dofs = self.column("dofs")
        values = self.column(value)
        start = min(int(len(dofs) * (1.0 - last_fraction)), len(dofs) - 2)
        start = max(start, 0)
        return float(np.polyfit(np.log(dofs[start:]), np.log(values[start:]), 1)[0])

    def write_csv(self, path: Union[str, Path]) -> None:
        """One row per iteration with a header, floats at 17 significant digits."""
        if not self.records:
            raise ValueError("empty report")
        names = [f.name for f in fields(self.records[0])]
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(names)
            for record in self.records:
                row = asdict(record)
                writer.writerow([_format(row[name]) for name in names])


def adaptive_solve(
    problem: DeterministicProblem,
    order: int = 1,
    estimator: EstimatorConfig = EstimatorConfig(),
    marking: MarkingConfig = MarkingConfig(),
    tol: float = 1e-3,
    max_iter: int = 50,
    mesh: Optional[Mesh] = None,
) -> Tuple[FieldSolution, Mesh, AdaptiveReport]:
    """
    Adaptive loop until the total estimate drops below `tol`.

    Element markings are turned into edge markings following
    marking.element_edges: all three edges of every marked element by
    default, or only their reference edges. Hitting max_iter is reported
    through report.status == "max_iter" rather than raised.

    Returns:
        (final solution, final mesh, report)
    """
    if tol <= 0.0:
        raise ConfigError(f"tolerance must be positive, got {tol}", "tol")
    mesh = mesh if mesh is not None else generate_structured(problem.domain, 0)
    report = AdaptiveReport()
    iteration = 0
    while True:
        started = time.perf_counter()
        solution = solve_deterministic(problem, mesh, order)
        solved = time.perf_counter()
        indicators = estimate(estimator, solution, problem, marking.carrier)
        estimated = time.perf_counter()
        record = IterationRecord(
            iteration,
            solution.space.num_free,
            mesh.num_triangles,
            indicators.total,
            0,
            t_solve=solved - started,
            t_estimate=estimated - solved,
        )
        report.records.append(record)
        if indicators.total <= tol:
            report.status = "converged"
            logger.info(
                f"Iteration {iteration}: {record.dofs} dofs, estimate {record.eta:.4e} <= tol {tol:.1e}"
            )
            break
        if iteration >= max_iter:
            report.status = "max_iter"
            logger.warning(f"Stopped after {max_iter} iterations with estimate {record.eta:.4e}")
            break

        marked = mark(indicators, marking)
        if marking.carrier == "elements":
            edges = elements_to_edges(mesh, marked, marking.element_edges)
        else:
            edges = marked
        marked_at = time.perf_counter()
        mesh, _ = refine_leb(mesh, edges)
        record.marked = len(marked)
        record.t_mark = marked_at - estimated
        record.t_refine = time.perf_counter() - marked_at
        logger.info(
            f"Iteration {iteration}: {record.dofs} dofs, estimate {record.eta:.4e}, "
            f"marked {record.marked} {marking.carrier}"
        )
        iteration += 1
    return solution, mesh, report
