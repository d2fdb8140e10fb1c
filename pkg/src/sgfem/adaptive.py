"""
Adaptive SGFEM driver.

Every iteration estimates both error components, Doerfler-marks edges (or
elements) and candidate indices, then refines exactly one component.
Version 1 refines the component with the larger error estimate; version 2
the one whose marked indicators promise the larger error reduction.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from ..adaptivity import ELEMENT_EDGES, AdaptiveReport, elements_to_edges, mark_doerfler, mark_maximum
from ..errors import ConfigError
from ..mesh import Mesh, generate_structured, refine_leb
from ..sparse_linalg import MINRES_MAXIT, MINRES_TOL
from .assembly import SgfemSolution, StochasticProblem, assemble_sgfem, solve_sgfem
from .estimation import SPATIAL_STRATEGIES, SgfemEstimate, estimate_sgfem
from .indices import MultiIndex, MultiIndexSet

logger = logging.getLogger(__name__)

VERSIONS = (1, 2)


@dataclass
class SgfemRecord:
    iteration: int
    n_x: int
    n_p: int
    dofs: int
    elements: int
    eta: float
    e_x: float
    e_p: float
    refinement: str = ""
    minres_iters: int = 0
    marked: int = 0
    t_solve: float = 0.0
    t_estimate: float = 0.0


@dataclass
class SgfemReport(AdaptiveReport):
    """
    History of an adaptive SGFEM run.

    index_history holds (iteration, indices added after that iteration),
    starting with (0, initial set).
    """

    index_history: List[Tuple[int, List[MultiIndex]]] = field(default_factory=list)
    minres_histories: List[List[float]] = field(default_factory=list)

    def index_lines(self, width: Optional[int] = None) -> List[str]:
        """Index-set evolution, one padded multi-index per line."""
        width = width or max(
            (nu.max_position for _, added in self.index_history for nu in added), default=1
        )
        width = max(width, 1)
        lines = []
        for iteration, added in self.index_history:
            for k, nu in enumerate(added):
                label = str(iteration) if k == 0 else ""
                lines.append(f"{label:>4}  (" + " ".join(str(v) for v in nu.dense(width)) + ")")
        return lines

    def write_index_log(self, path: Union[str, Path]) -> None:
        Path(path).write_text("\n".join(self.index_lines()) + "\n")

    def write_minres_csv(self, path: Union[str, Path]) -> None:
        """iteration, MINRES iterations, final relative residual."""
        lines = ["iteration,minres_iters,relative_residual"]
        for record, history in zip(self.records, self.minres_histories):
            relative = history[-1] / history[0] if history and history[0] else 0.0
            lines.append(f"{record.iteration},{record.minres_iters},{relative:.17g}")
        Path(path).write_text("\n".join(lines) + "\n")


def _mark(values: np.ndarray, theta: float, strategy: str) -> np.ndarray:
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    if strategy == "maximum":
        return mark_maximum(values, theta)
    return mark_doerfler(values, theta)


def choose_refinement(
    estimate: SgfemEstimate,
    marked_spatial: np.ndarray,
    marked_indices: np.ndarray,
    version: int,
) -> str:
    """
    "spatial" or "parametric".

    Version 1 compares ||e_X|| with ||e_P||; version 2 compares the sums of
    squared indicators over the marked sets. Ties go to spatial refinement,
    and so does an empty parametric marking.
    """
    if marked_indices.size == 0:
        return "spatial"
    if version == 1:
        return "spatial" if estimate.spatial_total >= estimate.parametric_total else "parametric"
    spatial = float(np.sum(estimate.spatial.squared[marked_spatial]))
    parametric = float(np.sum(estimate.parametric[marked_indices] ** 2))
    return "spatial" if spatial >= parametric else "parametric"


def adaptive_sgfem(
    problem: StochasticProblem,
    theta_x: float = 0.7,
    theta_p: float = 0.9,
    extra: int = 1,
    version: int = 2,
    tol: float = 1.5e-2,
    max_iter: int = 40,
    mesh: Optional[Mesh] = None,
    index_set: Optional[MultiIndexSet] = None,
    spatial: str = "ees3",
    marking: str = "doerfler",
    element_edges: str = "all",
    minres_tol: float = MINRES_TOL,
    minres_maxit: int = MINRES_MAXIT,
) -> Tuple[SgfemSolution, SgfemReport]:
    """
    Adaptive loop until eta <= tol.

    Args:
        problem: parametric problem
        theta_x, theta_p: marking thresholds for edges and indices
        extra: parameters beyond the active ones searched for new indices
        version: 1 (dominant estimate) or 2 (larger estimated reduction)
        tol: stopping tolerance for eta
        max_iter: iteration cap (reported through report.status)
        mesh: initial mesh (default: level-0 structured mesh of the domain)
        index_set: initial index set (default {0, unit(1)})
        spatial: "ees3" (edge indicators) or "ees1" (element indicators)
        marking: "doerfler" or "maximum" for both components
        element_edges: edges bisected for marked elements (ees1), "all" or "reference"

    Returns:
        (final solution, report)
    """
    if tol <= 0.0:
        raise ConfigError(f"tolerance must be positive, got {tol}", "tol")
    if version not in VERSIONS:
        raise ConfigError(f"unknown adaptive version {version}", "version")
    if spatial not in SPATIAL_STRATEGIES:
        raise ConfigError(f"unknown stochastic spatial estimator '{spatial}'", "estimator")
    if marking not in ("doerfler", "maximum"):
        raise ConfigError(f"unknown marking strategy '{marking}'", "marking")
    if element_edges not in ELEMENT_EDGES:
        raise ConfigError(f"unknown element edge rule '{element_edges}'", "element_edges")
    for key, theta in (("theta_x", theta_x), ("theta_p", theta_p)):
        low_ok = theta >= 0.0 if marking == "maximum" else theta > 0.0
        if not (low_ok and theta <= 1.0):
            raise ConfigError(f"{key}={theta} outside the admissible range", key)

    mesh = mesh if mesh is not None else generate_structured(problem.domain, 0)
    index_set = index_set or MultiIndexSet.initial()
    report = SgfemReport()
    report.index_history.append((0, list(index_set)))
    iteration = 0
    while True:
        started = time.perf_counter()
        system = assemble_sgfem(mesh, problem, index_set)
        solution = solve_sgfem(system, minres_tol, minres_maxit)
        solved = time.perf_counter()
        estimate = estimate_sgfem(solution, problem, extra, spatial)
        record = SgfemRecord(
            iteration,
            solution.space.num_free,
            index_set.size,
            solution.dofs,
            mesh.num_triangles,
            estimate.total,
            estimate.spatial_total,
            estimate.parametric_total,
            minres_iters=solution.iterations,
            t_solve=solved - started,
            t_estimate=time.perf_counter() - solved,
        )
        report.records.append(record)
        report.minres_histories.append(list(solution.residual_history))
        if record.eta <= tol:
            report.status = "converged"
            logger.info(f"Iteration {iteration}: {record.dofs} dofs, eta {record.eta:.4e} <= tol {tol:.1e}")
            break
        if iteration >= max_iter:
            report.status = "max_iter"
            logger.warning(f"Stopped after {max_iter} iterations with eta {record.eta:.4e}")
            break

        marked_spatial = _mark(estimate.spatial.values, theta_x, marking)
        marked_indices = _mark(estimate.parametric, theta_p, marking)
        record.refinement = choose_refinement(estimate, marked_spatial, marked_indices, version)
        if record.refinement == "spatial":
            edges = marked_spatial
            if estimate.spatial.carrier == "elements":
                edges = elements_to_edges(mesh, marked_spatial, element_edges)
            mesh, _ = refine_leb(mesh, edges)
            record.marked = len(marked_spatial)
        else:
            added = [estimate.neighborhood[k] for k in marked_indices]
            index_set = index_set.union(added)
            report.index_history.append((iteration + 1, sorted(added, key=MultiIndex.sort_key)))
            record.marked = len(added)
        logger.info(
            f"Iteration {iteration}: {record.dofs} dofs ({record.n_x} x {record.n_p}), eta {record.eta:.4e} "
            f"(spatial {record.e_x:.3e}, parametric {record.e_p:.3e}), {record.refinement} refinement"
        )
        iteration += 1
    return solution, report
