"""
Run orchestration behind the command-line driver.

run() executes one configured adaptive computation and writes its
artifacts; compare() checks two convergence histories against each other.
"""

import csv
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from dotenv import load_dotenv

from .adaptivity import AdaptiveReport, adaptive_solve
from .errors import ConfigError, RunError, TifissError
from .fem import FieldSolution, dump_solution, evaluate
from .goal import goafem_solve
from .mesh import Mesh, dump_mesh, generate_structured
from .presets import (
    RunConfig,
    build_problem,
    build_stochastic_problem,
    estimator_config,
    load_config,
    marking_config,
    with_output,
)
from .sgfem import SgfemReport, SgfemSolution, adaptive_sgfem

# Load environment variables
load_dotenv()

OUTPUT_DIR = os.getenv("TIFISS_OUTPUT_DIR", "tifiss_output")
SLOPE_TOLERANCE = 0.1  # histories whose fitted slopes differ by more fail compare()
ROW_TOLERANCE = 1e-8  # relative difference flagged per row

logger = logging.getLogger(__name__)


@contextmanager
def stage(name: str):
    """Attach the stage name to numerical failures."""
    try:
        yield
    except ConfigError:
        raise
    except TifissError as exc:
        raise RunError(name, exc) from exc


@dataclass
class RunResult:
    config: RunConfig
    report: AdaptiveReport
    mesh: Mesh
    solution: Union[FieldSolution, SgfemSolution]
    point_value: Optional[float] = None

    @property
    def summary(self) -> str:
        """L, eta_L, #T_L and n_L of the final iteration."""
        final = self.report.final
        if self.config.mode == "goafem":
            line = (
                f"L = {self.report.iterations}, mu*zeta = {final.mu_zeta:.4e}, "
                f"#T = {final.elements}, n = {final.dofs}, G(u) = {final.goal_value:.10f}"
            )
        else:
            line = (
                f"L = {self.report.iterations}, eta = {final.eta:.4e}, "
                f"#T = {final.elements}, n = {final.dofs}"
            )
        if self.point_value is not None:
            x, y = self.config.point
            line += f", u({x:g}, {y:g}) = {self.point_value:.11f}"
        return f"{line} [{self.report.status}]"


def execute(config: RunConfig) -> RunResult:
    """
    Run the configured adaptive computation.

    Raises:
        ConfigError: for settings rejected while building the problem
        RunError: for numerical failures, with the stage name
    """
    if config.mode == "sgfem":
        problem = build_stochastic_problem(config)
        with stage("mesh"):
            mesh = generate_structured(problem.domain, config.level)
        with stage("adaptive sgfem"):
            solution, report = adaptive_sgfem(
                problem,
                theta_x=config.theta_x,
                theta_p=config.theta_p,
                extra=config.extra,
                version=config.version,
                tol=config.tol,
                max_iter=config.max_iter,
                mesh=mesh,
                spatial=config.estimator,
                marking=config.marking,
                element_edges=config.element_edges,
            )
        return RunResult(config, report, solution.mesh, solution)

    problem = build_problem(config)
    estimator = estimator_config(config)
    marking = marking_config(config)
    with stage("mesh"):
        mesh = generate_structured(problem.domain, config.level)
    if config.mode == "goafem":
        with stage("goal-oriented loop"):
            solution, _, report = goafem_solve(
                problem,
                config.x0,
                config.radius,
                estimator=config.estimator,
                theta=config.theta,
                combinator=config.combinator,
                tol=config.tol,
                max_iter=config.max_iter,
                mesh=mesh,
                reference=config.reference,
            )
        final_mesh = solution.mesh
    else:
        with stage("adaptive loop"):
            solution, final_mesh, report = adaptive_solve(
                problem, config.order, estimator, marking, config.tol, config.max_iter, mesh
            )
    point_value = None
    if config.point is not None:
        with stage("point evaluation"):
            point_value = evaluate(solution, config.point)
    return RunResult(config, report, final_mesh, solution, point_value)


def write_artifacts(result: RunResult, output_dir: Union[str, Path]) -> List[Path]:
    """history.csv, final_mesh.txt, final_solution.txt and, for sgfem, index_set.txt and minres_iters.csv."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "history.csv", out / "final_mesh.txt", out / "final_solution.txt"]
    result.report.write_csv(written[0])
    dump_mesh(result.mesh, written[1])
    solution = result.solution
    if isinstance(solution, SgfemSolution):
        dump_solution(solution.mean_field(), written[2])
        variance = FieldSolution(solution.space, solution.variance())
        written.append(out / "final_variance.txt")
        dump_solution(variance, written[-1])
        report: SgfemReport = result.report
        written.append(out / "index_set.txt")
        report.write_index_log(written[-1])
        written.append(out / "minres_iters.csv")
        report.write_minres_csv(written[-1])
    else:
        dump_solution(solution, written[2])
    for path in written:
        logger.debug(f"Wrote {path}")
    return written


def run(config_path: Union[str, Path], output_dir: Optional[str] = None) -> int:
    """
    Execute a configuration file.

    Returns:
        0 on success, 2 for configuration errors, 1 for numerical failures
    """
    try:
        config = with_output(load_config(config_path), output_dir)
    except ConfigError as exc:
        logger.error(f"Invalid configuration {config_path}: {exc}")
        return 2
    logger.info(f"Running {config.preset} ({config.mode}) from {config_path}")
    try:
        result = execute(config)
    except ConfigError as exc:
        logger.error(f"Invalid configuration {config_path}: {exc}")
        return 2
    except RunError as exc:
        logger.error(f"Numerical failure during {exc.stage}: {exc.cause}")
        return 1
    try:
        written = write_artifacts(result, config.output_dir or OUTPUT_DIR)
    except OSError as exc:
        logger.error(f"Could not write artifacts: {exc}")
        return 1
    logger.info(f"Wrote {len(written)} artifacts to {written[0].parent}")
    print(result.summary)
    return 0


def _read_history(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise ConfigError(f"empty history file {path}")
    header, body = rows[0], rows[1:]
    columns = {}
    for k, name in enumerate(header):
        try:
            columns[name] = np.array([float(row[k]) if row[k] else np.nan for row in body])
        except ValueError:
            continue  # text column such as the refinement type
    return columns


@dataclass
class HistoryComparison:
    column: str
    relative: np.ndarray
    flagged: List[int] = field(default_factory=list)
    slopes: tuple = (np.nan, np.nan)

    @property
    def slope_gap(self) -> float:
        return abs(self.slopes[0] - self.slopes[1])

    @property
    def passed(self) -> bool:
        # too few rows for a slope: fall back to the row-wise check
        if np.isnan(self.slope_gap):
            return not self.flagged
        return bool(self.slope_gap <= SLOPE_TOLERANCE)


def _slope(dofs: np.ndarray, values: np.ndarray, last_fraction: float = 0.5) -> float:
    if len(dofs) < 2:
        return float("nan")
    start = max(min(int(len(dofs) * (1.0 - last_fraction)), len(dofs) - 2), 0)
    return float(np.polyfit(np.log(dofs[start:]), np.log(values[start:]), 1)[0])


def compare_histories(path_a: Union[str, Path], path_b: Union[str, Path]) -> HistoryComparison:
    """
    Row-wise relative differences and fitted log-log slopes of two histories.

    The compared column is eta, or mu_zeta for goal-oriented histories.

    Raises:
        ConfigError: if the column schemas differ
    """
    a, b = _read_history(path_a), _read_history(path_b)
    if list(a) != list(b):
        raise ConfigError(f"column mismatch: {list(a)} vs {list(b)}", "columns")
    column = "eta" if "eta" in a else "mu_zeta"
    if column not in a or "dofs" not in a:
        raise ConfigError(f"history lacks a dofs or {column} column", "columns")
    rows = min(len(a[column]), len(b[column]))
    va, vb = a[column][:rows], b[column][:rows]
    scale = np.maximum(np.maximum(np.abs(va), np.abs(vb)), np.finfo(float).tiny)
    relative = np.abs(va - vb) / scale
    flagged = [int(k) for k in np.flatnonzero(relative > ROW_TOLERANCE)]
    slopes = (_slope(a["dofs"], a[column]), _slope(b["dofs"], b[column]))
    return HistoryComparison(column, relative, flagged, slopes)


def compare(path_a: Union[str, Path], path_b: Union[str, Path]) -> int:
    """Print the comparison table; 0 if the slopes agree within 0.1."""
    try:
        comparison = compare_histories(path_a, path_b)
    except (ConfigError, OSError) as exc:
        logger.error(f"Cannot compare histories: {exc}")
        return 2
    print(f"{'row':>4}  {'rel. diff':>12}")
    for k, value in enumerate(comparison.relative):
        mark = "  *" if k in comparison.flagged else ""
        print(f"{k:>4}  {value:12.4e}{mark}")
    print(f"slopes ({comparison.column} vs dofs): {comparison.slopes[0]:.4f} and {comparison.slopes[1]:.4f}")
    if not comparison.passed:
        logger.warning(f"Slopes differ by {comparison.slope_gap:.4f} > {SLOPE_TOLERANCE}")
        return 1
    return 0
