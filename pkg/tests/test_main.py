"""
Tests for run orchestration, artifacts and history comparison.
"""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

import tifiss
from src.errors import ConfigError, RunError, SolverError
from src.main import compare, compare_histories, execute, run, stage
from src.presets import build_stochastic_problem, load_config, preset_config
from src.sgfem.estimation import estimate_sgfem, reference_energy_error

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def write_config(path, document):
    path.write_text(json.dumps({"schema": 1, **document}))
    return path


def write_history(path, dofs, eta, column="eta"):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "dofs", "elements", column, "refinement"])
        for k, (n, value) in enumerate(zip(dofs, eta)):
            writer.writerow([k, n, 2 * n, f"{value:.17g}", "spatial"])
    return path


class TestStage:
    """Tests for stage labelling of failures."""

    def test_wraps_numerical_errors(self):
        """Numerical failures become RunError with the stage name."""
        with pytest.raises(RunError) as excinfo:
            with stage("solve"):
                raise SolverError("singular")
        assert excinfo.value.stage == "solve"
        assert isinstance(excinfo.value.cause, SolverError)

    def test_config_errors_pass_through(self):
        """Configuration errors keep their type."""
        with pytest.raises(ConfigError):
            with stage("mesh"):
                raise ConfigError("bad", "level")


class TestRun:
    """Tests for run() exit codes and artifacts."""

    def test_missing_config(self, tmp_path):
        """A missing file is a configuration error."""
        assert run(tmp_path / "missing.json") == 2

    def test_invalid_config(self, tmp_path):
        """Unknown keys are a configuration error."""
        path = write_config(tmp_path / "run.json", {"resolution": 3})
        assert run(path) == 2

    def test_deterministic_run(self, tmp_path, capsys):
        """A converged run writes the history, mesh and solution."""
        path = write_config(tmp_path / "run.json", {"mode": "deterministic", "level": 1, "tol": 10.0})
        out = tmp_path / "out"
        assert run(path, str(out)) == 0
        for name in ("history.csv", "final_mesh.txt", "final_solution.txt"):
            assert (out / name).exists()
        assert (out / "final_mesh.txt").read_text().startswith("vertices 25 triangles 32")
        summary = capsys.readouterr().out
        assert "L = 0" in summary and "#T = 32" in summary and "[converged]" in summary

    def test_point_value_in_summary(self, tmp_path, capsys):
        """A configured point adds u(x, y) to the summary."""
        path = write_config(
            tmp_path / "run.json", {"mode": "deterministic", "level": 1, "tol": 10.0, "point": [0.0, 0.0]}
        )
        assert run(path, str(tmp_path / "out")) == 0
        assert "u(0, 0) = " in capsys.readouterr().out

    def test_goafem_run(self, tmp_path, capsys):
        """Goal-oriented runs report mu * zeta and the goal value."""
        path = write_config(
            tmp_path / "run.json", {"mode": "goafem", "level": 2, "estimator": "ees3", "tol": 10.0}
        )
        assert run(path, str(tmp_path / "out")) == 0
        summary = capsys.readouterr().out
        assert "mu*zeta" in summary and "G(u)" in summary

    def test_sgfem_run(self, tmp_path):
        """Stochastic runs add the variance, index log and MINRES table."""
        path = write_config(tmp_path / "run.json", {"mode": "sgfem", "estimator": "ees3", "tol": 10.0})
        out = tmp_path / "out"
        assert run(path, str(out)) == 0
        for name in ("final_variance.txt", "index_set.txt", "minres_iters.csv"):
            assert (out / name).exists()
        assert (out / "index_set.txt").read_text().splitlines() == ["   0  (0)", "      (1)"]
        with open(out / "history.csv", newline="") as handle:
            header = next(csv.reader(handle))
        assert {"n_x", "n_p", "e_x", "e_p", "minres_iters"} <= set(header)

    def test_loss_of_coercivity(self, tmp_path):
        """A non-coercive expansion is a numerical failure."""
        path = write_config(
            tmp_path / "run.json",
            {"mode": "sgfem", "estimator": "ees3", "expansion": "ce3", "sigma": 1.0, "tol": 1e-12, "max_iter": 2},
        )
        assert run(path, str(tmp_path / "out")) == 1


class TestCompare:
    """Tests for history comparison."""

    @pytest.fixture
    def dofs(self):
        return np.array([10.0, 100.0, 1000.0, 10000.0])

    def test_identical(self, tmp_path, dofs):
        """Identical histories pass with zero differences."""
        a = write_history(tmp_path / "a.csv", dofs, dofs**-0.5)
        b = write_history(tmp_path / "b.csv", dofs, dofs**-0.5)
        comparison = compare_histories(a, b)
        assert comparison.passed
        assert not comparison.flagged
        assert np.isclose(comparison.slopes[0], -0.5)
        assert compare(a, b) == 0

    def test_different_slopes(self, tmp_path, dofs):
        """Slopes differing by more than 0.1 fail."""
        a = write_history(tmp_path / "a.csv", dofs, dofs**-0.5)
        b = write_history(tmp_path / "b.csv", dofs, dofs**-1.0)
        comparison = compare_histories(a, b)
        assert not comparison.passed
        assert comparison.flagged == [0, 1, 2, 3]
        assert compare(a, b) == 1

    def test_small_offset_passes(self, tmp_path, dofs):
        """A constant factor flags rows but keeps the slope."""
        a = write_history(tmp_path / "a.csv", dofs, dofs**-0.5)
        b = write_history(tmp_path / "b.csv", dofs, 1.01 * dofs**-0.5)
        comparison = compare_histories(a, b)
        assert comparison.flagged == [0, 1, 2, 3]
        assert comparison.passed

    def test_goal_histories(self, tmp_path, dofs):
        """Goal-oriented histories are compared on mu_zeta."""
        a = write_history(tmp_path / "a.csv", dofs, dofs**-1.0, "mu_zeta")
        b = write_history(tmp_path / "b.csv", dofs, dofs**-1.0, "mu_zeta")
        assert compare_histories(a, b).column == "mu_zeta"

    def test_column_mismatch(self, tmp_path, dofs):
        """Different schemas cannot be compared."""
        a = write_history(tmp_path / "a.csv", dofs, dofs**-0.5)
        b = write_history(tmp_path / "b.csv", dofs, dofs**-0.5, "mu_zeta")
        with pytest.raises(ConfigError) as excinfo:
            compare_histories(a, b)
        assert excinfo.value.key == "columns"
        assert compare(a, b) == 2

    def test_single_row(self, tmp_path):
        """One-row histories fall back to the row check."""
        a = write_history(tmp_path / "a.csv", [10.0], [0.1])
        b = write_history(tmp_path / "b.csv", [10.0], [0.1])
        assert compare_histories(a, b).passed

    def test_cli(self, tmp_path, dofs):
        """The compare subcommand returns the comparison status."""
        a = write_history(tmp_path / "a.csv", dofs, dofs**-0.5)
        b = write_history(tmp_path / "b.csv", dofs, dofs**-0.5)
        assert tifiss.main(["compare", str(a), str(b)]) == 0


@pytest.mark.slow
class TestCaseStudies:
    """Full-size preset runs."""

    @pytest.mark.parametrize("name", ["example1.json", "example1_ees3.json", "example3.json"])
    def test_preset_converges(self, tmp_path, name):
        """Preset configurations run to the tolerance."""
        assert run(CONFIG_DIR / name, str(tmp_path)) == 0

    def test_example1_rate(self):
        """Anisotropic diffusion converges at about dofs^-1/2."""
        result = execute(preset_config("example1"))
        assert result.report.status == "converged"
        assert result.report.slope() == pytest.approx(-0.5, abs=0.1)

    def test_example1_iterations(self):
        """Element marking reaches the tolerance in 15 to 40 iterations."""
        result = execute(preset_config("example1"))
        assert 15 <= result.report.iterations <= 40

    def test_example1_ees3_iterations(self):
        """Edge marking with the two-level estimator needs at most 25 iterations."""
        result = execute(load_config(CONFIG_DIR / "example1_ees3.json"))
        assert result.report.status == "converged"
        assert result.report.iterations <= 25

    def test_example4(self):
        """The parametric L-shape case reaches the tolerance."""
        result = execute(preset_config("example4"))
        assert result.report.status == "converged"
        assert result.report.final.eta <= 1.5e-2
        assert result.solution.index_set.size > 2

    def test_example4_effectivity(self):
        """The final estimate is within [0.5, 1.1] of the enriched P2 surrogate error."""
        config = preset_config("example4")
        result = execute(config)
        problem = build_stochastic_problem(config)
        error = reference_energy_error(result.solution, problem)
        eta = estimate_sgfem(result.solution, problem).total
        assert 0.5 <= eta / error <= 1.1
