"""Experiment runners behind the ``uot`` subcommands.

Each runner reads a validated :class:`ExperimentConfig`, calls the library,
and writes its artifacts into ``config.output_dir``: a ``summary.json`` that
echoes the resolved configuration, plus CSV rasters and tables.
"""

import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from src.assessments.asymptotics import (
    CellProblemTable,
    build_cell_table,
    optimal_density,
)
from src.calculators.dual_solver import (
    SolverOptions,
    TransportSolution,
    hellinger_squared,
    reconstruct_rho,
    solve_weights,
)
from src.calculators.entropy_models import EntropyModel
from src.calculators.errors import ConvergenceError, TransportError
from src.calculators.laguerre import assign_cells, extract_slice
from src.calculators.quantization import QuantizationOptions, solve_quantization
from src.cli.status import certificate_status, report_error
from src.data.setups import preset_measure, random_measure, slice_height
from src.measures.models import DiscreteMeasure, Domain, GridDensity, total_mass
from src.storage.config import (
    CSV_PREFIX,
    PRESET_PREFIX,
    RANDOM_PREFIX,
    ExperimentConfig,
    InlineMeasure,
)
from src.storage.files import (
    load_density,
    load_measure,
    save_labels,
    save_measure,
    save_raster,
    save_table,
    write_json,
)

logger = logging.getLogger(__name__)

Summary = Dict[str, Any]


def build_density(config: ExperimentConfig) -> GridDensity:
    """Rasterize the configured diffuse measure."""
    grid = config.grid
    return load_density(grid.density, grid.to_domain(), grid.nx, grid.ny, grid.level)


def build_measure(config: ExperimentConfig, domain: Domain) -> DiscreteMeasure:
    """Build the configured discrete measure on ``domain``."""
    source = config.nu
    if isinstance(source, InlineMeasure):
        return DiscreteMeasure(np.array(source.points), np.array(source.masses), domain)
    if source is None:
        raise TransportError("No discrete measure configured.")
    if source.startswith(RANDOM_PREFIX):
        _, count, seed = source.split(":")
        return random_measure(domain, int(count), int(seed))
    if source.startswith(CSV_PREFIX):
        return load_measure(source[len(CSV_PREFIX):], domain)
    return preset_measure(source[len(PRESET_PREFIX):], domain)


def _solver_options(config: ExperimentConfig) -> SolverOptions:
    s = config.solver
    return SolverOptions(
        max_iter=s.max_iter,
        grad_tol=s.grad_tol,
        gap_tol=s.gap_tol,
        marginal_tol=s.marginal_tol,
    )


def _quantization_options(config: ExperimentConfig) -> QuantizationOptions:
    s = config.solver
    return QuantizationOptions(
        max_iter=s.max_iter,
        grad_tol=s.grad_tol,
        seed=s.seed,
        max_evaluations=s.max_evaluations,
    )


def _certificate_tolerance(
    config: ExperimentConfig, model: EntropyModel, mu_total: float
) -> float:
    tol = config.solver.marginal_tol if model.is_balanced else config.solver.gap_tol
    return tol * mu_total


def _transport_fields(solution: TransportSolution) -> Summary:
    return {
        "w": solution.w,
        "g_value": solution.g_value,
        "grad_norm": solution.grad_norm,
        "duality_gap": solution.duality_gap,
        "iterations": solution.iterations,
        "rho_cell_masses": solution.rho_cell_masses,
        "converged": solution.converged,
        "certified": solution.certified,
        "message": solution.message,
    }


def run_transport(config: ExperimentConfig, out: Path) -> Summary:
    """Solve one semi-discrete transport problem and export cells, ``ρ`` and ``φ_w``."""
    g = build_density(config)
    nu = build_measure(config, g.domain)
    model = config.model.to_model()
    solution = solve_weights(g, nu, model, _solver_options(config))

    save_labels(out / "labels.csv", solution.tessellation.as_export())
    save_raster(out / "rho.csv", solution.rho.values)
    save_raster(out / "phi.csv", solution.tessellation.phi)
    row = slice_height(g.domain)
    xs, phi_row = extract_slice(solution.tessellation.phi, g, row)
    ratio = np.divide(
        solution.rho.values, g.values, out=np.zeros(g.shape), where=g.values > 0.0
    )
    _, density_row = extract_slice(ratio, g, row)
    save_table(out / "slice.csv", {"x": xs, "phi": phi_row, "density": density_row})

    mu_total = total_mass(g)
    verdict, status = certificate_status(
        solution.duality_gap, _certificate_tolerance(config, model, mu_total)
    )
    summary: Summary = {
        **_transport_fields(solution),
        "mu_total": mu_total,
        "nu_total": nu.total_mass,
        "hellinger_squared": hellinger_squared(g, nu),
        "certificate": verdict,
    }
    if status != "success":
        summary["_failure"] = ConvergenceError(f"Transport solve {verdict}.")
    return summary


def run_quantize(config: ExperimentConfig, out: Path) -> Summary:
    """Optimize site locations and export points, cells, ``ρ`` and the energy trace."""
    g = build_density(config)
    model = config.model.to_model()
    s = config.solver
    assert s.num_points is not None
    state = solve_quantization(
        g, s.num_points, model, s.method, _quantization_options(config)
    )

    nu = DiscreteMeasure(state.points, state.masses, g.domain)
    cells = assign_cells(g, nu, model, np.zeros(nu.size))
    rho = reconstruct_rho(g, nu, model, cells, cells.weights_used)
    save_measure(out / "points.csv", nu)
    save_labels(out / "labels.csv", cells.as_export())
    save_raster(out / "rho.csv", rho.values)
    save_table(
        out / "history.csv",
        {
            "iteration": np.arange(len(state.energy_history)),
            "energy": state.energy_history,
        },
    )
    summary: Summary = {
        "points": state.points,
        "masses": state.masses,
        "energy": state.energy,
        "grad_norm": state.grad_norm,
        "iterations": state.iterations,
        "evaluations": state.evaluations,
        "converged": state.converged,
        "method": state.method.value,
        "zero_mass_sites": state.zero_mass_sites,
        "stalled_sites": np.flatnonzero(state.stalled_sites),
        "mu_total": total_mass(g),
    }
    if not state.converged:
        summary["_failure"] = ConvergenceError(
            f"Quantization stopped after {state.iterations} iterations with "
            f"max|grad| {state.grad_norm:.3e}."
        )
    return summary


def run_cell_problem(config: ExperimentConfig, out: Path) -> Summary:
    """Tabulate ``B`` and ``B'`` and export them as ``cell_problem.csv``."""
    a = config.asymptotic
    table = build_cell_table(config.model.to_model(), a.z_min, a.z_max, a.num_samples)
    save_table(
        out / "cell_problem.csv",
        {"z": table.z_samples, "B": table.b_values, "B_prime": table.b_prime_values},
    )
    return {
        "z_plateau": table.z_plateau,
        "slope_plateau": table.slope_plateau,
        "b_at_z_min": float(table.b_values[0]),
        "b_at_z_max": float(table.b_values[-1]),
        "num_samples": a.num_samples,
    }


def _cell_table(
    config: ExperimentConfig, model: EntropyModel
) -> Optional[CellProblemTable]:
    if model.is_balanced:
        return None
    a = config.asymptotic
    return build_cell_table(model, a.z_min, a.z_max, a.num_samples)


def run_asymptotic_density(config: ExperimentConfig, out: Path) -> Summary:
    """Compute the asymptotically optimal point density for ``asymptotic.P``."""
    g = build_density(config)
    model = config.model.to_model()
    a = config.asymptotic
    table = _cell_table(config, model)
    result = optimal_density(g, model, a.P, table)
    save_raster(out / "density.csv", result.density.values)
    return {
        "lambda": result.multiplier,
        "P": result.p_target,
        "energy": result.energy,
        "integrated_density": g.cell_area * float(result.density.values.sum()),
        "zero_fraction": result.zero_fraction,
    }


def _sweep_epsilon(config: ExperimentConfig, out: Path) -> Summary:
    assert config.sweep is not None
    g = build_density(config)
    nu = build_measure(config, g.domain)
    base = config.model.to_model()
    opts = _solver_options(config)
    rows: Dict[str, List[float]] = {
        "epsilon": [],
        "value": [],
        "scaled_value": [],
        "grad_norm": [],
        "iterations": [],
    }
    uncertified: List[float] = []
    for eps in config.sweep.values:
        solution = solve_weights(g, nu, base.at_scale(eps), opts)
        rows["epsilon"].append(eps)
        rows["value"].append(solution.g_value)
        rows["scaled_value"].append(eps**2 * solution.g_value)
        rows["grad_norm"].append(solution.grad_norm)
        rows["iterations"].append(solution.iterations)
        if not solution.certified:
            uncertified.append(eps)
    save_table(out / "sweep.csv", rows)

    mu_total = total_mass(g)
    summary: Summary = {
        "parameter": "epsilon",
        "rows": rows,
        "hellinger_squared": hellinger_squared(g, nu),
        "uncertified": uncertified,
    }
    if math.isclose(nu.total_mass, mu_total, rel_tol=1e-9):
        balanced = solve_weights(g, nu, EntropyModel.parse("w2"), opts)
        summary["w2_squared"] = balanced.g_value
    if uncertified:
        summary["_failure"] = ConvergenceError(
            f"Sweep entries not certified: {uncertified}."
        )
    return summary


def _sweep_points(config: ExperimentConfig, eps: float) -> int:
    assert config.sweep is not None
    if config.sweep.parameter == "epsilon_points":
        assert config.sweep.scaled_points is not None
        return max(1, round(config.sweep.scaled_points / eps**2))
    assert config.solver.num_points is not None
    return config.solver.num_points


def _sweep_quantize(config: ExperimentConfig, out: Path) -> Summary:
    assert config.sweep is not None
    g = build_density(config)
    base = config.model.to_model()
    opts = _quantization_options(config)
    rows: Dict[str, List[float]] = {
        "epsilon": [],
        "M": [],
        "scaled_points": [],
        "energy": [],
        "total_mass": [],
        "grad_norm": [],
        "iterations": [],
    }
    unconverged: List[float] = []
    for eps in config.sweep.values:
        count = _sweep_points(config, eps)
        state = solve_quantization(
            g, count, base.at_scale(eps), config.solver.method, opts
        )
        rows["epsilon"].append(eps)
        rows["M"].append(count)
        rows["scaled_points"].append(eps**2 * count)
        rows["energy"].append(state.energy)
        rows["total_mass"].append(float(state.masses.sum()))
        rows["grad_norm"].append(state.grad_norm)
        rows["iterations"].append(state.iterations)
        if not state.converged:
            unconverged.append(eps)
    save_table(out / "sweep.csv", rows)

    mu_total = total_mass(g)
    summary: Summary = {
        "parameter": config.sweep.parameter,
        "target": "quantize",
        "rows": rows,
        "mu_total": mu_total,
        "no_transport_energy": mu_total * base.f_zero(),
        "unconverged": unconverged,
    }
    if unconverged:
        summary["_failure"] = ConvergenceError(
            f"Quantization did not converge for epsilon in {unconverged}."
        )
    return summary


def _sweep_p(config: ExperimentConfig, out: Path) -> Summary:
    assert config.sweep is not None
    g = build_density(config)
    model = config.model.to_model()
    table = _cell_table(config, model)
    rows: Dict[str, List[float]] = {
        "P": [],
        "lambda": [],
        "energy": [],
        "zero_fraction": [],
    }
    for index, p_value in enumerate(config.sweep.values):
        result = optimal_density(g, model, p_value, table)
        save_raster(out / f"density_{index:02d}.csv", result.density.values)
        rows["P"].append(p_value)
        rows["lambda"].append(result.multiplier)
        rows["energy"].append(result.energy)
        rows["zero_fraction"].append(result.zero_fraction)
    save_table(out / "sweep.csv", rows)
    return {"parameter": "P", "rows": rows}


def run_sweep(config: ExperimentConfig, out: Path) -> Summary:
    """Repeat a transport or quantization over ``ε``, or a density over ``P``.

    Every variant writes ``sweep.csv`` with one row per value.
    """
    assert config.sweep is not None
    if config.sweep.parameter == "P":
        return _sweep_p(config, out)
    if config.sweep.target == "quantize":
        return _sweep_quantize(config, out)
    return _sweep_epsilon(config, out)


RUNNERS: Dict[str, Callable[[ExperimentConfig, Path], Summary]] = {
    "transport": run_transport,
    "quantize": run_quantize,
    "cell-problem": run_cell_problem,
    "asymptotic-density": run_asymptotic_density,
    "sweep": run_sweep,
}


def run(config: ExperimentConfig) -> int:
    """Execute ``config.command``, write its artifacts and return the exit status.

    Returns
    -------
    int
        0 on success, 2 for invalid or infeasible input, 3 when the solve was
        not certified (its outputs are still written)
    """
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = RUNNERS[config.command](config, out)
        failure = summary.pop("_failure", None)
        summary = {
            "command": config.command,
            "model": config.model.to_model().describe(),
            **summary,
            "config": config.model_dump(mode="json"),
        }
        write_json(out / "summary.json", summary)
        if failure is not None:
            raise failure
    except (TransportError, OSError, ValueError) as error:
        logger.debug("Run failed", exc_info=True)
        return report_error(error, out)
    logger.info("%s finished, outputs in %s", config.command, out)
    return 0
