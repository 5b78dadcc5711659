"""Orchestration shared by the CLI and the HTTP blueprints.

Randomness: ``SeedSequence(seed).spawn(3)`` gives one child for simulation
trials, one for co-design multi-starts and one for sweeps. Each consumer
spawns further children from its own branch, so every artifact is
reproducible from the config and the seed alone.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from utils.codesign_opt import (
    CodesignProblem,
    CodesignSolution,
    SolverOptions,
    solve,
    sweep,
    validate_solution,
)
from utils.config import (
    RunConfig,
    SimulationSettings,
    build_problem,
    build_scenario,
    build_simulation_settings,
    build_solver_options,
)
from utils.errors import ConvergenceError, InfeasibleProblemError
from utils.exporters import SWEEP_COLUMNS, TRAJECTORY_COLUMNS, export_dot, write_csv, write_graph, write_json
from utils.formation_sim import SimulationResult, simulate, simulate_trials, trajectory_rows
from utils.graph_core import adjacency_and_degrees, spectral_summary
from utils.perf_analysis import NetworkScenario, steady_state
from utils.privacy_mech import fresh_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0


@dataclass
class RunResult:
    status: int
    artifacts: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    message: str = ""


def split_seed(seed) -> tuple[np.random.SeedSequence, np.random.SeedSequence, np.random.SeedSequence]:
    """(simulation, multistart, sweep) branches of the top-level seed."""
    simulation, multistart, sweeps = fresh_seed(seed).spawn(3)
    return simulation, multistart, sweeps


def analyze_payload(scenario: NetworkScenario, method: str = "auto") -> dict:
    report = steady_state(scenario, method)
    payload = report.to_dict()
    payload["n_agents"] = scenario.n_agents
    payload["gamma"] = scenario.gamma
    payload["privacy_sigmas"] = scenario.noise.privacy_sigmas.tolist()
    payload["process_sigmas"] = scenario.noise.process_sigmas.tolist()
    return payload


def simulate_payload(scenario: NetworkScenario, settings: SimulationSettings, seed, workers: int = 1):
    """Trial statistics against the exact steady state, plus the recorded first trial."""
    sim_seq, _, _ = split_seed(seed)
    summary = simulate_trials(
        scenario, settings.horizon, settings.trials, sim_seq, settings.burn_in, workers, settings.init_spread
    )
    recorded = None
    if settings.record_trajectory:
        first_trial = fresh_seed(sim_seq).spawn(settings.trials)[0]
        recorded = simulate(scenario, settings.horizon, first_trial, summary.burn_in, init_spread=settings.init_spread)
    exact = steady_state(scenario, settings.lyapunov_method).e_ss_exact
    relative = abs(summary.mean_mse - exact) / exact if exact > 0 else float("nan")
    payload = {
        "horizon": settings.horizon,
        "burn_in": summary.burn_in,
        "trials": settings.trials,
        "seed": int(seed),
        "empirical_mse_tail": summary.mean_mse,
        "standard_error": summary.standard_error,
        "trial_mse": summary.trial_mse,
        "e_ss_exact": exact,
        "relative_difference": relative,
    }
    if recorded is not None:
        payload["recorded_trial"] = recorded.to_dict()
    return payload, recorded


def codesign_payload(problem: CodesignProblem, options: SolverOptions, seed) -> tuple[dict, CodesignSolution]:
    _, multistart_seq, _ = split_seed(seed)
    solution = solve(problem, options, multistart_seq)
    report = validate_solution(problem, solution, options.validate_tol)
    payload = {
        "problem": problem.to_dict(),
        "solution": solution.to_dict(),
        "validation": report.to_dict(),
        "seed": int(seed),
    }
    return payload, solution


def sweep_rows(problem: CodesignProblem, options: SolverOptions, axis: str, values, seed):
    """Summary table rows (one per sweep value per agent) plus per-value status records."""
    _, _, sweep_seq = split_seed(seed)
    rows, outcomes = [], []
    for value, instance, solution in sweep(problem, options, axis, values, sweep_seq):
        if solution is None:
            outcomes.append({"value": value, "status": "infeasible", "converged": False})
            continue
        report = validate_solution(instance, solution, options.validate_tol)
        _, degrees = adjacency_and_degrees(solution.graph)
        lam2 = spectral_summary(solution.graph).lambda2
        for i, eps in enumerate(solution.epsilons):
            rows.append((
                axis, value, i + 1, float(eps), float(degrees[i]), float(lam2),
                float(report.bound), float(solution.objective_value), solution.converged,
            ))
        outcomes.append({
            "value": value,
            "status": solution.status,
            "converged": solution.converged,
            "objective": solution.objective_value,
            "total_weight": solution.graph.total_weight(),
            "sum_eps_sq": float(np.dot(solution.epsilons, solution.epsilons)),
        })
    return rows, outcomes


def _run_analyze(config: RunConfig) -> RunResult:
    scenario = build_scenario(config.data, config.base_dir)
    settings = build_simulation_settings(config.data)
    payload = analyze_payload(scenario, settings.lyapunov_method)
    path = write_json(os.path.join(config.out_dir, "covariance_report.json"), payload)
    logger.info(f"e_ss exact {payload['e_ss_exact']:.6g}, bound {payload['e_ss_bound']:.6g}")
    return RunResult(EXIT_OK, [path], {"e_ss_exact": payload["e_ss_exact"], "e_ss_bound": payload["e_ss_bound"]})


def _run_simulate(config: RunConfig) -> RunResult:
    scenario = build_scenario(config.data, config.base_dir)
    settings = build_simulation_settings(config.data, config.horizon, config.trials)
    payload, recorded = simulate_payload(scenario, settings, config.seed, config.workers)
    artifacts = [write_json(os.path.join(config.out_dir, "comparison.json"), payload)]
    if recorded is not None:
        artifacts.append(_write_trajectory(os.path.join(config.out_dir, "trajectory.csv"), recorded))
    logger.info(
        f"empirical {payload['empirical_mse_tail']:.6g} vs exact {payload['e_ss_exact']:.6g} "
        f"({100 * payload['relative_difference']:.2f}% apart)"
    )
    return RunResult(EXIT_OK, artifacts, {k: payload[k] for k in ("empirical_mse_tail", "e_ss_exact")})


def _write_trajectory(path, result: SimulationResult) -> str:
    return write_csv(path, TRAJECTORY_COLUMNS, trajectory_rows(result))


def _run_codesign(config: RunConfig) -> RunResult:
    problem = build_problem(config.data, config.base_dir)
    options = build_solver_options(config.data, config.workers)
    payload, solution = codesign_payload(problem, options, config.seed)
    artifacts = [
        write_json(os.path.join(config.out_dir, "solution.json"), payload),
        write_graph(os.path.join(config.out_dir, "solution_graph.json"), solution.graph),
        export_dot(solution.graph, solution.epsilons, os.path.join(config.out_dir, "solution.dot")),
    ]
    summary = {"objective": solution.objective_value, "converged": solution.converged, "status": solution.status}
    if not solution.converged:
        error = ConvergenceError(f"co-design did not converge: {solution.status}")
        return RunResult(error.exit_code, artifacts, summary, str(error))
    return RunResult(EXIT_OK, artifacts, summary)


def _run_sweep(config: RunConfig) -> RunResult:
    problem = build_problem(config.data, config.base_dir)
    options = build_solver_options(config.data, config.workers)
    rows, outcomes = sweep_rows(problem, options, config.sweep_axis, config.sweep_values, config.seed)
    artifacts = [
        write_csv(os.path.join(config.out_dir, "sweep.csv"), SWEEP_COLUMNS, rows),
        write_json(os.path.join(config.out_dir, "sweep.json"), {
            "axis": config.sweep_axis, "values": list(config.sweep_values), "seed": int(config.seed), "outcomes": outcomes,
        }),
    ]
    summary = {"axis": config.sweep_axis, "outcomes": outcomes}
    infeasible = [o["value"] for o in outcomes if o["status"] == "infeasible"]
    if infeasible:
        error = InfeasibleProblemError(f"sweep values {infeasible} are infeasible")
        return RunResult(error.exit_code, artifacts, summary, str(error))
    stalled = [o["value"] for o in outcomes if not o["converged"]]
    if stalled:
        error = ConvergenceError(f"co-design did not converge for sweep values {stalled}")
        return RunResult(error.exit_code, artifacts, summary, str(error))
    return RunResult(EXIT_OK, artifacts, summary)


_MODES = {
    "analyze": _run_analyze,
    "simulate": _run_simulate,
    "codesign": _run_codesign,
    "sweep": _run_sweep,
}


def run(config: RunConfig) -> RunResult:
    """Execute one run mode and write its artifacts under ``config.out_dir``.

    Configuration, infeasibility and step-size errors propagate as
    ``PrivFormError`` subclasses; a finished but non-converged solve is
    reported through ``RunResult.status`` after its artifacts are written.
    """
    logger.info(f"{config.mode}: config {config.config_path or '<inline>'}, seed {config.seed}, out {config.out_dir}")
    result = _MODES[config.mode](config)
    for path in result.artifacts:
        logger.info(f"wrote {path}")
    return result
