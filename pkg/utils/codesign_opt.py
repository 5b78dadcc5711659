"""Joint design of edge weights and per-agent privacy levels.

Minimize Tr(L) + vartheta * sum(eps_i^2) over edge weights on the mask and
eps in [eps_floor, eps_max], subject to

  * the trace bound on steady-state error staying below e_R,
  * lambda2(L) >= lambda2_min,
  * gamma * d_i < 1 for every agent (the protocol stays simulable).

The solver is an augmented Lagrangian over the inequality constraints with an
L-BFGS-B inner loop on the box, followed by feasibility restoration and
pruning of negligible edges. Each inner solve is followed by an eps-only solve
with the weights held fixed; that block is smooth. A start converges when it is
feasible and its projected Lagrangian gradient is below ``stat_tol``. At a
repeated lambda2 (or lambda_N) only the eps block of that gradient is tested.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from utils.errors import ConfigError, InfeasibleProblemError, PrivacyDomainError, PrivFormError
from utils.formation_sim import FormationSpec
from utils.graph_core import (
    DEGENERACY_TOL,
    TopologyMask,
    WeightedGraph,
    adjacency_and_degrees,
    jacobi_eigh,
    mask_laplacian,
    spectral_summary,
)
from utils.perf_analysis import NetworkScenario, steady_state, trace_q
from utils.privacy_mech import NoiseModel, PrivacySpec, fresh_seed, kappa, kappa_derivative

logger = logging.getLogger(__name__)

MACHINE_EPS = float(np.finfo(float).eps)
SWEEP_AXES = ("e_R", "eps_max_uniform", "lambda2_min", "vartheta")
# relative eigenvalue gap below which the spectral terms count as nondifferentiable
SPECTRAL_GAP_TOL = 1e-3


def _vector(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{name} must have one entry per agent ({n}), got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class CodesignProblem:
    mask: TopologyMask
    e_R: float
    lambda2_min: float
    vartheta: float
    eps_max: np.ndarray
    deltas: np.ndarray
    adjacency_bounds: np.ndarray
    process_sigmas: np.ndarray
    gamma: float
    dimension: int = 1

    def __post_init__(self):
        n = self.mask.n_agents
        if n < 2:
            raise ConfigError("co-design needs at least two agents")
        for name in ("eps_max", "deltas", "adjacency_bounds", "process_sigmas"):
            object.__setattr__(self, name, _vector(getattr(self, name), n, name))
        if not self.e_R > 0:
            raise ConfigError(f"e_R must be positive, got {self.e_R}")
        if not self.lambda2_min > 0:
            raise ConfigError(f"lambda2_min must be positive, got {self.lambda2_min}")
        if not self.vartheta > 0:
            raise ConfigError(f"vartheta must be positive, got {self.vartheta}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if int(self.dimension) < 1:
            raise ConfigError("dimension must be at least 1")
        if np.any(self.eps_max <= 0):
            raise ConfigError("eps_max entries must be positive")
        if np.any(self.adjacency_bounds <= 0) or np.any(self.process_sigmas < 0):
            raise ConfigError("adjacency bounds must be positive and process noise nonnegative")
        if np.any((self.deltas <= 0) | (self.deltas >= 0.5)):
            raise PrivacyDomainError("every delta must lie in (0, 1/2)")

    @property
    def n_agents(self) -> int:
        return self.mask.n_agents

    def with_axis(self, axis: str, value: float) -> "CodesignProblem":
        if axis == "eps_max_uniform":
            return dataclasses.replace(self, eps_max=np.full(self.n_agents, float(value)))
        if axis in ("e_R", "lambda2_min", "vartheta"):
            return dataclasses.replace(self, **{axis: float(value)})
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")

    def to_dict(self) -> dict:
        return {
            "mask": self.mask.to_dict(),
            "e_R": self.e_R,
            "lambda2_min": self.lambda2_min,
            "vartheta": self.vartheta,
            "eps_max": self.eps_max.tolist(),
            "deltas": self.deltas.tolist(),
            "adjacency_bounds": self.adjacency_bounds.tolist(),
            "process_sigmas": self.process_sigmas.tolist(),
            "gamma": self.gamma,
            "dimension": self.dimension,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CodesignProblem":
        return cls(
            mask=TopologyMask.from_dict(data["mask"]),
            e_R=float(data["e_R"]),
            lambda2_min=float(data["lambda2_min"]),
            vartheta=float(data["vartheta"]),
            eps_max=np.asarray(data["eps_max"], dtype=float),
            deltas=np.asarray(data["deltas"], dtype=float),
            adjacency_bounds=np.asarray(data["adjacency_bounds"], dtype=float),
            process_sigmas=np.asarray(data["process_sigmas"], dtype=float),
            gamma=float(data["gamma"]),
            dimension=int(data.get("dimension", 1)),
        )


@dataclass(frozen=True)
class SolverOptions:
    max_outer: int = 40
    max_inner: int = 400
    feas_tol: float = 1e-7
    stat_tol: float = 1e-4
    obj_tol: float = 1e-8
    mu_init: float = 10.0
    mu_growth: float = 10.0
    mu_max: float = 1e8
    eps_floor: float = 1e-4
    prune_threshold: float = 1e-4
    multistarts: int = 5
    workers: int = 1
    validate_tol: float = 1e-6

    @classmethod
    def from_mapping(cls, data: dict | None) -> "SolverOptions":
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        options = cls(**data)
        if options.multistarts < 1 or options.max_outer < 1 or options.max_inner < 1:
            raise ConfigError("iteration caps and multistart count must be at least 1")
        return options


@dataclass
class ConstraintValues:
    g_err: float
    g_lambda: float
    g_eps: np.ndarray
    g_degree: np.ndarray
    lambda2: float
    bound: float
    clamped: bool = False

    def max_violation(self) -> float:
        return float(max(self.g_err, self.g_lambda, float(np.max(self.g_eps)), float(np.max(self.g_degree)), 0.0))


@dataclass
class CodesignSolution:
    graph: WeightedGraph
    epsilons: np.ndarray
    objective_value: float
    constraint_residuals: dict
    converged: bool
    iterations: int
    stationarity: float = math.nan
    start_index: int = 0
    status: str = ""
    restored_edges: list = field(default_factory=list)
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "epsilons": [float(e) for e in self.epsilons],
            "objective_value": self.objective_value,
            "constraint_residuals": self.constraint_residuals,
            "converged": self.converged,
            "iterations": self.iterations,
            "stationarity": self.stationarity,
            "start_index": self.start_index,
            "status": self.status,
            "restored_edges": [[i + 1, j + 1] for i, j in self.restored_edges],
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CodesignSolution":
        return cls(
            graph=WeightedGraph.from_dict(data["graph"]),
            epsilons=np.asarray(data["epsilons"], dtype=float),
            objective_value=float(data["objective_value"]),
            constraint_residuals=dict(data["constraint_residuals"]),
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
            stationarity=float(data.get("stationarity", math.nan)),
            start_index=int(data.get("start_index", 0)),
            status=data.get("status", ""),
            restored_edges=[(i - 1, j - 1) for i, j in data.get("restored_edges", [])],
            history=list(data.get("history", [])),
        )


@dataclass
class ValidationReport:
    feasible: bool
    violations: dict
    residuals: dict
    e_ss_exact: float
    bound: float
    objective_recomputed: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def objective(weights, epsilons, vartheta: float) -> float:
    """Tr(L) + vartheta * sum(eps^2); Tr(L) is twice the total edge weight."""
    weights = np.asarray(weights, dtype=float)
    epsilons = np.asarray(epsilons, dtype=float)
    return float(2.0 * weights.sum() + vartheta * np.dot(epsilons, epsilons))


def privacy_sigmas(problem: CodesignProblem, epsilons) -> np.ndarray:
    return np.array([kappa(d, e) * b for d, e, b in zip(problem.deltas, epsilons, problem.adjacency_bounds)])


def scenario_for(problem: CodesignProblem, weights, epsilons) -> NetworkScenario:
    graph = WeightedGraph.from_vector(problem.mask, weights)
    specs = [PrivacySpec(float(e), float(d), float(b)) for e, d, b in zip(epsilons, problem.deltas, problem.adjacency_bounds)]
    noise = NoiseModel.from_specs(specs, problem.process_sigmas)
    formation = FormationSpec.at_origin(problem.n_agents, problem.dimension)
    return NetworkScenario(graph, formation, problem.gamma, noise, problem.dimension)


def _nonsmooth_spectrum(summary, fiedler_mode: float, top_mode: float, fiedler_active: bool) -> bool:
    """True when lambda2, or the mode that sets sigma_max(M), sits at or next to an eigenvalue crossing."""
    if summary.degenerate_fiedler:
        return True
    ev = summary.eigenvalues
    gap = SPECTRAL_GAP_TOL * max(1.0, summary.lambda_max)
    if ev.size >= 3 and ev[2] - ev[1] <= gap:
        return True
    if abs(fiedler_mode - top_mode) <= SPECTRAL_GAP_TOL:
        return True
    return bool(not fiedler_active and ev.size >= 3 and ev[-1] - ev[-2] <= gap)


class _Evaluation:
    """Objective, constraints and their gradients at one point."""

    def __init__(self, problem: CodesignProblem, weights, epsilons, gradients: bool = True):
        self.problem = problem
        n, gamma, d = problem.n_agents, problem.gamma, problem.dimension
        edges = problem.mask.edge_list
        w = np.maximum(np.asarray(weights, dtype=float), 0.0)
        eps = np.asarray(epsilons, dtype=float)
        self.weights, self.epsilons = w, eps

        graph = WeightedGraph.from_vector(problem.mask, w)
        adjacency, degrees = adjacency_and_degrees(graph)
        summary = spectral_summary(graph)
        lam2 = summary.lambda2
        self.clamped = lam2 <= MACHINE_EPS
        lam2_eff = max(lam2, MACHINE_EPS)

        sigmas = privacy_sigmas(problem, eps)
        tq = trace_q(adjacency, gamma, sigmas, problem.process_sigmas)
        fiedler_mode = 1.0 - gamma * lam2_eff
        top_mode = gamma * summary.lambda_max - 1.0
        fiedler_active = fiedler_mode >= top_mode
        rho = fiedler_mode if fiedler_active else top_mode
        denom = max(1.0 - rho * rho, 1e-12)
        self.bound = (d / n) * tq / denom
        self.lambda2 = lam2
        self.degenerate = summary.degenerate_fiedler
        self.nonsmooth = _nonsmooth_spectrum(summary, fiedler_mode, top_mode, fiedler_active)

        self.f = objective(w, eps, problem.vartheta)
        self.g_err = self.bound - problem.e_R
        self.g_lambda = problem.lambda2_min - lam2
        self.g_eps = eps - problem.eps_max
        self.g_degree = gamma * degrees - 1.0

        if not gradients:
            return

        m = len(edges)
        a_idx = np.array([e[0] for e in edges], dtype=int)
        b_idx = np.array([e[1] for e in edges], dtype=int)

        fiedler = self._fiedler_direction(summary, a_idx, b_idx)
        dlam2_dw = (fiedler[a_idx] - fiedler[b_idx]) ** 2
        if fiedler_active:
            drho_dw = -gamma * dlam2_dw
        else:
            top = summary.max_vector
            drho_dw = gamma * (top[a_idx] - top[b_idx]) ** 2

        s2 = sigmas ** 2
        dtq_dw = gamma ** 2 * ((2 * w - 2 * degrees[a_idx] / n) * s2[a_idx] + (2 * w - 2 * degrees[b_idx] / n) * s2[b_idx])
        spread = (adjacency ** 2).sum(axis=1) - degrees ** 2 / n
        dsigma_deps = np.array([kappa_derivative(dl, e) * b for dl, e, b in zip(problem.deltas, eps, problem.adjacency_bounds)])
        dtq_deps = gamma ** 2 * spread * 2.0 * sigmas * dsigma_deps

        ddenom_dw = -2.0 * rho * drho_dw
        dbound_dw = (d / n) * (dtq_dw / denom - tq * ddenom_dw / denom ** 2)
        dbound_deps = (d / n) * dtq_deps / denom

        self.grad_f = np.concatenate([np.full(m, 2.0), 2.0 * problem.vartheta * eps])
        self.grad_err = np.concatenate([dbound_dw, dbound_deps])
        self.grad_lambda = np.concatenate([-dlam2_dw, np.zeros(n)])
        degree_jac = np.zeros((n, m + n))
        degree_jac[a_idx, np.arange(m)] = gamma
        degree_jac[b_idx, np.arange(m)] = gamma
        self.grad_degree = degree_jac

    def _fiedler_direction(self, summary, a_idx, b_idx) -> np.ndarray:
        if not summary.degenerate_fiedler:
            return summary.fiedler_vector
        # Repeated lambda2: take the eigenspace direction along which adding
        # weight uniformly raises lambda2 least.
        cluster = np.flatnonzero(np.abs(summary.eigenvalues - summary.lambda2) < DEGENERACY_TOL)
        cluster = cluster[cluster > 0]
        basis = summary.eigenvectors[:, cluster]
        _, small_vectors = jacobi_eigh(basis.T @ mask_laplacian(self.problem.mask) @ basis)
        logger.debug(f"degenerate Fiedler eigenvalue (multiplicity {cluster.size}); using eigenspace subgradient")
        return basis @ small_vectors[:, 0]

    def normalized_constraints(self) -> np.ndarray:
        p = self.problem
        return np.concatenate([[self.g_err / p.e_R, self.g_lambda / p.lambda2_min], self.g_degree])

    def normalized_jacobian(self) -> np.ndarray:
        p = self.problem
        return np.vstack([self.grad_err / p.e_R, self.grad_lambda / p.lambda2_min, self.grad_degree])

    def values(self) -> ConstraintValues:
        return ConstraintValues(
            g_err=float(self.g_err),
            g_lambda=float(self.g_lambda),
            g_eps=self.g_eps.copy(),
            g_degree=self.g_degree.copy(),
            lambda2=float(self.lambda2),
            bound=float(self.bound),
            clamped=bool(self.clamped),
        )


def constraint_values(problem: CodesignProblem, weights, epsilons) -> ConstraintValues:
    evaluation = _Evaluation(problem, weights, epsilons, gradients=False)
    if evaluation.clamped:
        logger.info("candidate graph is disconnected; error bound evaluated with lambda2 clamped to machine epsilon")
    return evaluation.values()


def _residuals(values: ConstraintValues) -> dict:
    return {
        "error_bound_slack": -values.g_err,
        "lambda2_slack": -values.g_lambda,
        "eps_slacks": [float(-g) for g in values.g_eps],
        "degree_slack": float(-np.max(values.g_degree)),
    }


def feasibility_precheck(problem: CodesignProblem) -> None:
    """Reject problems that even eps = eps_max on uniformly weighted mask edges cannot satisfy."""
    n, d = problem.n_agents, problem.dimension
    floor = (d / n) * (n - 1) / n * float(np.sum(problem.process_sigmas ** 2))
    if floor > problem.e_R:
        raise InfeasibleProblemError(
            f"e_R = {problem.e_R:.6g} is below the process-noise floor {floor:.6g}", binding="error_bound"
        )
    unit = WeightedGraph.uniform(problem.mask)
    lam0 = spectral_summary(unit).lambda2
    if lam0 <= DEGENERACY_TOL:
        raise InfeasibleProblemError("the topology mask is disconnected; lambda2 >= lambda2_min is unattainable", binding="lambda2")
    _, degrees = adjacency_and_degrees(unit)
    c_min = problem.lambda2_min / lam0
    c_max = (1.0 - 1e-9) / (problem.gamma * float(degrees.max()))
    if c_min >= c_max:
        raise InfeasibleProblemError(
            f"uniform weights reach lambda2_min only at scale {c_min:.4g}, above the stability limit {c_max:.4g}",
            binding="lambda2",
        )
    for scale in np.geomspace(c_min, c_max, 64):
        values = constraint_values(problem, np.full(problem.mask.n_edges, scale), problem.eps_max)
        if values.g_err <= 0.0 and values.g_lambda <= 1e-12:
            return
    raise InfeasibleProblemError(
        f"no uniformly weighted mask with eps = eps_max meets the error bound e_R = {problem.e_R:.6g}",
        binding="error_bound",
    )


def restore_feasibility(problem: CodesignProblem, weights, epsilons):
    """Rescale weights up to lambda2_min, then move eps toward eps_max until the bound holds."""
    w = np.maximum(np.asarray(weights, dtype=float), 0.0).copy()
    eps = np.asarray(epsilons, dtype=float).copy()
    values = constraint_values(problem, w, eps)
    if values.g_lambda > 0.0:
        if values.lambda2 <= DEGENERACY_TOL:
            w = np.maximum(w, 1e-3)
            values = constraint_values(problem, w, eps)
        factor = problem.lambda2_min * (1.0 + 1e-9) / values.lambda2
        logger.warning(f"restoration: scaling edge weights by {factor:.6g} to reach lambda2_min")
        w *= factor
        values = constraint_values(problem, w, eps)
    if values.g_err > 0.0:
        if constraint_values(problem, w, problem.eps_max).g_err > 0.0:
            logger.warning("restoration: error bound violated even at eps = eps_max")
            return w, eps
        lo, hi = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if constraint_values(problem, w, eps + mid * (problem.eps_max - eps)).g_err > 0.0:
                lo = mid
            else:
                hi = mid
        logger.warning(f"restoration: moved eps {hi:.3g} of the way toward eps_max to meet the error bound")
        eps = np.minimum(eps + hi * (problem.eps_max - eps), problem.eps_max)
    return w, eps


def prune(problem: CodesignProblem, weights, threshold: float, tol_feas: float):
    """Zero out edges lighter than ``threshold``; restore them heaviest-first while lambda2 falls short."""
    w = np.asarray(weights, dtype=float)
    pruned = np.where(w < threshold, 0.0, w)
    candidates = sorted((k for k in range(w.size) if 0.0 < w[k] < threshold), key=lambda k: -w[k])
    restored = []
    while candidates and spectral_summary(WeightedGraph.from_vector(problem.mask, pruned)).lambda2 < problem.lambda2_min - tol_feas:
        k = candidates.pop(0)
        pruned[k] = w[k]
        restored.append(problem.mask.edge_list[k])
        logger.warning(f"pruning rollback: kept edge {problem.mask.edge_list[k]} (w = {w[k]:.3g}) to hold lambda2")
    return pruned, restored


def _initial_point(problem: CodesignProblem, options: SolverOptions, rng: np.random.Generator, start_index: int):
    m, n = problem.mask.n_edges, problem.n_agents
    w0 = np.ones(m)
    eps0 = problem.eps_max.copy()
    if start_index > 0:
        w0 = w0 * np.exp(rng.normal(0.0, 0.5, m))
        eps0 = problem.eps_max * rng.uniform(0.5, 1.0, n)
    eps0 = np.clip(eps0, options.eps_floor, problem.eps_max)
    return restore_feasibility(problem, w0, eps0)


def _stationarity(x, grad, lower, upper) -> float:
    projected = np.clip(x - grad, lower, upper)
    return float(np.max(np.abs(x - projected)))


def _privacy_block_step(merit, x, m: int, bounds, options: SolverOptions) -> np.ndarray:
    """Minimize the merit over eps with the weights held at ``x[:m]``."""
    w = x[:m]

    def block(e):
        value, grad = merit(np.concatenate([w, e]))
        return value, grad[m:]

    result = minimize(
        block, x[m:], jac=True, method="L-BFGS-B", bounds=bounds[m:],
        options={"maxiter": options.max_inner, "ftol": 1e-15, "gtol": 1e-12},
    )
    candidate = np.concatenate([w, np.clip(result.x, options.eps_floor, [b[1] for b in bounds[m:]])])
    if merit(candidate)[0] <= merit(x)[0]:
        return candidate
    return x


def _solve_start(problem: CodesignProblem, options: SolverOptions, seed_seq, start_index: int) -> CodesignSolution:
    rng = np.random.default_rng(seed_seq)
    m, n = problem.mask.n_edges, problem.n_agents
    w, eps = _initial_point(problem, options, rng, start_index)
    x = np.concatenate([w, eps])
    lower = np.concatenate([np.zeros(m), np.full(n, options.eps_floor)])
    upper = np.concatenate([np.full(m, np.inf), problem.eps_max])
    bounds = list(zip(lower, [None] * m + list(problem.eps_max)))

    mu = options.mu_init
    evaluation = _Evaluation(problem, x[:m], x[m:])
    multipliers = np.zeros(evaluation.normalized_constraints().size)

    def merit(z):
        ev = _Evaluation(problem, z[:m], z[m:])
        c = ev.normalized_constraints()
        shifted = np.maximum(0.0, multipliers + mu * c)
        value = ev.f + float(np.sum(shifted ** 2 - multipliers ** 2)) / (2.0 * mu)
        grad = ev.grad_f + ev.normalized_jacobian().T @ shifted
        return value, grad

    history = []
    prev_violation = math.inf
    prev_f = evaluation.f
    stopped = False
    stationarity = math.nan
    iterations = 0
    for iterations in range(1, options.max_outer + 1):
        merit_start = merit(x)[0]
        result = minimize(
            merit, x, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": options.max_inner, "ftol": 1e-15, "gtol": 1e-10},
        )
        candidate = np.clip(result.x, lower, upper)
        if merit(candidate)[0] <= merit_start:
            x = candidate
        x = _privacy_block_step(merit, x, m, bounds, options)
        merit_end = merit(x)[0]

        evaluation = _Evaluation(problem, x[:m], x[m:])
        c = evaluation.normalized_constraints()
        violation = float(max(0.0, c.max()))
        multipliers = np.maximum(0.0, multipliers + mu * c)
        lagrangian_grad = evaluation.grad_f + evaluation.normalized_jacobian().T @ multipliers
        if evaluation.nonsmooth:
            stationarity = _stationarity(x[m:], lagrangian_grad[m:], lower[m:], upper[m:])
        else:
            stationarity = _stationarity(x, lagrangian_grad, lower, upper)
        stalled = abs(evaluation.f - prev_f) <= options.obj_tol * (1.0 + abs(evaluation.f))
        history.append({
            "objective": evaluation.f,
            "violation": violation,
            "mu": mu,
            "stationarity": stationarity,
            "nonsmooth": evaluation.nonsmooth,
            "merit_start": merit_start,
            "merit": merit_end,
        })
        logger.info(
            f"start {start_index} outer {iterations}: objective {evaluation.f:.6g}, "
            f"violation {violation:.3e}, stationarity {stationarity:.3e}, mu {mu:.1e}"
            + (" (eps block only)" if evaluation.nonsmooth else "")
        )
        if violation <= options.feas_tol and stationarity <= options.stat_tol:
            stopped = True
            break
        if stalled:
            logger.debug(f"start {start_index} outer {iterations}: objective stalled short of stationarity; raising mu")
        if stalled or violation > 0.25 * prev_violation:
            mu = min(mu * options.mu_growth, options.mu_max)
        prev_violation = violation
        prev_f = evaluation.f

    w, eps = restore_feasibility(problem, x[:m], x[m:])
    w, restored = prune(problem, w, options.prune_threshold, options.validate_tol)
    w, eps = restore_feasibility(problem, w, eps)
    values = constraint_values(problem, w, eps)
    solution = CodesignSolution(
        graph=WeightedGraph.from_vector(problem.mask, w),
        epsilons=eps,
        objective_value=objective(w, eps, problem.vartheta),
        constraint_residuals=_residuals(values),
        converged=False,
        iterations=iterations,
        stationarity=stationarity,
        start_index=start_index,
        restored_edges=restored,
        history=history,
    )
    report = validate_solution(problem, solution, options.validate_tol)
    solution.converged = bool(stopped and report.feasible)
    if solution.converged:
        solution.status = "converged"
    elif not report.feasible:
        solution.status = "infeasible point: " + ", ".join(sorted(report.violations))
    else:
        solution.status = (
            f"iteration limit reached after {iterations} outer iterations (stationarity {stationarity:.3e})"
        )
    return solution


def _run_start(args) -> CodesignSolution:
    return _solve_start(*args)


def solve(problem: CodesignProblem, options: SolverOptions | None = None, seed=0) -> CodesignSolution:
    """Multi-start co-design; returns the best feasible start (ties broken by start order)."""
    options = options or SolverOptions()
    if np.any(problem.eps_max < options.eps_floor):
        raise ConfigError(f"eps_max entries must be at least eps_floor = {options.eps_floor}")
    feasibility_precheck(problem)

    root = fresh_seed(seed)
    jobs = [(problem, options, child, k) for k, child in enumerate(root.spawn(options.multistarts))]
    if options.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=options.workers) as pool:
            solutions = list(pool.map(_run_start, jobs))
    else:
        solutions = [_run_start(job) for job in jobs]

    feasible = [s for s in solutions if s.converged]
    if feasible:
        best = min(feasible, key=lambda s: (s.objective_value, s.start_index))
    else:
        best = min(solutions, key=lambda s: (_worst_violation(s), s.objective_value, s.start_index))
        logger.warning(f"no start converged; returning start {best.start_index} ({best.status})")
    logger.info(f"best start {best.start_index}: objective {best.objective_value:.6g}, converged {best.converged}")
    return best


def _worst_violation(solution: CodesignSolution) -> float:
    r = solution.constraint_residuals
    slacks = [r["error_bound_slack"], r["lambda2_slack"], r["degree_slack"], *r["eps_slacks"]]
    return max(0.0, -min(slacks))


def validate_solution(problem: CodesignProblem, solution: CodesignSolution, tol_feas: float = 1e-6) -> ValidationReport:
    """Recompute every constraint from scratch and confirm the exact steady-state error meets e_R."""
    weights = solution.graph.weight_vector() if solution.graph.mask == problem.mask else \
        WeightedGraph(problem.mask, solution.graph.weights).weight_vector()
    eps = np.asarray(solution.epsilons, dtype=float)
    violations = {}

    if np.any(eps <= 0):
        violations["eps_positive"] = float(-eps.min())
        return ValidationReport(False, violations, {}, math.nan, math.nan, math.nan)

    values = constraint_values(problem, weights, eps)
    if values.g_err > tol_feas:
        violations["error_bound"] = values.g_err
    if values.g_lambda > tol_feas:
        violations["lambda2"] = values.g_lambda
    if np.max(values.g_eps) > tol_feas:
        violations["eps_max"] = float(np.max(values.g_eps))
    if np.max(values.g_degree) >= 0.0:
        violations["stability"] = float(np.max(values.g_degree))

    recomputed = objective(weights, eps, problem.vartheta)
    if abs(recomputed - solution.objective_value) > 1e-9 * (1.0 + abs(recomputed)):
        violations["objective_mismatch"] = recomputed - solution.objective_value

    e_ss = math.nan
    if "stability" not in violations and values.lambda2 > DEGENERACY_TOL:
        try:
            e_ss = steady_state(scenario_for(problem, weights, eps)).e_ss_exact
        except PrivFormError as exc:
            violations["steady_state"] = str(exc)
        else:
            if e_ss > problem.e_R + tol_feas:
                violations["e_ss_exact"] = e_ss - problem.e_R
    return ValidationReport(
        feasible=not violations,
        violations=violations,
        residuals=_residuals(values),
        e_ss_exact=e_ss,
        bound=values.bound,
        objective_recomputed=recomputed,
    )


def sweep(problem: CodesignProblem, options: SolverOptions, axis: str, values, seed=0):
    """Solve once per axis value, each from the same seed so results are comparable.

    Returns ``(value, instance, solution)`` triples; ``solution`` is None when
    the precheck found that value infeasible.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    results = []
    for value in values:
        instance = problem.with_axis(axis, value)
        logger.info(f"sweep {axis} = {value}")
        try:
            solution = solve(instance, options, seed)
        except InfeasibleProblemError as exc:
            logger.warning(f"sweep {axis} = {value} is infeasible ({exc.binding}): {exc}")
            solution = None
        results.append((float(value), instance, solution))
    return results
