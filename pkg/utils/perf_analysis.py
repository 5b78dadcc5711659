"""Steady-state formation error: exact Lyapunov solution and the scalar trace bound.

The per-dimension disagreement obeys

    e(k+1) = M e(k) + P z(k),   M = I - gamma L - 11^T/N,   P = I - 11^T/N

with z ~ N(0, Sigma_z), Sigma_z = gamma^2 A Sigma_v A + Sigma_n. Its covariance
converges to the unique solution of Sigma = Q + M Sigma M with Q = P Sigma_z P,
and e_ss = (d/N) Tr(Sigma).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from utils.errors import ConfigError, ConvergenceError, DisconnectedGraphError
from utils.formation_sim import FormationSpec, check_step_size
from utils.graph_core import WeightedGraph, adjacency_and_degrees, laplacian, spectral_summary
from utils.privacy_mech import NoiseModel

logger = logging.getLogger(__name__)

KRONECKER_MAX_N = 40
LYAPUNOV_RTOL = 1e-10
CONNECTIVITY_TOL = 1e-9


@dataclass(frozen=True)
class NetworkScenario:
    graph: WeightedGraph
    formation: FormationSpec
    gamma: float
    noise: NoiseModel
    dimension: int
    allow_spectral_gamma: bool = False

    def __post_init__(self):
        n = self.graph.n_agents
        if self.formation.n_agents != n or self.noise.n_agents != n:
            raise ConfigError(
                f"scenario size mismatch: graph has {n} agents, formation {self.formation.n_agents}, noise {self.noise.n_agents}"
            )
        if self.formation.dimension != self.dimension:
            raise ConfigError(f"formation dimension {self.formation.dimension} != scenario dimension {self.dimension}")
        check_step_size(self.graph, self.gamma, self.allow_spectral_gamma)

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents


@dataclass
class CovarianceReport:
    sigma_z: np.ndarray
    m: np.ndarray
    sigma_inf: np.ndarray
    e_ss_exact: float
    e_ss_bound: float
    e_ss_bound_printed: float
    sigma_max_m: float
    lambda2: float
    lambda_max: float
    trace_q: float
    dimension: int
    fiedler_dominant: bool = True
    residual: float = 0.0
    method: str = "kronecker"

    def to_dict(self) -> dict:
        return {
            "sigma_z": self.sigma_z.tolist(),
            "M": self.m.tolist(),
            "sigma_inf": self.sigma_inf.tolist(),
            "e_ss_exact": self.e_ss_exact,
            "e_ss_bound": self.e_ss_bound,
            "e_ss_bound_printed": self.e_ss_bound_printed,
            "sigma_max_M": self.sigma_max_m,
            "lambda2": self.lambda2,
            "lambda_max": self.lambda_max,
            "trace_Q": self.trace_q,
            "dimension": self.dimension,
            "fiedler_dominant": self.fiedler_dominant,
            "lyapunov_residual": self.residual,
            "method": self.method,
        }


class BoundTerms(NamedTuple):
    value: float
    printed: float
    trace_q: float
    sigma_max_m: float
    fiedler_dominant: bool


def centering_projector(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def sigma_z(g: WeightedGraph, gamma: float, noise: NoiseModel) -> np.ndarray:
    adjacency, _ = adjacency_and_degrees(g)
    result = gamma ** 2 * adjacency @ noise.sigma_v @ adjacency + noise.sigma_n
    return 0.5 * (result + result.T)


def m_matrix(g: WeightedGraph, gamma: float) -> np.ndarray:
    n = g.n_agents
    m = np.eye(n) - gamma * laplacian(g) - np.full((n, n), 1.0 / n)
    return 0.5 * (m + m.T)


def spectral_radius_m(g: WeightedGraph, gamma: float) -> float:
    """Largest singular value of M: the slowest non-consensus mode of I - gamma L."""
    summary = spectral_summary(g)
    return max(abs(1.0 - gamma * summary.lambda2), abs(1.0 - gamma * summary.lambda_max))


def q_matrix(sigma_z_matrix: np.ndarray) -> np.ndarray:
    p = centering_projector(sigma_z_matrix.shape[0])
    q = p @ sigma_z_matrix @ p
    return 0.5 * (q + q.T)


def covariance_recursion(sigma_e: np.ndarray, m: np.ndarray, sigma_z_matrix: np.ndarray) -> np.ndarray:
    """One step of Sigma_e(k+1) = M Sigma_e(k) M + P Sigma_z P."""
    nxt = m @ sigma_e @ m + q_matrix(sigma_z_matrix)
    return 0.5 * (nxt + nxt.T)


def partial_sum_covariance(m: np.ndarray, q: np.ndarray, steps: int) -> np.ndarray:
    """sum_{t=0}^{steps-1} M^t Q M^t, the covariance after ``steps`` steps from zero."""
    total = np.zeros_like(q)
    term = q.copy()
    for _ in range(steps):
        total += term
        term = m @ term @ m
    return total


def lyapunov_residual(sigma: np.ndarray, m: np.ndarray, q: np.ndarray) -> float:
    return float(np.linalg.norm(sigma - q - m @ sigma @ m))


def solve_lyapunov(m: np.ndarray, q: np.ndarray, method: str = "auto", max_iter: int = 200000) -> np.ndarray:
    """Solve Sigma = Q + M Sigma M for symmetric M with spectral radius below one.

    ``kronecker`` solves (I - M (x) M) vec(Sigma) = vec(Q) directly; ``smith``
    doubles Sigma <- Sigma + A Sigma A, A <- A^2; ``fixed_point`` iterates the
    recursion itself. ``auto`` picks Kronecker up to N = 40, Smith above.
    """
    n = m.shape[0]
    q_norm = float(np.linalg.norm(q))
    if method == "auto":
        method = "kronecker" if n <= KRONECKER_MAX_N else "smith"

    if method == "kronecker":
        system = np.eye(n * n) - np.kron(m, m)
        sigma = np.linalg.solve(system, q.reshape(-1)).reshape(n, n)
    elif method == "smith":
        sigma = q.copy()
        a = m.copy()
        for _ in range(200):
            increment = a @ sigma @ a
            sigma = sigma + increment
            a = a @ a
            if np.linalg.norm(increment) <= 1e-16 * max(1.0, q_norm):
                break
    elif method == "fixed_point":
        sigma = q.copy()
        for _ in range(max_iter):
            nxt = q + m @ sigma @ m
            delta = np.linalg.norm(nxt - sigma)
            sigma = nxt
            # stop at rounding level of the iterate itself
            if delta <= 1e-14 * max(1.0, q_norm, float(np.linalg.norm(sigma))):
                break
    else:
        raise ConfigError(f"unknown Lyapunov method {method!r}")

    sigma = 0.5 * (sigma + sigma.T)
    residual = lyapunov_residual(sigma, m, q)
    if residual > LYAPUNOV_RTOL * max(1.0, q_norm):
        raise ConvergenceError(f"Lyapunov solve ({method}) residual {residual:.3e} exceeds tolerance", residual=residual)
    return sigma


def trace_q(adjacency: np.ndarray, gamma: float, privacy_sigmas, process_sigmas) -> float:
    """Closed form of Tr(P Sigma_z P)."""
    n = adjacency.shape[0]
    degrees = adjacency.sum(axis=1)
    spread = (adjacency ** 2).sum(axis=1) - degrees ** 2 / n
    privacy_sigmas = np.asarray(privacy_sigmas, dtype=float)
    process_sigmas = np.asarray(process_sigmas, dtype=float)
    return float(gamma ** 2 * np.dot(spread, privacy_sigmas ** 2) + (n - 1) / n * np.sum(process_sigmas ** 2))


def error_bound_terms(scenario: NetworkScenario) -> BoundTerms:
    """Trace bound (d/N) Tr(Q) / (1 - sigma_max(M)^2) plus the closed-form fraction as printed.

    sigma_max(M) is max(|1 - gamma lambda2|, |1 - gamma lambda_N|); it equals
    1 - gamma lambda2 whenever the Fiedler mode dominates.
    """
    g = scenario.graph
    n, d, gamma = g.n_agents, scenario.dimension, scenario.gamma
    summary = spectral_summary(g)
    lam2 = summary.lambda2
    if lam2 <= CONNECTIVITY_TOL:
        raise DisconnectedGraphError("error bound needs lambda2 > 0; the graph is disconnected")
    adjacency, degrees = adjacency_and_degrees(g)
    tq = trace_q(adjacency, gamma, scenario.noise.privacy_sigmas, scenario.noise.process_sigmas)

    fiedler_mode = abs(1.0 - gamma * lam2)
    top_mode = abs(1.0 - gamma * summary.lambda_max)
    sigma_max = max(fiedler_mode, top_mode)
    if sigma_max >= 1.0:
        raise ConvergenceError(f"sigma_max(M) = {sigma_max:.6g} >= 1: no steady state exists")
    value = (d / n) * tq / (1.0 - sigma_max ** 2)

    spread = (adjacency ** 2).sum(axis=1) - degrees ** 2 / n
    numerator = gamma * d * np.dot(spread, scenario.noise.privacy_sigmas ** 2) \
        + (n - 1) / n * np.sum(scenario.noise.process_sigmas ** 2)
    printed = float(numerator / (n * lam2 * (2.0 - gamma * lam2)))
    return BoundTerms(float(value), printed, tq, float(sigma_max), fiedler_mode >= top_mode)


def error_bound(scenario: NetworkScenario) -> float:
    return error_bound_terms(scenario).value


def steady_state(scenario: NetworkScenario, method: str = "auto") -> CovarianceReport:
    g = scenario.graph
    n, d = g.n_agents, scenario.dimension
    summary = spectral_summary(g)
    if summary.lambda2 <= CONNECTIVITY_TOL:
        raise DisconnectedGraphError(
            "steady-state error needs a connected graph (lambda2 > 0); a disconnected network never agrees"
        )
    sz = sigma_z(g, scenario.gamma, scenario.noise)
    m = m_matrix(g, scenario.gamma)
    q = q_matrix(sz)
    if method == "auto":
        method = "kronecker" if n <= KRONECKER_MAX_N else "smith"
    sigma_inf = solve_lyapunov(m, q, method)
    terms = error_bound_terms(scenario)
    e_ss = (d / n) * float(np.trace(sigma_inf))
    if e_ss > terms.value * (1.0 + 1e-9) + 1e-12:
        logger.warning(f"exact e_ss {e_ss:.6g} exceeds trace bound {terms.value:.6g}")
    return CovarianceReport(
        sigma_z=sz,
        m=m,
        sigma_inf=sigma_inf,
        e_ss_exact=e_ss,
        e_ss_bound=terms.value,
        e_ss_bound_printed=terms.printed,
        sigma_max_m=terms.sigma_max_m,
        lambda2=summary.lambda2,
        lambda_max=summary.lambda_max,
        trace_q=terms.trace_q,
        dimension=d,
        fiedler_dominant=terms.fiedler_dominant,
        residual=lyapunov_residual(sigma_inf, m, q),
        method=method,
    )
