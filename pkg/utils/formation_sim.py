"""Forward simulation of the privatized formation-control protocol.

Each agent runs

    xbar_i(k+1) = xbar_i(k) + gamma * sum_j w_ij (xbar~_j(k) - xbar_i(k)) + n_i(k)

where ``xbar = x - p`` and ``xbar~_j`` is neighbor j's broadcast state after it
added its own Gaussian privacy noise. A sender draws one noise vector per step
and every neighbor receives the same privatized value.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from utils.errors import DisconnectedGraphError, FormationError, UnstableStepSizeError
from utils.graph_core import TopologyMask, WeightedGraph, adjacency_and_degrees, spectral_summary
from utils.privacy_mech import AgentNoiseStream, NoiseModel, agent_streams, fresh_seed, sample_privacy_noise

if TYPE_CHECKING:
    from utils.perf_analysis import NetworkScenario

logger = logging.getLogger(__name__)

CONSISTENCY_TOL = 1e-9
BURN_IN_DECAY = 1e-3
NOISE_CHUNK = 4096


def default_reference_points(n: int, d: int) -> np.ndarray:
    """Agents evenly spaced on the unit circle (first two coordinates)."""
    points = np.zeros((n, d))
    angles = 2.0 * math.pi * np.arange(n) / n
    points[:, 0] = np.cos(angles)
    if d >= 2:
        points[:, 1] = np.sin(angles)
    return points


@dataclass(frozen=True)
class FormationSpec:
    dimension: int
    reference_points: np.ndarray
    offsets: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        points = np.asarray(self.reference_points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dimension or self.dimension < 1:
            raise FormationError(f"reference points must be N x {self.dimension}, got shape {points.shape}")
        offsets = {}
        for (i, j), delta in self.offsets.items():
            delta = np.asarray(delta, dtype=float).reshape(self.dimension)
            back = self.offsets.get((j, i))
            if back is not None and not np.allclose(np.asarray(back, dtype=float), -delta, atol=CONSISTENCY_TOL):
                raise FormationError(f"offsets on ({i + 1}, {j + 1}) are not antisymmetric")
            if np.max(np.abs(points[j] - points[i] - delta)) > CONSISTENCY_TOL:
                raise FormationError(f"offset on ({i + 1}, {j + 1}) is inconsistent with the reference points")
            offsets[(i, j)] = delta
            offsets[(j, i)] = -delta
        object.__setattr__(self, "reference_points", points)
        object.__setattr__(self, "offsets", offsets)

    @property
    def n_agents(self) -> int:
        return self.reference_points.shape[0]

    @classmethod
    def from_points(cls, points, mask: TopologyMask | None = None) -> "FormationSpec":
        points = np.asarray(points, dtype=float)
        offsets = {}
        if mask is not None:
            offsets = {(i, j): points[j] - points[i] for i, j in mask.edge_list}
        return cls(points.shape[1], points, offsets)

    @classmethod
    def at_origin(cls, n: int, d: int) -> "FormationSpec":
        return cls(d, np.zeros((n, d)))

    @classmethod
    def from_offsets(cls, n: int, d: int, offsets: Mapping[tuple[int, int], Sequence[float]]) -> "FormationSpec":
        """Recover reference points from edge offsets (agent 1, or each component root, at the origin)."""
        neighbors: dict[int, list[tuple[int, np.ndarray]]] = {i: [] for i in range(n)}
        for (i, j), delta in offsets.items():
            delta = np.asarray(delta, dtype=float).reshape(d)
            neighbors[i].append((j, delta))
            neighbors[j].append((i, -delta))
        points = np.full((n, d), np.nan)
        for root in range(n):
            if not np.isnan(points[root, 0]):
                continue
            points[root] = 0.0
            queue = deque([root])
            while queue:
                i = queue.popleft()
                for j, delta in neighbors[i]:
                    if np.isnan(points[j, 0]):
                        points[j] = points[i] + delta
                        queue.append(j)
        return cls(d, points, dict(offsets))


@dataclass(frozen=True)
class NetworkState:
    time_index: int
    states: np.ndarray
    shifted_states: np.ndarray

    @classmethod
    def from_states(cls, states, spec: FormationSpec, time_index: int = 0) -> "NetworkState":
        states = np.asarray(states, dtype=float)
        return cls(time_index, states, states - spec.reference_points)

    @classmethod
    def from_shifted(cls, shifted, spec: FormationSpec, time_index: int = 0) -> "NetworkState":
        shifted = np.asarray(shifted, dtype=float)
        return cls(time_index, shifted + spec.reference_points, shifted)


@dataclass
class SimulationResult:
    horizon: int
    burn_in: int
    seed: object
    empirical_mse_tail: float
    error_trajectory: np.ndarray | None = None
    shifted_trajectory: np.ndarray | None = None
    reference_points: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "seed": self.seed if isinstance(self.seed, int) else None,
            "empirical_mse_tail": self.empirical_mse_tail,
        }


def check_step_size(g: WeightedGraph, gamma: float, allow_spectral: bool = False) -> None:
    """Require gamma * d_max < 1 (nonnegative I - gamma L), or gamma * lambda_N < 2 when relaxed."""
    if not gamma > 0:
        raise UnstableStepSizeError(f"step size gamma must be positive, got {gamma}")
    _, degrees = adjacency_and_degrees(g)
    d_max = float(degrees.max()) if degrees.size else 0.0
    if gamma * d_max < 1.0:
        return
    if allow_spectral and g.n_agents > 1:
        lam_max = spectral_summary(g).lambda_max
        if gamma * lam_max < 2.0:
            logger.warning(f"gamma*d_max = {gamma * d_max:.4f} >= 1; accepted under the spectral condition gamma*lambda_N = {gamma * lam_max:.4f} < 2")
            return
        raise UnstableStepSizeError(f"gamma*lambda_N = {gamma * lam_max:.6g} >= 2: the protocol is unstable")
    raise UnstableStepSizeError(f"gamma*d_max = {gamma * d_max:.6g} >= 1: step size too large for this graph")


def _contraction_factor(g: WeightedGraph, gamma: float) -> float:
    summary = spectral_summary(g)
    return max(abs(1.0 - gamma * summary.lambda2), abs(1.0 - gamma * summary.lambda_max))


def default_burn_in(g: WeightedGraph, gamma: float) -> int:
    """Twice the first k with rho^k < 1e-3, rho the contraction factor of the error dynamics."""
    rho = _contraction_factor(g, gamma)
    if rho >= 1.0:
        raise DisconnectedGraphError()
    if rho <= 0.0:
        return 2
    k = math.floor(math.log(BURN_IN_DECAY) / math.log(rho)) + 1
    return 2 * max(k, 1)


def network_error(state: NetworkState) -> np.ndarray:
    """Disagreement e = (I - 11^T/N) xbar, column l holding dimension l."""
    shifted = state.shifted_states
    return shifted - shifted.mean(axis=0, keepdims=True)


def _privatized_step(shifted, adjacency, degrees, gamma, privacy_noise, process_noise):
    broadcast = shifted + privacy_noise
    return shifted + gamma * (adjacency @ broadcast - degrees[:, None] * shifted) + process_noise


def step_private(
    state: NetworkState,
    g: WeightedGraph,
    spec: FormationSpec,
    noise: NoiseModel,
    gamma: float,
    rng: Sequence[AgentNoiseStream],
    allow_spectral: bool = False,
) -> NetworkState:
    n, d = state.states.shape
    if g.n_agents != n or spec.n_agents != n or noise.n_agents != n or spec.dimension != d:
        raise FormationError("graph, formation, noise and state disagree on N or d")
    if len(rng) != n:
        raise FormationError(f"expected one noise stream per agent ({n}), got {len(rng)}")
    check_step_size(g, gamma, allow_spectral)
    adjacency, degrees = adjacency_and_degrees(g)
    privacy_noise = np.stack([sample_privacy_noise(noise.privacy_sigmas[i], d, rng[i].privacy) for i in range(n)])
    process_noise = np.stack([sample_privacy_noise(noise.process_sigmas[i], d, rng[i].process) for i in range(n)])
    shifted = _privatized_step(state.shifted_states, adjacency, degrees, gamma, privacy_noise, process_noise)
    return NetworkState.from_shifted(shifted, spec, state.time_index + 1)


def initial_state(spec: FormationSpec, spread: float, rng: np.random.Generator) -> NetworkState:
    """x(0) = p + U(-spread, spread); the steady state does not depend on it."""
    perturbation = rng.uniform(-spread, spread, size=spec.reference_points.shape)
    return NetworkState.from_states(spec.reference_points + perturbation, spec)


class _ChunkedNoise:
    """Draws each agent's noise in blocks; the sequence matches one draw per step."""

    def __init__(self, streams: Sequence[AgentNoiseStream], noise: NoiseModel, d: int):
        self.streams = streams
        self.noise = noise
        self.d = d
        self._privacy = self._process = None
        self._pos = NOISE_CHUNK

    def _refill(self):
        n = len(self.streams)
        self._privacy = np.empty((NOISE_CHUNK, n, self.d))
        self._process = np.empty((NOISE_CHUNK, n, self.d))
        for i, stream in enumerate(self.streams):
            self._privacy[:, i, :] = self._draw(stream.privacy, self.noise.privacy_sigmas[i])
            self._process[:, i, :] = self._draw(stream.process, self.noise.process_sigmas[i])
        self._pos = 0

    def _draw(self, rng, sigma):
        if sigma == 0:
            return np.zeros((NOISE_CHUNK, self.d))
        return sigma * rng.standard_normal((NOISE_CHUNK, self.d))

    def next(self):
        if self._pos >= NOISE_CHUNK:
            self._refill()
        k = self._pos
        self._pos += 1
        return self._privacy[k], self._process[k]


def simulate(
    scenario: "NetworkScenario",
    horizon: int,
    seed=0,
    burn_in: int | None = None,
    initial: NetworkState | None = None,
    streams: Sequence[AgentNoiseStream] | None = None,
    init_spread: float = 1.0,
    record: bool = True,
) -> SimulationResult:
    """Run the protocol for ``horizon`` steps and tail-average the formation error.

    ``seed`` (int or SeedSequence) feeds the per-agent noise streams and the
    initial perturbation unless ``streams`` / ``initial`` are passed explicitly.
    """
    g = scenario.graph
    spec = scenario.formation
    n, d = g.n_agents, spec.dimension
    if spectral_summary(g).lambda2 <= 1e-9:
        raise DisconnectedGraphError()
    check_step_size(g, scenario.gamma, scenario.allow_spectral_gamma)
    if burn_in is None:
        burn_in = default_burn_in(g, scenario.gamma)
    if horizon <= burn_in:
        raise FormationError(f"horizon {horizon} must exceed burn-in {burn_in}")

    root = fresh_seed(seed)
    noise_seq, init_seq = root.spawn(2)
    if streams is None:
        streams = agent_streams(noise_seq, n)
    if initial is None:
        initial = initial_state(spec, init_spread, np.random.default_rng(init_seq))

    adjacency, degrees = adjacency_and_degrees(g)
    chunks = _ChunkedNoise(streams, scenario.noise, d)
    shifted = initial.shifted_states.copy()

    errors = shifted_traj = None
    if record:
        errors = np.empty((horizon + 1, n, d))
        shifted_traj = np.empty((horizon + 1, n, d))
        shifted_traj[0] = shifted
        errors[0] = shifted - shifted.mean(axis=0)

    tail_sum = 0.0
    for k in range(1, horizon + 1):
        privacy_noise, process_noise = chunks.next()
        shifted = _privatized_step(shifted, adjacency, degrees, scenario.gamma, privacy_noise, process_noise)
        error = shifted - shifted.mean(axis=0)
        if k >= burn_in:
            tail_sum += float(np.sum(error * error))
        if record:
            shifted_traj[k] = shifted
            errors[k] = error

    tail_steps = horizon - burn_in + 1
    # (d/N) * mean over steps and dimensions of ||e_[l](k)||^2
    mse = (d / n) * tail_sum / (tail_steps * d)
    logger.debug(f"simulated {horizon} steps (burn-in {burn_in}); tail MSE {mse:.6g}")
    return SimulationResult(
        horizon=horizon,
        burn_in=burn_in,
        seed=seed if isinstance(seed, int) else None,
        empirical_mse_tail=mse,
        error_trajectory=errors,
        shifted_trajectory=shifted_traj,
        reference_points=spec.reference_points.copy(),
    )


@dataclass
class TrialSummary:
    mean_mse: float
    standard_error: float
    trial_mse: list[float]
    horizon: int
    burn_in: int


def _run_trial(args) -> float:
    scenario, horizon, seed_seq, burn_in, init_spread = args
    return simulate(scenario, horizon, seed_seq, burn_in, init_spread=init_spread, record=False).empirical_mse_tail


def simulate_trials(
    scenario: "NetworkScenario",
    horizon: int,
    trials: int,
    seed=0,
    burn_in: int | None = None,
    workers: int = 1,
    init_spread: float = 1.0,
) -> TrialSummary:
    """Independent trials with independent seeded streams, folded in trial order."""
    if trials < 1:
        raise FormationError("at least one trial is required")
    if burn_in is None:
        burn_in = default_burn_in(scenario.graph, scenario.gamma)
    root = fresh_seed(seed)
    jobs = [(scenario, horizon, child, burn_in, init_spread) for child in root.spawn(trials)]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(job) for job in jobs]
    values = np.array(results)
    stderr = float(values.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return TrialSummary(float(values.mean()), stderr, [float(v) for v in values], horizon, burn_in)


def trajectory_rows(result: SimulationResult):
    """Yield (k, agent, dim, x, xbar, e) rows, agents and dimensions one-based."""
    if result.shifted_trajectory is None:
        raise FormationError("trajectory was not recorded; rerun with record=True")
    steps, n, d = result.shifted_trajectory.shape
    for k in range(steps):
        for i in range(n):
            for l in range(d):
                xbar = result.shifted_trajectory[k, i, l]
                yield (k, i + 1, l + 1, xbar + result.reference_points[i, l], xbar, result.error_trajectory[k, i, l])
