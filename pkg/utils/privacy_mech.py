"""Gaussian mechanism calibration and sampling for trajectory privacy."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc

from utils.errors import PrivacyDomainError

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Rational approximation of the standard normal quantile (lower-tail form).
_A = (-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2,
      1.383577518672690e2, -3.066479806614716e1, 2.506628277459239)
_B = (-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2,
      6.680131188771972e1, -1.328068155288572e1)
_C = (-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838,
      -2.549732539343734, 4.374664141464968, 2.938163982698783)
_D = (7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996,
      3.754408661907416)
_P_LOW = 0.02425


def q_function(y: float) -> float:
    """Complementary standard normal CDF, Q(y) = P(Z > y)."""
    return float(0.5 * erfc(y / _SQRT2))


def _normal_pdf(y: float) -> float:
    return math.exp(-0.5 * y * y) / _SQRT2PI


def _quantile_guess(p: float) -> float:
    """Approximate Phi^{-1}(p), relative error around 1e-9."""
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        return -_quantile_guess(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def q_inverse(p: float, max_newton: int = 8) -> float:
    """Inverse of ``q_function``: the y with Q(y) = p."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise PrivacyDomainError(f"q_inverse needs p in (0, 1), got {p}")
    # Q(y) = p  <=>  Phi(-y) = p
    y = -_quantile_guess(p)
    for _ in range(max_newton):
        density = _normal_pdf(y)
        if density == 0.0:
            break
        step = (q_function(y) - p) / density
        y += step
        if abs(step) <= 1e-15 * max(1.0, abs(y)):
            break
    return y


def _check_domain(delta: float, epsilon: float) -> None:
    if not 0.0 < delta < 0.5:
        raise PrivacyDomainError(f"delta must lie in (0, 1/2), got {delta}")
    if not epsilon > 0.0 or not math.isfinite(epsilon):
        raise PrivacyDomainError(f"epsilon must be positive, got {epsilon}")


def kappa(delta: float, epsilon: float) -> float:
    """Noise-to-sensitivity ratio of the Gaussian mechanism for (epsilon, delta)-privacy."""
    _check_domain(delta, epsilon)
    k = q_inverse(delta)
    return (k + math.sqrt(k * k + 2.0 * epsilon)) / (2.0 * epsilon)


def kappa_derivative(delta: float, epsilon: float) -> float:
    """d kappa / d epsilon; always negative."""
    _check_domain(delta, epsilon)
    k = q_inverse(delta)
    root = math.sqrt(k * k + 2.0 * epsilon)
    return 1.0 / (2.0 * epsilon * root) - (k + root) / (2.0 * epsilon * epsilon)


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float
    adjacency_bound_b: float

    def __post_init__(self):
        _check_domain(self.delta, self.epsilon)
        if not self.adjacency_bound_b > 0.0:
            raise PrivacyDomainError(f"adjacency bound b must be positive, got {self.adjacency_bound_b}")

    @property
    def sigma_min(self) -> float:
        return min_sigma(self)


def min_sigma(spec: PrivacySpec) -> float:
    return kappa(spec.delta, spec.epsilon) * spec.adjacency_bound_b


@dataclass(frozen=True)
class NoiseModel:
    """Per-agent privacy noise scales sigma_i and process noise scales s_i."""

    privacy_sigmas: np.ndarray
    process_sigmas: np.ndarray
    specs: tuple = ()

    def __post_init__(self):
        sigmas = np.asarray(self.privacy_sigmas, dtype=float)
        process = np.asarray(self.process_sigmas, dtype=float)
        if sigmas.ndim != 1 or sigmas.shape != process.shape:
            raise PrivacyDomainError(
                f"privacy and process noise vectors must have equal length, got {sigmas.shape} and {process.shape}"
            )
        if np.any(sigmas < 0) or np.any(process < 0):
            raise PrivacyDomainError("noise scales must be nonnegative")
        if self.specs:
            if len(self.specs) != sigmas.size:
                raise PrivacyDomainError("one privacy spec per agent is required")
            for i, spec in enumerate(self.specs):
                if spec is not None and sigmas[i] < spec.sigma_min:
                    raise PrivacyDomainError(
                        f"agent {i + 1}: sigma {sigmas[i]:.6g} is below the calibrated minimum {spec.sigma_min:.6g}"
                    )
        object.__setattr__(self, "privacy_sigmas", sigmas)
        object.__setattr__(self, "process_sigmas", process)
        object.__setattr__(self, "specs", tuple(self.specs))

    @classmethod
    def from_specs(cls, specs: Sequence[PrivacySpec], process_sigmas, privacy_sigmas=None) -> "NoiseModel":
        """Calibrate at equality sigma_i = kappa(delta_i, epsilon_i) * b_i unless scales are given."""
        if privacy_sigmas is None:
            privacy_sigmas = sigmas_for(specs)
        return cls(np.asarray(privacy_sigmas, dtype=float), np.asarray(process_sigmas, dtype=float), tuple(specs))

    @classmethod
    def uncalibrated(cls, privacy_sigmas, process_sigmas) -> "NoiseModel":
        return cls(np.asarray(privacy_sigmas, dtype=float), np.asarray(process_sigmas, dtype=float))

    @property
    def n_agents(self) -> int:
        return self.privacy_sigmas.size

    @property
    def sigma_v(self) -> np.ndarray:
        return np.diag(self.privacy_sigmas ** 2)

    @property
    def sigma_n(self) -> np.ndarray:
        return np.diag(self.process_sigmas ** 2)

    def permuted(self, permutation) -> "NoiseModel":
        perm = np.asarray(permutation)
        sigmas = np.empty_like(self.privacy_sigmas)
        process = np.empty_like(self.process_sigmas)
        sigmas[perm] = self.privacy_sigmas
        process[perm] = self.process_sigmas
        specs = ()
        if self.specs:
            reordered = [None] * len(self.specs)
            for i, p in enumerate(perm):
                reordered[p] = self.specs[i]
            specs = tuple(reordered)
        return NoiseModel(sigmas, process, specs)


def sigmas_for(specs: Sequence[PrivacySpec]) -> np.ndarray:
    return np.array([min_sigma(spec) for spec in specs])


def sample_privacy_noise(sigma: float, d: int, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise PrivacyDomainError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return np.zeros(d)
    return sigma * rng.standard_normal(d)


@dataclass
class AgentNoiseStream:
    """Independent random streams owned by one agent."""

    privacy: np.random.Generator
    process: np.random.Generator


def fresh_seed(seed) -> np.random.SeedSequence:
    """A SeedSequence with an unused spawn counter, so equal seeds always spawn equal children."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    return np.random.SeedSequence(seed)


def agent_streams(seed, n_agents: int) -> list[AgentNoiseStream]:
    """One privacy and one process-noise stream per agent, spawned from ``seed``."""
    root = fresh_seed(seed)
    streams = []
    for child in root.spawn(n_agents):
        privacy_seq, process_seq = child.spawn(2)
        streams.append(AgentNoiseStream(np.random.default_rng(privacy_seq), np.random.default_rng(process_seq)))
    return streams


def check_adjacency(v, w, b: float) -> bool:
    """True when two finite trajectories are within l2 distance ``b``.

    The comparison is inclusive and tolerates one ulp-level rounding of the
    summed squares.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != w.shape:
        raise PrivacyDomainError(f"trajectories differ in shape: {v.shape} vs {w.shape}")
    distance_sq = float(np.sum((v - w) ** 2))
    return distance_sq <= b * b * (1.0 + 1e-12)
