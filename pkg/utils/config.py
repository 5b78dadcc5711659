"""Run configuration: environment settings and the TOML / JSON run schema.

The same mapping is accepted from a TOML file (CLI) and from a JSON request
body (HTTP). Tables::

    graph = "ten_node.json"        # or a [graph] table holding graph JSON or {path = ...}
    [scenario]   dimension, gamma, default_weight, allow_spectral_gamma
    [privacy]    epsilons/epsilon, deltas/delta, adjacency_bounds/adjacency_bound,
                 process_sigmas/process_sigma, sigmas (explicit privacy noise)
    [formation]  reference_points or offsets = [{i, j, delta}]
    [simulation] horizon, trials, burn_in, init_spread, lyapunov_method, record_trajectory
    [codesign]   e_R, lambda2_min, vartheta, eps_max
    [solver]     any SolverOptions field
    [sweep]      axis, values
    [run]        seed, out_dir (CLI flags win)
"""

from __future__ import annotations

import logging
import math
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from dotenv import load_dotenv

from utils.codesign_opt import SWEEP_AXES, CodesignProblem, SolverOptions
from utils.errors import ConfigError
from utils.exporters import read_json
from utils.formation_sim import FormationSpec, default_reference_points
from utils.graph_core import WeightedGraph
from utils.perf_analysis import NetworkScenario
from utils.privacy_mech import NoiseModel, PrivacySpec

load_dotenv()

logger = logging.getLogger(__name__)

MODES = ("analyze", "simulate", "codesign", "sweep")
LYAPUNOV_METHODS = ("auto", "kronecker", "smith", "fixed_point")
MAX_SEED = 2 ** 64 - 1
DEFAULT_HORIZON = 20000


@dataclass(frozen=True)
class Settings:
    log_level: str
    out_dir: str
    workers: int
    rate_limits: list[str]
    codesign_limit: str
    secret_key: str


def get_settings() -> Settings:
    try:
        workers = int(os.environ.get("PRIVFORM_WORKERS", "1"))
    except ValueError as e:
        raise ConfigError(f"PRIVFORM_WORKERS must be an integer: {e}") from e
    limits = os.environ.get("PRIVFORM_RATE_LIMITS", "200 per day;50 per hour")
    return Settings(
        log_level=os.environ.get("PRIVFORM_LOG_LEVEL", "INFO").upper(),
        out_dir=os.environ.get("PRIVFORM_OUT_DIR", "out"),
        workers=max(1, workers),
        rate_limits=[part.strip() for part in limits.split(";") if part.strip()],
        codesign_limit=os.environ.get("PRIVFORM_CODESIGN_LIMIT", "10 per minute"),
        secret_key=os.environ.get("SECRET_KEY", "dev-secret-key-change-in-production"),
    )


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config {path} is not valid TOML: {e}") from e


def _table(data: Mapping, name: str) -> dict:
    section = data.get(name, {})
    if not isinstance(section, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return dict(section)


def _number(section: Mapping, key: str, default=None, table: str = ""):
    value = section.get(key, default)
    if value is None:
        return None
    try:
        value = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{table}.{key} must be a number, got {value!r}") from e
    if not math.isfinite(value):
        raise ConfigError(f"{table}.{key} must be finite")
    return value


def _integer(section: Mapping, key: str, default=None, table: str = ""):
    value = section.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{table}.{key} must be an integer, got {value!r}")
    return int(value)


def per_agent(section: Mapping, plural: str, singular: str, n: int, default=None, table: str = "") -> np.ndarray:
    """A length-n vector from ``plural`` (list) or a broadcast ``singular`` scalar."""
    if plural in section and singular in section and plural != singular:
        raise ConfigError(f"give either {table}.{plural} or {table}.{singular}, not both")
    value = section.get(plural, section.get(singular, default))
    if value is None:
        raise ConfigError(f"{table}.{plural} (or scalar {table}.{singular}) is required")
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{table}.{plural} must be numeric: {e}") from e
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{table}.{plural} needs {n} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{table}.{plural} must be finite")
    return arr


def build_graph(data: Mapping, base_dir: str = ".", default_weight: float | None = None) -> WeightedGraph:
    source = data.get("graph")
    if source is None:
        raise ConfigError("a graph is required: set graph = \"<path>\" or a [graph] table")
    if isinstance(source, str):
        source = {"path": source}
    if not isinstance(source, Mapping):
        raise ConfigError("graph must be a path or a table")
    if "path" in source:
        path = source["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        graph_data = read_json(path)
    else:
        graph_data = source
    return WeightedGraph.from_dict(graph_data, default_weight=default_weight)


def default_gamma(n: int) -> float:
    return 1.0 / (2.0 * n)


def build_formation(data: Mapping, graph: WeightedGraph, dimension: int) -> FormationSpec:
    section = _table(data, "formation")
    n = graph.n_agents
    if "offsets" in section:
        offsets = {}
        for entry in section["offsets"]:
            try:
                i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
                offsets[(i, j)] = np.asarray(entry["delta"], dtype=float)
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"malformed formation offset {entry!r}: {e}") from e
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ConfigError(f"formation offset ({i + 1}, {j + 1}) is outside 1..{n}")
        return FormationSpec.from_offsets(n, dimension, offsets)
    points = section.get("reference_points")
    if points is None:
        points = default_reference_points(n, dimension)
    points = np.asarray(points, dtype=float)
    if points.shape != (n, dimension):
        raise ConfigError(f"formation.reference_points must be {n} x {dimension}, got shape {points.shape}")
    return FormationSpec.from_points(points, graph.mask)


def build_noise(data: Mapping, n: int) -> NoiseModel:
    section = _table(data, "privacy")
    process = per_agent(section, "process_sigmas", "process_sigma", n, default=0.0, table="privacy")
    has_eps = "epsilons" in section or "epsilon" in section
    if not has_eps:
        if "sigmas" not in section:
            raise ConfigError("privacy needs epsilons (calibrated noise) or sigmas (explicit noise)")
        return NoiseModel.uncalibrated(per_agent(section, "sigmas", "sigmas", n, table="privacy"), process)
    epsilons = per_agent(section, "epsilons", "epsilon", n, table="privacy")
    deltas = per_agent(section, "deltas", "delta", n, table="privacy")
    bounds = per_agent(section, "adjacency_bounds", "adjacency_bound", n, default=1.0, table="privacy")
    specs = [PrivacySpec(float(e), float(d), float(b)) for e, d, b in zip(epsilons, deltas, bounds)]
    explicit = section.get("sigmas")
    if explicit is not None:
        explicit = per_agent(section, "sigmas", "sigmas", n, table="privacy")
    return NoiseModel.from_specs(specs, process, explicit)


def build_scenario(data: Mapping, base_dir: str = ".") -> NetworkScenario:
    section = _table(data, "scenario")
    dimension = _integer(section, "dimension", 1, "scenario")
    if dimension < 1:
        raise ConfigError("scenario.dimension must be at least 1")
    graph = build_graph(data, base_dir, _number(section, "default_weight", None, "scenario"))
    if not graph.weights:
        logger.warning("graph has no weighted edges; set w on edges or scenario.default_weight")
    n = graph.n_agents
    gamma = _number(section, "gamma", None, "scenario")
    if gamma is None:
        gamma = default_gamma(n)
    return NetworkScenario(
        graph=graph,
        formation=build_formation(data, graph, dimension),
        gamma=gamma,
        noise=build_noise(data, n),
        dimension=dimension,
        allow_spectral_gamma=bool(section.get("allow_spectral_gamma", False)),
    )


def build_problem(data: Mapping, base_dir: str = ".") -> CodesignProblem:
    scenario = _table(data, "scenario")
    privacy = _table(data, "privacy")
    codesign = _table(data, "codesign")
    mask = build_graph(data, base_dir).mask
    n = mask.n_agents
    gamma = _number(scenario, "gamma", None, "scenario")
    for key in ("e_R", "lambda2_min", "vartheta"):
        if key not in codesign:
            raise ConfigError(f"codesign.{key} is required")
    return CodesignProblem(
        mask=mask,
        e_R=_number(codesign, "e_R", table="codesign"),
        lambda2_min=_number(codesign, "lambda2_min", table="codesign"),
        vartheta=_number(codesign, "vartheta", table="codesign"),
        eps_max=per_agent(codesign, "eps_max", "eps_max", n, table="codesign"),
        deltas=per_agent(privacy, "deltas", "delta", n, table="privacy"),
        adjacency_bounds=per_agent(privacy, "adjacency_bounds", "adjacency_bound", n, default=1.0, table="privacy"),
        process_sigmas=per_agent(privacy, "process_sigmas", "process_sigma", n, default=0.0, table="privacy"),
        gamma=default_gamma(n) if gamma is None else gamma,
        dimension=_integer(scenario, "dimension", 1, "scenario"),
    )


def build_solver_options(data: Mapping, workers: int | None = None) -> SolverOptions:
    section = _table(data, "solver")
    if workers is not None and "workers" not in section:
        section["workers"] = workers
    try:
        return SolverOptions.from_mapping(section)
    except TypeError as e:
        raise ConfigError(f"invalid solver options: {e}") from e


@dataclass
class SimulationSettings:
    horizon: int = DEFAULT_HORIZON
    trials: int = 1
    burn_in: int | None = None
    init_spread: float = 1.0
    lyapunov_method: str = "auto"
    record_trajectory: bool = True


def build_simulation_settings(data: Mapping, horizon: int | None = None, trials: int | None = None) -> SimulationSettings:
    section = _table(data, "simulation")
    settings = SimulationSettings(
        horizon=horizon if horizon is not None else _integer(section, "horizon", DEFAULT_HORIZON, "simulation"),
        trials=trials if trials is not None else _integer(section, "trials", 1, "simulation"),
        burn_in=_integer(section, "burn_in", None, "simulation"),
        init_spread=_number(section, "init_spread", 1.0, "simulation"),
        lyapunov_method=str(section.get("lyapunov_method", "auto")),
        record_trajectory=bool(section.get("record_trajectory", True)),
    )
    if settings.horizon < 1 or settings.trials < 1:
        raise ConfigError("simulation.horizon and simulation.trials must be at least 1")
    if settings.burn_in is not None and settings.burn_in < 0:
        raise ConfigError("simulation.burn_in must be nonnegative")
    if settings.lyapunov_method not in LYAPUNOV_METHODS:
        raise ConfigError(f"unknown lyapunov_method {settings.lyapunov_method!r}; expected one of {', '.join(LYAPUNOV_METHODS)}")
    return settings


@dataclass
class RunConfig:
    mode: str
    data: dict = field(default_factory=dict)
    base_dir: str = "."
    out_dir: str = "out"
    seed: int = 0
    trials: int | None = None
    horizon: int | None = None
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    config_path: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if not 0 <= int(self.seed) <= MAX_SEED:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("--trials must be at least 1")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("--horizon must be at least 1")
        if self.mode == "sweep":
            sweep = _table(self.data, "sweep")
            axis = self.sweep_axis or sweep.get("axis")
            values = self.sweep_values or tuple(sweep.get("values", ()))
            if axis not in SWEEP_AXES:
                raise ConfigError(f"sweep axis must be one of {', '.join(SWEEP_AXES)}, got {axis!r}")
            if not values:
                raise ConfigError("sweep.values must list at least one value")
            try:
                values = tuple(float(v) for v in values)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"sweep.values must be numbers: {e}") from e
            self.sweep_axis, self.sweep_values = axis, values

    @classmethod
    def from_file(
        cls, mode: str, path, out_dir=None, seed=None, trials=None, horizon=None, workers=None, sweep_axis=None, sweep_values=(),
    ) -> "RunConfig":
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path} does not exist")
        data = load_toml(path)
        settings = get_settings()
        run = _table(data, "run")
        return cls(
            mode=mode,
            data=data,
            base_dir=os.path.dirname(os.path.abspath(path)),
            out_dir=out_dir or run.get("out_dir") or settings.out_dir,
            seed=int(seed if seed is not None else run.get("seed", 0)),
            trials=trials,
            horizon=horizon,
            sweep_axis=sweep_axis,
            sweep_values=tuple(sweep_values or ()),
            config_path=os.fspath(path),
            workers=workers or settings.workers,
        )
