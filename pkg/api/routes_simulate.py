import logging

from flask import Blueprint, current_app, jsonify

from api.helpers import DATA_DIR, MAX_REQUEST_WORK, json_endpoint, request_seed, shipped_graph_source
from utils.config import build_scenario, build_simulation_settings
from utils.errors import ConfigError
from utils.exporters import TRAJECTORY_COLUMNS
from utils.formation_sim import trajectory_rows
from utils.runner import simulate_payload

logger = logging.getLogger(__name__)

simulate_bp = Blueprint('simulate', __name__)


@simulate_bp.route('/simulate', methods=['POST'])
@json_endpoint
def simulate(data):
    scenario = build_scenario(shipped_graph_source(data), DATA_DIR)
    simulation = dict(data.get("simulation", {}))
    # trajectories are opt-in over HTTP
    simulation.setdefault("record_trajectory", False)
    settings = build_simulation_settings({**data, "simulation": simulation})

    work = settings.horizon * settings.trials * scenario.n_agents
    if work > MAX_REQUEST_WORK:
        raise ConfigError(
            f"horizon x trials x agents = {work} exceeds the per-request limit {MAX_REQUEST_WORK}; use the CLI"
        )

    payload, recorded = simulate_payload(scenario, settings, request_seed(data), current_app.config["WORKERS"])
    if recorded is not None:
        payload["trajectory"] = {
            "columns": list(TRAJECTORY_COLUMNS),
            "rows": [list(row) for row in trajectory_rows(recorded)],
        }
    logger.info(f"simulate: empirical {payload['empirical_mse_tail']:.6g} vs exact {payload['e_ss_exact']:.6g}")
    return jsonify(payload)
