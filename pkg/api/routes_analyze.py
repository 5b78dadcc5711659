import logging

from flask import Blueprint, jsonify

from api.helpers import DATA_DIR, json_endpoint, shipped_graph_source
from utils.config import build_scenario, build_simulation_settings
from utils.runner import analyze_payload

logger = logging.getLogger(__name__)

analyze_bp = Blueprint('analyze', __name__)


@analyze_bp.route('/analyze', methods=['POST'])
@json_endpoint
def analyze(data):
    scenario = build_scenario(shipped_graph_source(data), DATA_DIR)
    settings = build_simulation_settings(data)
    payload = analyze_payload(scenario, settings.lyapunov_method)
    logger.info(f"analyze: N={scenario.n_agents}, e_ss {payload['e_ss_exact']:.6g}")
    return jsonify(payload)
