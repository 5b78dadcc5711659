import logging

from flask import Blueprint, current_app, jsonify

from api.helpers import DATA_DIR, json_endpoint, request_seed, shipped_graph_source
from utils.config import build_problem, build_solver_options
from utils.exporters import to_dot
from utils.runner import codesign_payload

logger = logging.getLogger(__name__)

codesign_bp = Blueprint('codesign', __name__)


@codesign_bp.route('/codesign', methods=['POST'])
@json_endpoint
def codesign(data):
    problem = build_problem(shipped_graph_source(data), DATA_DIR)
    options = build_solver_options(data, current_app.config["WORKERS"])
    payload, solution = codesign_payload(problem, options, request_seed(data))
    payload["dot"] = to_dot(solution.graph, solution.epsilons).to_string()
    logger.info(f"codesign: objective {solution.objective_value:.6g}, {solution.status}")
    return jsonify(payload)
