import logging

from flask import Blueprint, current_app, jsonify

from api.helpers import DATA_DIR, json_endpoint, request_seed, shipped_graph_source
from utils.config import RunConfig, build_problem, build_solver_options
from utils.exporters import SWEEP_COLUMNS
from utils.runner import sweep_rows

logger = logging.getLogger(__name__)

sweep_bp = Blueprint('sweep', __name__)


@sweep_bp.route('/sweep', methods=['POST'])
@json_endpoint
def sweep(data):
    seed = request_seed(data)
    # RunConfig validates the axis name and value list
    config = RunConfig(mode="sweep", data=data, base_dir=DATA_DIR, seed=seed)
    problem = build_problem(shipped_graph_source(data), DATA_DIR)
    options = build_solver_options(data, current_app.config["WORKERS"])
    rows, outcomes = sweep_rows(problem, options, config.sweep_axis, config.sweep_values, seed)
    return jsonify({
        "axis": config.sweep_axis,
        "values": list(config.sweep_values),
        "columns": list(SWEEP_COLUMNS),
        "rows": [list(row) for row in rows],
        "outcomes": outcomes,
        "seed": seed,
    })
