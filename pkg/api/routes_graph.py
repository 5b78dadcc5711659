import logging

from flask import Blueprint, Response, jsonify

from api.helpers import DATA_DIR, json_endpoint, shipped_graph_source
from utils.config import build_graph
from utils.errors import ConfigError
from utils.exporters import to_dot
from utils.graph_core import component_count, is_connected, spectral_summary

logger = logging.getLogger(__name__)

graph_bp = Blueprint('graph', __name__)


def _graph(data):
    default_weight = data.get("default_weight")
    if default_weight is not None:
        try:
            default_weight = float(default_weight)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"default_weight must be a number: {e}") from e
    return build_graph(shipped_graph_source(data), DATA_DIR, default_weight)


@graph_bp.route('/graph/spectrum', methods=['POST'])
@json_endpoint
def spectrum(data):
    g = _graph(data)
    if g.n_agents < 2:
        raise ConfigError("spectral summary needs at least two agents")
    summary = spectral_summary(g)
    return jsonify({
        "n": g.n_agents,
        "eigenvalues": summary.eigenvalues.tolist(),
        "fiedler_vector": summary.fiedler_vector.tolist(),
        "lambda2": summary.lambda2,
        "lambda_max": summary.lambda_max,
        "degenerate_fiedler": summary.degenerate_fiedler,
        "connected": is_connected(g),
        "components": component_count(g),
        "total_weight": g.total_weight(),
    })


@graph_bp.route('/graph/dot', methods=['POST'])
@json_endpoint
def dot(data):
    g = _graph(data)
    epsilons = data.get("epsilons")
    if epsilons is None:
        return jsonify({"error": "epsilons are required (one per agent)"}), 400
    text = to_dot(g, epsilons).to_string()
    return Response(text, mimetype="text/vnd.graphviz")
