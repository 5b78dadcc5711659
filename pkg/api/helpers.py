import logging
import os
from functools import wraps

from flask import jsonify, request

from utils.errors import ConfigError, PrivFormError

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")
# horizon * trials * agents budget for one synchronous request
MAX_REQUEST_WORK = 5_000_000


def error_response(e: PrivFormError):
    body = {"error": str(e), "type": type(e).__name__}
    binding = getattr(e, "binding", None)
    if binding:
        body["binding"] = binding
    return jsonify(body), e.http_status


def json_endpoint(func):
    """Parse the JSON body, hand it to ``func`` and map domain errors to status codes."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        data = request.get_json(silent=True)
        if not isinstance(data, dict):
            return jsonify({"error": "Request body must be a JSON object"}), 400
        try:
            return func(data, *args, **kwargs)
        except PrivFormError as e:
            logger.info(f"{request.path} rejected: {e}")
            return error_response(e)
        except Exception as e:
            logger.exception(f"{request.path} failed")
            return jsonify({"error": str(e)}), 500
    return wrapper


def shipped_graph_source(data: dict) -> dict:
    """Inline graphs pass through; named graphs must be files shipped in ``data/``."""
    source = data.get("graph")
    name = None
    if isinstance(source, str):
        name = source
    elif isinstance(source, dict):
        name = source.get("path")
    if name is None:
        return data
    if os.path.basename(name) != name or not name.endswith(".json"):
        raise ConfigError(f"graph {name!r} must name a shipped graph file, e.g. \"ten_node.json\"")
    if not os.path.isfile(os.path.join(DATA_DIR, name)):
        raise ConfigError(f"no shipped graph named {name!r}")
    return data


def request_seed(data: dict) -> int:
    run = data.get("run", {})
    if not isinstance(run, dict):
        raise ConfigError("[run] must be a table")
    seed = data.get("seed", run.get("seed", 0))
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= 2 ** 64 - 1:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed
