"""Reading and writing run artifacts: graph JSON, reports, CSV tables, DOT drawings.

Every writer goes through ``atomic_write_text`` (temp file in the target
directory, then rename), so a crashed run never leaves a half-written file.
"""

import csv
import io
import json
import logging
import os
import tempfile

import numpy as np
import pydot

from utils.errors import ConfigError, PrivFormError
from utils.graph_core import WeightedGraph

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("k", "agent", "dim", "x", "xbar", "e")
SWEEP_COLUMNS = ("axis", "value", "agent", "epsilon", "degree", "lambda2", "bound", "objective", "converged")
MIN_PENWIDTH = 0.5
MAX_PENWIDTH = 8.0
MIN_NODE_SIZE = 0.3
MAX_NODE_SIZE = 1.5


def atomic_write_text(path, text: str) -> str:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    tmp_path = None
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except OSError as e:
        if tmp_path is not None and os.path.exists(tmp_path):
            os.remove(tmp_path)
        logger.error(f"Failed to write {path}: {e}")
        raise PrivFormError(f"cannot write {path}: {e}") from e
    logger.debug(f"wrote {path}")
    return path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def write_json(path, data) -> str:
    return atomic_write_text(path, dumps(data))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read JSON from {path}: {e}") from e


def read_graph(path, default_weight=None) -> WeightedGraph:
    return WeightedGraph.from_dict(read_json(path), default_weight=default_weight)


def write_graph(path, g: WeightedGraph) -> str:
    return write_json(path, g.to_dict())


def write_csv(path, columns, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return atomic_write_text(path, buffer.getvalue())


def read_csv(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            return list(csv.DictReader(handle))
    except OSError as e:
        raise ConfigError(f"cannot read CSV from {path}: {e}") from e


def _scale(values, lo, hi, invert=False):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    vmin, vmax = float(values.min()), float(values.max())
    if vmax - vmin <= 1e-12 * max(1.0, abs(vmax)):
        return np.full(values.size, 0.5 * (lo + hi))
    t = (values - vmin) / (vmax - vmin)
    if invert:
        t = 1.0 - t
    return lo + t * (hi - lo)


def to_dot(g: WeightedGraph, epsilons) -> pydot.Dot:
    """Undirected drawing: thicker edges carry more weight, smaller nodes are more private."""
    epsilons = np.asarray(epsilons, dtype=float)
    if epsilons.shape != (g.n_agents,):
        raise ConfigError(f"need one epsilon per agent ({g.n_agents}), got shape {epsilons.shape}")
    dot = pydot.Dot("formation", graph_type="graph")
    # node size grows with epsilon: the smaller a node, the stronger its privacy
    sizes = _scale(epsilons, MIN_NODE_SIZE, MAX_NODE_SIZE)
    for i in range(g.n_agents):
        dot.add_node(pydot.Node(
            str(i + 1), shape="circle", fixedsize="true",
            width=f"{sizes[i]:.4f}", xlabel=f"eps={epsilons[i]:.4g}",
        ))
    max_w = max(g.weights.values(), default=1.0)
    for (i, j), w in g.weights.items():
        penwidth = max(MIN_PENWIDTH, MAX_PENWIDTH * w / max_w)
        dot.add_edge(pydot.Edge(str(i + 1), str(j + 1), penwidth=f"{penwidth:.4f}", label=f"{w:.4g}"))
    return dot


def export_dot(g: WeightedGraph, epsilons, path) -> str:
    return atomic_write_text(path, to_dot(g, epsilons).to_string())


def read_dot(path) -> pydot.Dot:
    try:
        with open(path, encoding="utf-8") as handle:
            graphs = pydot.graph_from_dot_data(handle.read())
    except OSError as e:
        raise ConfigError(f"cannot read DOT from {path}: {e}") from e
    if not graphs:
        raise ConfigError(f"{path} holds no DOT graph")
    return graphs[0]
