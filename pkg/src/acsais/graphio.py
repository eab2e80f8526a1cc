"""Reading and writing multilayer graph files.

JSON layout::

    {"n": 4, "layers": {"S": [[0, 1, 1.0], ...], "A": [[1, 0, 0.5], ...]}}

TSV edge lists hold one ``src<TAB>dst<TAB>weight`` row per edge, 0-indexed.
"""
from __future__ import annotations

import json
from pathlib import Path

from .errors import InputValidationError
from .netcore import AggregationTrace, MultilayerNetwork, WeightedDigraph


def _layer_from_rows(rows, n, where):
    if not isinstance(rows, list):
        raise InputValidationError(f"{where}: expected a list of [src, dst, weight] rows")
    edges = []
    for k, row in enumerate(rows):
        if not isinstance(row, (list, tuple)) or len(row) != 3:
            raise InputValidationError(f"{where}[{k}]: expected [src, dst, weight], got {row!r}")
        src, dst, w = row
        if isinstance(src, bool) or isinstance(dst, bool) or not isinstance(src, int) or not isinstance(dst, int):
            raise InputValidationError(f"{where}[{k}]: endpoints must be integers, got {row!r}")
        if isinstance(w, bool) or not isinstance(w, (int, float)):
            raise InputValidationError(f"{where}[{k}]: weight must be a number, got {w!r}")
        edges.append((src, dst, float(w)))
    try:
        return WeightedDigraph(n, tuple(edges))
    except InputValidationError as exc:
        raise InputValidationError(f"{where}: {exc}") from None


def multilayer_from_dict(doc) -> MultilayerNetwork:
    if not isinstance(doc, dict):
        raise InputValidationError("top level: expected a JSON object")
    if "n" not in doc:
        raise InputValidationError("field 'n' is missing")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise InputValidationError(f"field 'n': expected a positive integer, got {n!r}")
    layers = doc.get("layers")
    if not isinstance(layers, dict):
        raise InputValidationError("field 'layers': expected an object with keys 'S' and 'A'")
    for key in ("S", "A"):
        if key not in layers:
            raise InputValidationError(f"field 'layers.{key}' is missing")
    extra = set(layers) - {"S", "A"}
    if extra:
        raise InputValidationError(f"field 'layers': unexpected layer keys {sorted(extra)}")
    s = _layer_from_rows(layers["S"], n, "layers.S")
    a = _layer_from_rows(layers["A"], n, "layers.A")
    return MultilayerNetwork(s, a)


def multilayer_to_dict(net: MultilayerNetwork) -> dict:
    return {
        "n": net.n,
        "layers": {
            "S": [[i, j, w] for i, j, w in net.layer_s.edges],
            "A": [[i, j, w] for i, j, w in net.layer_a.edges],
        },
    }


def load_multilayer_json(path) -> MultilayerNetwork:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputValidationError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    try:
        return multilayer_from_dict(doc)
    except InputValidationError as exc:
        raise InputValidationError(f"{path}: {exc}") from None


def save_multilayer_json(net: MultilayerNetwork, path) -> None:
    Path(path).write_text(json.dumps(multilayer_to_dict(net), indent=1) + "\n", encoding="utf-8")


def read_tsv_edges(path) -> list[tuple[int, int, float]]:
    edges = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise InputValidationError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError:
            raise InputValidationError(f"{path}:{lineno}: cannot parse {line!r}")
    return edges


def load_multilayer_tsv(path_s, path_a, n: int | None = None) -> MultilayerNetwork:
    """Pair two TSV edge lists; ``n`` defaults to one more than the largest index."""
    es, ea = read_tsv_edges(path_s), read_tsv_edges(path_a)
    if n is None:
        n = 1 + max((max(i, j) for i, j, _ in es + ea), default=-1)
    try:
        return MultilayerNetwork(WeightedDigraph(n, tuple(es)), WeightedDigraph(n, tuple(ea)))
    except InputValidationError as exc:
        raise InputValidationError(f"{path_s} / {path_a}: {exc}") from None


def write_tsv_edges(g: WeightedDigraph, path) -> None:
    lines = [f"{i}\t{j}\t{w!r}" for i, j, w in g.edges]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_undirected_layer(path) -> WeightedDigraph:
    """Read an undirected graph (GML or whitespace edge list) as a symmetric unit-weight layer.

    Nodes are relabelled ``0..n-1`` in order of first appearance; this is how
    the college-football benchmark graph is brought in.
    """
    path = Path(path)
    if path.suffix.lower() == ".gml":
        import networkx as nx

        g = nx.read_gml(path, label=None)
        nodes = list(g.nodes())
        pairs = [(u, v) for u, v in g.edges() if u != v]
    else:
        nodes, pairs = [], []
        for line in path.read_text(encoding="utf-8").splitlines():
            fields = line.split()
            if len(fields) < 2 or line.lstrip().startswith(("#", "%")):
                continue
            u, v = fields[0], fields[1]
            pairs.append((u, v))
            nodes.extend([u, v])
        nodes = list(dict.fromkeys(nodes))
    index = {u: k for k, u in enumerate(nodes)}
    edges = set()
    for u, v in pairs:
        if u == v:
            continue
        a, b = index[u], index[v]
        edges.add((a, b))
        edges.add((b, a))
    return WeightedDigraph(len(nodes), tuple((a, b, 1.0) for a, b in sorted(edges)))


def save_trace_json(trace: AggregationTrace, path) -> None:
    Path(path).write_text(json.dumps(trace.to_json(), indent=1) + "\n", encoding="utf-8")
