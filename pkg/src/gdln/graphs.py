"""Gated computation graphs: layer nodes, weighted edges, paths, and gates.

A graph is purely structural; weights are owned by the trainer.  Input nodes
read a subset of dataset input rows, output nodes predict a subset of target
rows, and every input-to-output walk is enumerated once as a path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import InvalidParameterError, ShapeError, UnderParameterizedError
from .validation import check_binary, check_int


@dataclass(frozen=True)
class LayerNode:
    name: str
    width: int
    input_rows: tuple[int, ...] | None = None   # set on input nodes
    output_rows: tuple[int, ...] | None = None  # set on output nodes


@dataclass(frozen=True)
class GraphEdge:
    name: str
    source: str
    target: str


class GatedGraph:
    """Directed acyclic graph of linear layers.

    Parameters are plain node/edge lists; paths, topological order and
    input/output node sets are derived and validated on construction.
    """

    def __init__(self, nodes, edges):
        self.nodes = {n.name: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise InvalidParameterError("duplicate node names")
        self.edges = {e.name: e for e in edges}
        if len(self.edges) != len(edges):
            raise InvalidParameterError("duplicate edge names")
        for e in self.edges.values():
            if e.source not in self.nodes or e.target not in self.nodes:
                raise InvalidParameterError(f"edge {e.name} references unknown node")
        self.topo_order = self._toposort()
        incoming = {n: [] for n in self.nodes}
        outgoing = {n: [] for n in self.nodes}
        for e in self.edges.values():
            incoming[e.target].append(e.name)
            outgoing[e.source].append(e.name)
        self.incoming = incoming
        self.outgoing = outgoing
        self.input_nodes = [n for n in self.topo_order if not incoming[n]]
        self.output_nodes = [n for n in self.topo_order if not outgoing[n]]
        for n in self.input_nodes:
            if self.nodes[n].input_rows is None:
                raise InvalidParameterError(f"input node {n} missing input_rows")
        for n in self.output_nodes:
            if self.nodes[n].output_rows is None:
                raise InvalidParameterError(f"output node {n} missing output_rows")
        self.paths = self._enumerate_paths()

    def _toposort(self):
        indeg = {n: 0 for n in self.nodes}
        for e in self.edges.values():
            indeg[e.target] += 1
        frontier = [n for n, d in indeg.items() if d == 0]
        order = []
        while frontier:
            n = frontier.pop(0)
            order.append(n)
            for e in self.edges.values():
                if e.source == n:
                    indeg[e.target] -= 1
                    if indeg[e.target] == 0:
                        frontier.append(e.target)
        if len(order) != len(self.nodes):
            raise InvalidParameterError("graph contains a cycle")
        return order

    def _enumerate_paths(self):
        paths = []

        def walk(node, trail):
            if not self.outgoing[node]:
                paths.append(tuple(trail))
                return
            for en in self.outgoing[node]:
                walk(self.edges[en].target, trail + [en])

        for n in self.input_nodes:
            walk(n, [])
        return paths

    def edge_shape(self, edge_name):
        e = self.edges[edge_name]
        return (self.nodes[e.target].width, self.nodes[e.source].width)

    def path_source(self, path):
        return self.edges[path[0]].source

    def path_target(self, path):
        return self.edges[path[-1]].target

    def path_nodes(self, path):
        names = [self.edges[path[0]].source]
        for en in path:
            names.append(self.edges[en].target)
        return names

    def paths_into(self, node_name):
        return [p for p in self.paths if self.path_target(p) == node_name]

    def random_weights(self, init_scale, seed):
        """Zero-mean Gaussian weights; ``init_scale`` is the per-entry variance."""
        rng = np.random.default_rng(seed)
        sigma = np.sqrt(init_scale)
        return {
            name: rng.normal(0.0, sigma, self.edge_shape(name))
            for name in self.edges
        }

    def to_json(self, gates=None):
        doc = {
            "nodes": [
                {
                    "name": n.name,
                    "width": n.width,
                    "input_rows": list(n.input_rows) if n.input_rows is not None else None,
                    "output_rows": list(n.output_rows) if n.output_rows is not None else None,
                }
                for n in self.nodes.values()
            ],
            "edges": [
                {"name": e.name, "source": e.source, "target": e.target}
                for e in self.edges.values()
            ],
        }
        if gates is not None:
            doc["node_gates"] = {k: _bits_to_hex(v) for k, v in gates.node_gates.items()}
            doc["edge_gates"] = {k: _bits_to_hex(v) for k, v in gates.edge_gates.items()}
            doc["n_datapoints"] = gates.n_datapoints
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        nodes = [
            LayerNode(
                d["name"],
                d["width"],
                tuple(d["input_rows"]) if d["input_rows"] is not None else None,
                tuple(d["output_rows"]) if d["output_rows"] is not None else None,
            )
            for d in doc["nodes"]
        ]
        edges = [GraphEdge(d["name"], d["source"], d["target"]) for d in doc["edges"]]
        graph = cls(nodes, edges)
        gates = None
        if "node_gates" in doc:
            n = doc["n_datapoints"]
            gates = GatingTable(
                {k: _hex_to_bits(v, n) for k, v in doc["node_gates"].items()},
                {k: _hex_to_bits(v, n) for k, v in doc["edge_gates"].items()},
            )
        return graph, gates


def _bits_to_hex(bits):
    return np.packbits(bits.astype(np.uint8)).tobytes().hex()


def _hex_to_bits(hexstr, n):
    raw = np.frombuffer(bytes.fromhex(hexstr), dtype=np.uint8)
    return np.unpackbits(raw)[:n].astype(float)


class GatingTable:
    """Per-datapoint binary gates for every node and edge of a graph."""

    def __init__(self, node_gates, edge_gates):
        self.node_gates = {k: check_binary(v, f"node gate {k}") for k, v in node_gates.items()}
        self.edge_gates = {k: check_binary(v, f"edge gate {k}") for k, v in edge_gates.items()}
        sizes = {v.shape[0] for v in self.node_gates.values()}
        sizes |= {v.shape[0] for v in self.edge_gates.values()}
        if len(sizes) != 1:
            raise ShapeError("all gate vectors must cover the same datapoints")
        self.n_datapoints = sizes.pop()

    @classmethod
    def all_on(cls, graph: GatedGraph, n_datapoints: int):
        ones = np.ones(n_datapoints)
        return cls(
            {n: ones.copy() for n in graph.nodes},
            {e: ones.copy() for e in graph.edges},
        )

    def path_gate(self, graph: GatedGraph, path):
        """Product of the node and edge gates along a path, per datapoint."""
        g = np.ones(self.n_datapoints)
        for node in graph.path_nodes(path):
            g = g * self.node_gates[node]
        for edge in path:
            g = g * self.edge_gates[edge]
        return g

    def with_node_gate(self, name, gate):
        gates = dict(self.node_gates)
        gates[name] = np.asarray(gate, dtype=float)
        return GatingTable(gates, self.edge_gates)


# ---------------------------------------------------------------------------
# Preset architectures
# ---------------------------------------------------------------------------


def _pathway_rank(dataset, gate, input_rows):
    x = dataset.inputs[np.asarray(input_rows)] * gate
    y = dataset.targets * gate
    s = np.linalg.svd(y @ x.T, compute_uv=False)
    if s.size == 0:
        return 0
    return int((s > max(y.shape + x.shape) * np.finfo(float).eps * s[0]).sum())


def pathway_graph(dataset: Dataset, pathways, hidden_width: int = 100):
    """One two-layer linear pathway per spec, all mapping onto the full targets.

    ``pathways`` is a list of (name, input_rows, gate_vector).  Gating is
    applied at each pathway's hidden node; inputs and the shared output node
    stay always-on.  Raises when a pathway's hidden width cannot carry the
    rank of its gated input-output correlation.
    """
    hidden_width = check_int(hidden_width, "hidden_width", minimum=1)
    n = dataset.n_datapoints
    out_rows = tuple(range(dataset.n_labels))
    nodes = [LayerNode("out", dataset.n_labels, output_rows=out_rows)]
    edges = []
    node_gates = {"out": np.ones(n)}
    edge_gates = {}
    for name, input_rows, gate in pathways:
        gate = check_binary(gate, f"gate of pathway {name}")
        rank = _pathway_rank(dataset, gate, input_rows)
        if hidden_width < rank:
            raise UnderParameterizedError(
                f"pathway {name} needs at least {rank} hidden units, got {hidden_width}"
            )
        nodes.append(LayerNode(f"{name}:in", len(input_rows), input_rows=tuple(input_rows)))
        nodes.append(LayerNode(f"{name}:h", hidden_width))
        edges.append(GraphEdge(f"{name}:w1", f"{name}:in", f"{name}:h"))
        edges.append(GraphEdge(f"{name}:w2", f"{name}:h", "out"))
        node_gates[f"{name}:in"] = np.ones(n)
        node_gates[f"{name}:h"] = gate
        edge_gates[f"{name}:w1"] = np.ones(n)
        edge_gates[f"{name}:w2"] = np.ones(n)
    graph = GatedGraph(nodes, edges)
    return graph, GatingTable(node_gates, edge_gates)


def xor_linear_graph(dataset: Dataset, hidden_width: int = 128):
    """Two pathways: one gated on for positive labels, one for negative."""
    y = dataset.targets[0]
    rows = tuple(range(dataset.n_features))
    return pathway_graph(
        dataset,
        [
            ("pos", rows, (y > 0).astype(float)),
            ("neg", rows, (y < 0).astype(float)),
        ],
        hidden_width,
    )


def xor_pointwise_graph(dataset: Dataset, hidden_width: int = 128):
    """One pathway per datapoint, each active on exactly that datapoint."""
    n = dataset.n_datapoints
    rows = tuple(range(dataset.n_features))
    pathways = []
    for i in range(n):
        gate = np.zeros(n)
        gate[i] = 1.0
        pathways.append((f"pt{i}", rows, gate))
    return pathway_graph(dataset, pathways, hidden_width)


def contextual_gates(dataset: Dataset, arity: int):
    """Per-pathway gates for C context pathways, each active in ``arity`` contexts.

    Pathway p is switched off in the C - arity contexts starting at p, so
    arity = C - 1 yields the mixed-selective structure (off only in context p)
    and arity = 1 the single-context control.
    """
    c = dataset.n_contexts
    arity = check_int(arity, "arity", minimum=1)
    if not 1 <= arity <= c - 1:
        raise InvalidParameterError(f"arity must be in [1, {c - 1}], got {arity}")
    ctx = dataset.context_ids
    gates = []
    for p in range(c):
        off = {(p + i) % c for i in range(c - arity)}
        gates.append((~np.isin(ctx, sorted(off))).astype(float))
    return gates


def contextual_graph(dataset: Dataset, arity: int | None = None, hidden_width: int = 100):
    """Common pathway plus C context pathways fed item features only.

    The default arity C - 1 realizes the mixed-selective architecture; the
    single-context control uses arity = 1.
    """
    c = dataset.n_contexts
    if c < 2:
        raise InvalidParameterError("contextual_graph needs a contextual dataset")
    if arity is None:
        arity = c - 1
    n = dataset.n_datapoints
    full = tuple(range(dataset.n_features))
    items = tuple(dataset.item_feature_rows())
    pathways = [("common", full, np.ones(n))]
    for p, gate in enumerate(contextual_gates(dataset, arity)):
        pathways.append((f"ctx{p}", items, gate))
    return pathway_graph(dataset, pathways, hidden_width)


def depth2_contextual_graph(dataset: Dataset, hidden_width: int = 100):
    """Two-hidden-layer architecture: a shared ungated first layer feeding one
    always-on pathway and C context pathways gated in the second layer."""
    c = dataset.n_contexts
    if c < 2:
        raise InvalidParameterError("depth2_contextual_graph needs a contextual dataset")
    n = dataset.n_datapoints
    out_rows = tuple(range(dataset.n_labels))
    nodes = [
        LayerNode("in", dataset.n_features, input_rows=tuple(range(dataset.n_features))),
        LayerNode("h1", hidden_width),
        LayerNode("out", dataset.n_labels, output_rows=out_rows),
    ]
    edges = [GraphEdge("w0", "in", "h1")]
    node_gates = {"in": np.ones(n), "h1": np.ones(n), "out": np.ones(n)}
    edge_gates = {"w0": np.ones(n)}
    specs = [("common", np.ones(n))]
    specs += [(f"ctx{p}", g) for p, g in enumerate(contextual_gates(dataset, c - 1))]
    for name, gate in specs:
        nodes.append(LayerNode(f"{name}:h2", hidden_width))
        edges.append(GraphEdge(f"{name}:w1", "h1", f"{name}:h2"))
        edges.append(GraphEdge(f"{name}:w2", f"{name}:h2", "out"))
        node_gates[f"{name}:h2"] = gate
        edge_gates[f"{name}:w1"] = np.ones(n)
        edge_gates[f"{name}:w2"] = np.ones(n)
    graph = GatedGraph(nodes, edges)
    return graph, GatingTable(node_gates, edge_gates)


def build_reln_graph(dataset: Dataset, preset: str, hidden_width: int | None = None,
                     arity: int | None = None):
    """Named preset architectures.

    Presets: ``xor_linear``, ``xor_pointwise``, ``contextual`` (optionally
    with ``arity``), ``depth2_contextual``.
    """
    if preset == "xor_linear":
        return xor_linear_graph(dataset, hidden_width or 128)
    if preset == "xor_pointwise":
        return xor_pointwise_graph(dataset, hidden_width or 128)
    if preset == "contextual":
        return contextual_graph(dataset, arity, hidden_width or 100)
    if preset == "depth2_contextual":
        return depth2_contextual_graph(dataset, hidden_width or 100)
    raise InvalidParameterError(f"unknown graph preset {preset!r}")
