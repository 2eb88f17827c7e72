"""Forward pass, loss, correlation-driven gradients, and training for gated
linear networks.

The gradient of the batch L2 loss with respect to an edge decomposes over the
paths through that edge; each path contributes its upstream/downstream weight
products around an error term built from the gated correlation statistics.
Those statistics are constant while the gates are fixed, so they are computed
once per fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .datasets import Dataset
from .errors import DivergenceError, InvalidParameterError, ShapeError
from .graphs import GatedGraph, GatingTable
from .trajectory import Trajectory
from .validation import check_int, check_scalar


def node_inputs(graph: GatedGraph, dataset: Dataset, node: str):
    rows = graph.nodes[node].input_rows
    return dataset.inputs[np.asarray(rows)]


def node_targets(graph: GatedGraph, dataset: Dataset, node: str):
    rows = graph.nodes[node].output_rows
    return dataset.targets[np.asarray(rows)]


def forward(graph: GatedGraph, weights, gates: GatingTable, dataset: Dataset,
            datapoint: int | None = None):
    """Activations of every node, vectorized over the whole batch.

    Returns a dict node -> (width, N) array; with ``datapoint`` given, the
    arrays are single columns of that datapoint.
    """
    n = dataset.n_datapoints
    if datapoint is not None:
        datapoint = check_int(datapoint, "datapoint")
        if not 0 <= datapoint < n:
            raise InvalidParameterError(f"datapoint index {datapoint} out of range")
    acts = {}
    for name in graph.topo_order:
        node = graph.nodes[name]
        if not graph.incoming[name]:
            h = node_inputs(graph, dataset, name) * gates.node_gates[name]
        else:
            h = np.zeros((node.width, n))
            for en in graph.incoming[name]:
                e = graph.edges[en]
                h += gates.edge_gates[en] * (weights[en] @ acts[e.source])
            h *= gates.node_gates[name]
        acts[name] = h
    if datapoint is not None:
        return {k: v[:, datapoint] for k, v in acts.items()}
    return acts


def predict_outputs(graph: GatedGraph, weights, gates: GatingTable, dataset: Dataset):
    """Stacked output-node activations arranged like the dataset targets."""
    acts = forward(graph, weights, gates, dataset)
    out = np.zeros_like(dataset.targets)
    for name in graph.output_nodes:
        rows = np.asarray(graph.nodes[name].output_rows)
        out[rows] = acts[name]
    return out


def loss(graph: GatedGraph, weights, gates: GatingTable, dataset: Dataset) -> float:
    """Batch-averaged L2 loss, (1/2N) sum of squared output errors."""
    total = 0.0
    acts = forward(graph, weights, gates, dataset)
    for name in graph.output_nodes:
        y = node_targets(graph, dataset, name)
        if y.shape[0] != graph.nodes[name].width:
            raise ShapeError(f"output node {name} width does not match its target rows")
        total += np.sum((y - acts[name]) ** 2)
    return 0.5 * total / dataset.n_datapoints


@dataclass
class PathwayStats:
    """Gated correlation statistics per path and per ordered path pair.

    ``sigma_yx[p]`` is the gated input-output correlation of path index p;
    ``sigma_x[(j, p)]`` couples the source activities of two paths that share
    a terminal node.  ``svd[p]`` holds (U, S, Vt) of sigma_yx[p] restricted to
    nonzero singular values, and ``inert[p]`` marks paths gated off on every
    datapoint.
    """

    paths: list
    sigma_yx: list
    sigma_x: dict
    svd: list
    path_gates: list
    inert: list
    terminal_groups: dict

    def mode_input_variances(self, p):
        _, _, vt = self.svd[p]
        d = self.sigma_x[(p, p)]
        return np.einsum("ai,ij,aj->a", vt, d, vt)


def pathway_stats(graph: GatedGraph, gates: GatingTable, dataset: Dataset,
                  targets=None) -> PathwayStats:
    """Effective correlation statistics seen by each path.

    ``targets`` overrides the dataset targets (used to train pathways against
    a residual instead of the raw labels).
    """
    n = dataset.n_datapoints
    y_full = dataset.targets if targets is None else np.asarray(targets)
    pg = [gates.path_gate(graph, p) for p in graph.paths]
    srcs = [node_inputs(graph, dataset, graph.path_source(p)) for p in graph.paths]
    sigma_yx, svds, inert = [], [], []
    for i, p in enumerate(graph.paths):
        rows = np.asarray(graph.nodes[graph.path_target(p)].output_rows)
        syx = (y_full[rows] * pg[i]) @ srcs[i].T / n
        sigma_yx.append(syx)
        inert.append(not pg[i].any())
        u, s, vt = np.linalg.svd(syx, full_matrices=False)
        cutoff = max(syx.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        keep = s > max(cutoff, 1e-14)
        svds.append((u[:, keep], s[keep], vt[keep]))

    groups = {}
    for i, p in enumerate(graph.paths):
        groups.setdefault(graph.path_target(p), []).append(i)
    sigma_x = {}
    for members in groups.values():
        for j in members:
            for p in members:
                sigma_x[(j, p)] = (srcs[j] * (pg[j] * pg[p])) @ srcs[p].T / n
    return PathwayStats(
        paths=list(graph.paths),
        sigma_yx=sigma_yx,
        sigma_x=sigma_x,
        svd=svds,
        path_gates=pg,
        inert=inert,
        terminal_groups=groups,
    )


def _path_product(weights, path):
    w = weights[path[0]]
    for en in path[1:]:
        w = weights[en] @ w
    return w


def _segment_products(weights, path, position):
    """Products of weights strictly after / strictly before path[position]."""
    after = None
    for en in path[position + 1:]:
        after = weights[en] if after is None else weights[en] @ after
    before = None
    for en in path[:position]:
        before = weights[en] if before is None else weights[en] @ before
    return after, before


def gradient(graph: GatedGraph, weights, gates: GatingTable, dataset: Dataset,
             stats: PathwayStats | None = None):
    """Descent direction for every edge (the negative loss gradient).

    A gradient-descent step is ``W_e += step * value`` where ``step`` is the
    batch-averaged learning rate.
    """
    if stats is None:
        stats = pathway_stats(graph, gates, dataset)
    products = [_path_product(weights, p) for p in stats.paths]
    brackets = []
    for i in range(len(stats.paths)):
        b = stats.sigma_yx[i].copy()
        target = graph.path_target(stats.paths[i])
        for j in stats.terminal_groups[target]:
            b -= products[j] @ stats.sigma_x[(j, i)]
        brackets.append(b)
    grads = {name: np.zeros(graph.edge_shape(name)) for name in graph.edges}
    for i, path in enumerate(stats.paths):
        for pos, en in enumerate(path):
            after, before = _segment_products(weights, path, pos)
            g = brackets[i]
            if after is not None:
                g = after.T @ g
            if before is not None:
                g = g @ before.T
            grads[en] += g
    return grads


def effective_mode_strengths(weights, path, basis=None):
    """Per-mode strength of a path's end-to-end map.

    With ``basis=(U, Vt)`` returns diag(U.T @ W_path @ V); otherwise the
    singular values of the path product, sorted descending.
    """
    w = _path_product(weights, path)
    if basis is None:
        return np.linalg.svd(w, compute_uv=False)
    u, vt = basis
    return np.diag(u.T @ w @ vt.T)


class GatedLinearNet(BaseEstimator):
    """Full-batch gradient-descent trainer for a gated linear network.

    Parameters
    ----------
    graph, gates : architecture and per-datapoint gate table.
    learning_rate : step size; with rate_convention="per_sample" the update
        applied to the batch-averaged gradient is N * learning_rate (the
        learning time constant is then 1 / (N * learning_rate)), while
        "mean" applies learning_rate directly.
    init_scale : per-entry variance of the Gaussian weight initialization.
    init_weights : optional dict edge -> matrix overriding the random init.
    record_modes : None, "svd", or a dict path_index -> (U, Vt) basis; when
        set, per-mode effective strengths are recorded into the trajectory.
    targets : optional override of the dataset targets (residual training).
    """

    def __init__(self, graph=None, gates=None, learning_rate=0.001, epochs=8000,
                 init_scale=1e-7, seed=0, record_every=50, rate_convention="per_sample",
                 record_modes=None, snapshot_epochs=(), init_weights=None,
                 targets=None, divergence_limit=1e6):
        self.graph = graph
        self.gates = gates
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.init_scale = init_scale
        self.seed = seed
        self.record_every = record_every
        self.rate_convention = rate_convention
        self.record_modes = record_modes
        self.snapshot_epochs = snapshot_epochs
        self.init_weights = init_weights
        self.targets = targets
        self.divergence_limit = divergence_limit

    def _step_size(self, n):
        lr = check_scalar(self.learning_rate, "learning_rate", minimum=0.0)
        if self.rate_convention == "per_sample":
            return n * lr
        if self.rate_convention == "mean":
            return lr
        raise InvalidParameterError(
            f"rate_convention must be 'per_sample' or 'mean', got {self.rate_convention!r}"
        )

    def time_constant(self, dataset: Dataset) -> float:
        """Learning time constant of the continuous-time limit, 1/step."""
        return 1.0 / self._step_size(dataset.n_datapoints)

    def _mode_header(self, stats):
        names, trackers = [], []
        if self.record_modes is None:
            return names, trackers
        for i, path in enumerate(stats.paths):
            if self.record_modes == "svd":
                basis = None
                count = min(_path_product_shape(self.graph, path))
            elif isinstance(self.record_modes, dict):
                if i not in self.record_modes:
                    continue
                basis = self.record_modes[i]
                count = basis[0].shape[1]
            else:
                raise InvalidParameterError("record_modes must be None, 'svd', or a dict")
            trackers.append((i, path, basis, count))
            names += [f"path{i}_mode{a}" for a in range(count)]
        return names, trackers

    def fit(self, dataset: Dataset):
        epochs = check_int(self.epochs, "epochs", minimum=0)
        n = dataset.n_datapoints
        step = self._step_size(n)
        stats = pathway_stats(self.graph, self.gates, dataset, targets=self.targets)
        if self.init_weights is not None:
            weights = {k: np.array(v, dtype=float) for k, v in self.init_weights.items()}
        else:
            weights = self.graph.random_weights(self.init_scale, self.seed)
        for name, w in weights.items():
            if w.shape != self.graph.edge_shape(name):
                raise ShapeError(f"init weight {name} has shape {w.shape}, "
                                 f"expected {self.graph.edge_shape(name)}")

        mode_names, trackers = self._mode_header(stats)
        snap_at = set(int(e) for e in self.snapshot_epochs)
        epochs_rec, losses, modes = [], [], []
        self.snapshots_ = {}

        y_ref = dataset.targets if self.targets is None else np.asarray(self.targets)
        pg = stats.path_gates
        srcs = [node_inputs(self.graph, dataset, self.graph.path_source(p))
                for p in stats.paths]
        out_rows = [np.asarray(self.graph.nodes[self.graph.path_target(p)].output_rows)
                    for p in stats.paths]

        def outputs(products):
            out = np.zeros_like(y_ref)
            for i in range(len(stats.paths)):
                out[out_rows[i]] += (products[i] @ srcs[i]) * pg[i]
            return out

        for epoch in range(epochs + 1):
            products = [_path_product(weights, p) for p in stats.paths]
            record = epoch % max(self.record_every, 1) == 0 or epoch == epochs
            if record or epoch in snap_at:
                yhat = outputs(products)
                cur = 0.5 * np.sum((y_ref - yhat) ** 2) / n
                if not np.isfinite(cur) or cur > self.divergence_limit:
                    raise DivergenceError(f"training diverged (loss={cur:g})", epoch)
                if record:
                    epochs_rec.append(epoch)
                    losses.append(cur)
                    if trackers:
                        row = []
                        for i, path, basis, count in trackers:
                            vals = effective_mode_strengths(weights, path, basis)
                            row += list(vals[:count]) + [0.0] * (count - len(vals))
                        modes.append(row)
                if epoch in snap_at:
                    self.snapshots_[epoch] = yhat
            if epoch == epochs:
                break
            brackets = []
            for i in range(len(stats.paths)):
                b = stats.sigma_yx[i].copy()
                for j in stats.terminal_groups[self.graph.path_target(stats.paths[i])]:
                    b -= products[j] @ stats.sigma_x[(j, i)]
                brackets.append(b)
            updates = {name: None for name in self.graph.edges}
            for i, path in enumerate(stats.paths):
                for pos, en in enumerate(path):
                    after, before = _segment_products(weights, path, pos)
                    g = brackets[i]
                    if after is not None:
                        g = after.T @ g
                    if before is not None:
                        g = g @ before.T
                    updates[en] = g if updates[en] is None else updates[en] + g
            for name, g in updates.items():
                if g is not None:
                    weights[name] += step * g

        self.weights_ = weights
        self.stats_ = stats
        self.trajectory_ = Trajectory(
            epochs=np.asarray(epochs_rec, dtype=float),
            loss=np.asarray(losses),
            source="gdln",
            run_id=str(self.seed),
            mode_names=tuple(mode_names),
            modes=np.asarray(modes) if mode_names else None,
        )
        return self

    def predict(self, dataset: Dataset):
        return predict_outputs(self.graph, self.weights_, self.gates, dataset)

    def score_loss(self, dataset: Dataset) -> float:
        return loss(self.graph, self.weights_, self.gates, dataset)


def _path_product_shape(graph, path):
    return (graph.nodes[graph.path_target(path)].width,
            graph.nodes[graph.path_source(path)].width)


def spectral_pathway_init(graph: GatedGraph, path, u, vt, strengths, rng=None,
                          noise_scale=0.0):
    """Balanced two-layer init whose path product equals U diag(strengths) Vt.

    Only valid for two-edge paths.  Optional Gaussian noise of the given
    per-entry variance is added on top.
    """
    if len(path) != 2:
        raise InvalidParameterError("spectral init supports two-edge paths only")
    b = np.sqrt(np.asarray(strengths, dtype=float))
    w1_shape = graph.edge_shape(path[0])
    w2_shape = graph.edge_shape(path[1])
    r = len(b)
    if r > w1_shape[0]:
        raise ShapeError("more modes than hidden units")
    w1 = np.zeros(w1_shape)
    w2 = np.zeros(w2_shape)
    w1[:r] = b[:, None] * vt
    w2[:, :r] = u * b[None, :]
    if noise_scale > 0.0:
        rng = rng or np.random.default_rng(0)
        w1 = w1 + rng.normal(0.0, np.sqrt(noise_scale), w1_shape)
        w2 = w2 + rng.normal(0.0, np.sqrt(noise_scale), w2_shape)
    return {path[0]: w1, path[1]: w2}
