"""Recovering gating structure from trained rectifier networks.

Binary hidden-unit activity is sampled across several training runs and
epochs, stacked row-wise, and clustered; the cluster centroids are candidate
per-datapoint gating patterns.  Binarized centroids turn directly into a
gated linear architecture, and an elbow over the number of clusters selects
the smallest architecture that imitates the source network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .datasets import Dataset
from .errors import InvalidParameterError, ShapeError
from .graphs import pathway_graph
from .network import GatedLinearNet
from .relu import ReluNet
from .validation import check_int, check_scalar


@dataclass
class SampleStack:
    """Stacked binary activation rows with (run, epoch, layer) provenance."""

    patterns: np.ndarray                 # rows x N, values in {0, 1}
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        self.patterns = np.asarray(self.patterns, dtype=float)
        if self.patterns.ndim != 2:
            raise ShapeError("patterns must be a 2-d row stack")


def collect_samples(dataset: Dataset, relu_config: dict, num_trainings: int,
                    sample_every: int = 100, base_seed: int = 0, layer: int = 0,
                    drop_inactive: bool = True) -> SampleStack:
    """Train seeded rectifier runs and stack their sampled binary activity.

    Rows that are zero on every datapoint carry no gating information and, by
    default, are dropped so they cannot claim a cluster of their own.
    """
    num_trainings = check_int(num_trainings, "num_trainings", minimum=1)
    rows, prov = [], []
    for r in range(num_trainings):
        net = ReluNet(**{**relu_config, "seed": base_seed + r, "sample_every": sample_every})
        net.fit(dataset)
        for sample in net.activation_samples_:
            if sample.layer != layer:
                continue
            pattern = sample.pattern.astype(float)
            if drop_inactive:
                keep = pattern.any(axis=1)
                pattern = pattern[keep]
            rows.append(pattern)
            prov.extend([(sample.run_id, sample.epoch, layer)] * pattern.shape[0])
    return SampleStack(patterns=np.vstack(rows), provenance=prov)


class BinaryPatternKMeans(BaseEstimator):
    """Deterministic Lloyd clustering of binary rows.

    Seeding follows the usual squared-distance sampling scheme; ``n_init``
    restarts keep the best inertia.  An emptied cluster is reseeded from the
    point farthest from its assigned centroid.  All randomness flows from the
    seed, so the fit is a pure function of (rows, n_clusters, seed).
    """

    def __init__(self, n_clusters=4, seed=0, max_iter=100, n_init=10):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.n_init = n_init

    @staticmethod
    def _sqdist(x, centers, x_norm):
        # |x - c|^2 via the dot trick; clipped to guard rounding
        d = x_norm[:, None] - 2.0 * (x @ centers.T) + np.sum(centers**2, axis=1)[None]
        return np.maximum(d, 0.0)

    def _seed_centers(self, x, rng, x_norm):
        k = self.n_clusters
        centers = [x[int(rng.integers(x.shape[0]))]]
        d = self._sqdist(x, centers[0][None], x_norm)[:, 0]
        for _ in range(k - 1):
            total = d.sum()
            if total <= 0:
                centers.append(x[int(rng.integers(x.shape[0]))])
                continue
            pick = int(np.searchsorted(np.cumsum(d), rng.random() * total))
            centers.append(x[min(pick, x.shape[0] - 1)])
            d = np.minimum(d, self._sqdist(x, centers[-1][None], x_norm)[:, 0])
        return np.array(centers)

    def _lloyd(self, x, centers, x_norm):
        k = centers.shape[0]
        labels = np.zeros(x.shape[0], dtype=int)
        for _ in range(check_int(self.max_iter, "max_iter", minimum=1)):
            d = self._sqdist(x, centers, x_norm)
            labels = d.argmin(axis=1)
            new_centers = np.empty_like(centers)
            for j in range(k):
                members = labels == j
                if members.any():
                    new_centers[j] = x[members].mean(axis=0)
                else:
                    new_centers[j] = x[int(np.argmax(d.min(axis=1)))]
            if np.allclose(new_centers, centers):
                centers = new_centers
                break
            centers = new_centers
        d = self._sqdist(x, centers, x_norm)
        inertia = float(d[np.arange(x.shape[0]), labels].sum())
        return centers, labels, inertia

    def fit(self, x):
        x = np.asarray(x, dtype=float)
        k = check_int(self.n_clusters, "n_clusters", minimum=1)
        if k > x.shape[0]:
            raise InvalidParameterError(
                f"n_clusters={k} exceeds the {x.shape[0]} available rows"
            )
        rng = np.random.default_rng(self.seed)
        x_norm = np.sum(x**2, axis=1)
        best = None
        for _ in range(check_int(self.n_init, "n_init", minimum=1)):
            centers, labels, inertia = self._lloyd(x, self._seed_centers(x, rng, x_norm), x_norm)
            if best is None or inertia < best[2]:
                best = (centers, labels, inertia)
        self.cluster_centers_, self.labels_, self.inertia_ = best
        return self

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        d = self._sqdist(x, self.cluster_centers_, np.sum(x**2, axis=1))
        return d.argmin(axis=1)


def binarize_centroids(centroids, threshold: float = 0.5):
    """Threshold centroids into gate rows and score their consistency.

    Consistency of a centroid is the fraction of its entries within 0.05 of
    either 0 or 1; low consistency signals that a cluster mixes distinct
    gating patterns and more clusters are needed.
    """
    threshold = check_scalar(threshold, "threshold", minimum=0.0, maximum=1.0)
    if not 0.0 < threshold < 1.0:
        raise InvalidParameterError("threshold must lie strictly inside (0, 1)")
    c = np.asarray(centroids, dtype=float)
    gates = (c >= threshold).astype(float)
    near = np.minimum(np.abs(c), np.abs(1.0 - c)) <= 0.05
    consistency = near.mean(axis=1)
    return gates, consistency


def _context_consistent(gate, context_ids):
    for c in np.unique(context_ids):
        block = gate[context_ids == c]
        if block.any() and not block.all():
            return False
    return True


def build_reln(dataset: Dataset, centroids, threshold: float = 0.5,
               hidden_per_pathway: int = 100, consistency_warn: float = 0.8):
    """Gated linear architecture with one pathway per binarized centroid.

    Pathways whose gate is context-consistent (and not always-on) read item
    features only, mirroring the handcrafted contextual architecture; all
    other pathways read the full input.  Returns (graph, gates, info) where
    info carries per-pathway consistency and inert flags.
    """
    gate_rows, consistency = binarize_centroids(centroids, threshold)
    full = tuple(range(dataset.n_features))
    items = tuple(dataset.item_feature_rows())
    pathways = []
    inert = []
    for i, gate in enumerate(gate_rows):
        rows = full
        if (dataset.context_ids is not None and gate.any() and not gate.all()
                and _context_consistent(gate, dataset.context_ids)):
            rows = items
        pathways.append((f"p{i}", rows, gate))
        inert.append(not gate.any())
    graph, gates = pathway_graph(dataset, pathways, hidden_per_pathway)
    info = {
        "consistency": consistency,
        "inert": np.asarray(inert),
        "needs_more_clusters": bool((consistency < consistency_warn).any()),
    }
    return graph, gates, info


def same_gating(gates_a, gates_b) -> bool:
    """True when two gate collections are equal up to pathway permutation."""
    a = {tuple(np.asarray(g, dtype=int)) for g in gates_a}
    b = {tuple(np.asarray(g, dtype=int)) for g in gates_b}
    return a == b


def imitation_mse(gdln_snapshots: dict, relu_snapshots: dict) -> float:
    """Mean squared output difference across shared snapshot epochs."""
    epochs = sorted(set(gdln_snapshots) & set(relu_snapshots))
    if not epochs:
        raise InvalidParameterError("snapshot epoch grids do not overlap")
    total = 0.0
    count = 0
    for e in epochs:
        a = gdln_snapshots[e]
        b = relu_snapshots[e] if not isinstance(relu_snapshots[e], dict) else relu_snapshots[e]["outputs"]
        total += np.sum((a - b) ** 2)
        count += a.size
    return total / count


def elbow_scan(dataset: Dataset, stack: SampleStack, k_range, relu_reference: ReluNet,
               gdln_config: dict | None = None, threshold: float = 0.5,
               hidden_per_pathway: int = 100, seed: int = 0):
    """Imitation error of the recovered architecture as a function of k.

    For each cluster count, the binarized centroids become a gated network
    trained with the reference configuration; the score is the mean squared
    difference between its outputs and the reference network's outputs across
    the recorded snapshot epochs.  Failures are recorded per k rather than
    aborting the scan.
    """
    if not len(list(k_range)):
        raise InvalidParameterError("k_range must be nonempty")
    relu_snaps = {e: v["outputs"] if isinstance(v, dict) else v
                  for e, v in relu_reference.snapshots_.items()}
    snapshot_epochs = tuple(sorted(relu_snaps))
    cfg = {
        "learning_rate": relu_reference.learning_rate,
        "epochs": relu_reference.epochs,
        "init_scale": relu_reference.init_scale,
        "rate_convention": relu_reference.rate_convention,
    }
    cfg.update(gdln_config or {})
    results = []
    for k in k_range:
        try:
            km = BinaryPatternKMeans(n_clusters=k, seed=seed).fit(stack.patterns)
            graph, gates, info = build_reln(dataset, km.cluster_centers_, threshold,
                                            hidden_per_pathway)
            net = GatedLinearNet(graph, gates, seed=seed,
                                 snapshot_epochs=snapshot_epochs, **cfg)
            net.fit(dataset)
            mse = imitation_mse(net.snapshots_, relu_snaps)
            results.append({"k": int(k), "imitation_mse": float(mse),
                            "consistency": info["consistency"].tolist(), "error": None})
        except Exception as exc:  # recorded, scan continues
            results.append({"k": int(k), "imitation_mse": None, "error": str(exc)})
    return results
