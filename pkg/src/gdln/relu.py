"""Reference rectifier networks: bias-free MLPs trained by full-batch descent.

These are the networks the gated linear architectures imitate.  Hidden layers
apply the rectifier, the readout is linear, and binary activation patterns
can be sampled during training for the gate-discovery pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .datasets import Dataset
from .errors import DivergenceError, InvalidParameterError, ShapeError
from .trajectory import Trajectory
from .validation import check_int, check_scalar


@dataclass
class ActivationSample:
    """Binary hidden-unit activity (units x datapoints) at one training epoch."""

    epoch: int
    run_id: str
    layer: int
    pattern: np.ndarray  # uint8, H x N

    def __post_init__(self):
        self.pattern = np.asarray(self.pattern, dtype=np.uint8)
        if not np.isin(self.pattern, (0, 1)).all():
            raise InvalidParameterError("activation pattern must be binary")


class ReluNet(BaseEstimator):
    """Bias-free MLP with rectifier hidden layers and a linear readout.

    ``learning_rate`` follows the same conventions as the gated trainer:
    with rate_convention="per_sample" the batch-averaged gradient is scaled
    by N * learning_rate.  ``init_scale`` is the per-entry variance of the
    Gaussian weight initialization.  ``sample_every`` enables binary
    activation sampling of every hidden layer.
    """

    def __init__(self, hidden_widths=(700,), learning_rate=0.001, epochs=8000,
                 init_scale=1e-7, seed=0, record_every=50, sample_every=None,
                 rate_convention="per_sample", snapshot_epochs=(),
                 divergence_limit=1e6):
        self.hidden_widths = hidden_widths
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.init_scale = init_scale
        self.seed = seed
        self.record_every = record_every
        self.sample_every = sample_every
        self.rate_convention = rate_convention
        self.snapshot_epochs = snapshot_epochs
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
        return 1.0 / self._step_size(dataset.n_datapoints)

    def _init_weights(self, d_in, d_out):
        widths = [check_int(w, "hidden width", minimum=1) for w in self.hidden_widths]
        dims = [d_in, *widths, d_out]
        rng = np.random.default_rng(self.seed)
        sigma = np.sqrt(check_scalar(self.init_scale, "init_scale", minimum=0.0))
        return [rng.normal(0.0, sigma, (dims[i + 1], dims[i])) for i in range(len(dims) - 1)]

    def fit(self, dataset: Dataset):
        epochs = check_int(self.epochs, "epochs", minimum=0)
        x, y = dataset.inputs, dataset.targets
        n = dataset.n_datapoints
        step = self._step_size(n)
        weights = self._init_weights(x.shape[0], y.shape[0])
        n_hidden = len(weights) - 1

        snap_at = {int(e) for e in self.snapshot_epochs}
        sample_every = self.sample_every
        epochs_rec, losses = [], []
        self.activation_samples_ = []
        self.snapshots_ = {}

        for epoch in range(epochs + 1):
            acts = [x]
            pres = []
            for i, w in enumerate(weights):
                z = w @ acts[-1]
                pres.append(z)
                acts.append(np.maximum(z, 0.0) if i < n_hidden else z)
            err = y - acts[-1]
            record = epoch % max(self.record_every, 1) == 0 or epoch == epochs
            if record:
                cur = 0.5 * np.sum(err**2) / n
                if not np.isfinite(cur) or cur > self.divergence_limit:
                    raise DivergenceError(f"training diverged (loss={cur:g})", epoch)
                epochs_rec.append(epoch)
                losses.append(cur)
            if sample_every is not None and epoch % sample_every == 0:
                for layer in range(n_hidden):
                    self.activation_samples_.append(ActivationSample(
                        epoch=epoch, run_id=str(self.seed), layer=layer,
                        pattern=(pres[layer] > 0).astype(np.uint8),
                    ))
            if epoch in snap_at:
                self.snapshots_[epoch] = {
                    "outputs": acts[-1].copy(),
                    "preactivations": [p.copy() for p in pres[:n_hidden]],
                }
            if epoch == epochs:
                break
            delta = err
            for i in range(len(weights) - 1, -1, -1):
                grad = delta @ acts[i].T / n
                if i > 0:
                    delta = (weights[i].T @ delta) * (pres[i - 1] > 0)
                weights[i] += step * grad

        self.weights_ = weights
        self.trajectory_ = Trajectory(
            epochs=np.asarray(epochs_rec, dtype=float),
            loss=np.asarray(losses),
            source="relu",
            run_id=str(self.seed),
        )
        return self

    def _forward(self, x):
        acts = [x]
        pres = []
        for i, w in enumerate(self.weights_):
            z = w @ acts[-1]
            pres.append(z)
            acts.append(np.maximum(z, 0.0) if i < len(self.weights_) - 1 else z)
        return acts, pres

    def predict(self, dataset: Dataset):
        acts, _ = self._forward(dataset.inputs)
        return acts[-1]

    def hidden_preactivations(self, dataset: Dataset):
        _, pres = self._forward(dataset.inputs)
        return pres[:-1]

    def export_latents(self, dataset: Dataset, layer: int = 0):
        """Raw post-activation hidden representations, units x datapoints."""
        layer = check_int(layer, "layer", minimum=0)
        if layer >= len(self.weights_) - 1:
            raise InvalidParameterError(f"network has {len(self.weights_) - 1} hidden layers")
        acts, _ = self._forward(dataset.inputs)
        return acts[layer + 1]


def gate_pattern_report(preactivations, context_ids, strict=True, rel_threshold=0.0):
    """Classify hidden units by the structure of their binary activity.

    Returns a dict with per-class unit counts among non-dead units:
    ``context`` units whose activity is a function of context alone,
    ``single`` units active on at most one datapoint, ``other`` everything
    else.  ``rel_threshold`` > 0 treats activations below that fraction of
    the unit's peak as inactive before classifying.
    """
    z = np.asarray(preactivations)
    act = np.maximum(z, 0.0)
    peak = act.max(axis=1)
    dead = peak == 0.0
    live = act[~dead]
    if rel_threshold > 0.0:
        pattern = live > rel_threshold * live.max(axis=1, keepdims=True)
    else:
        pattern = live > 0.0
    ctx = np.asarray(context_ids)
    counts = {"context": 0, "single": 0, "other": 0}
    for row in pattern:
        per_ctx = [row[ctx == c] for c in range(int(ctx.max()) + 1)]
        if all(b.all() or not b.any() for b in per_ctx):
            counts["context"] += 1
        elif row.sum() <= 1:
            counts["single"] += 1
        else:
            counts["other"] += 1
    total = max(len(pattern), 1)
    counts["dead"] = int(dead.sum())
    counts["conforming_fraction"] = (counts["context"] + counts["single"]) / total
    return counts
