"""Constructing a gated linear network that imitates a trained rectifier net.

Gating alone fixes the architecture; matching the full loss trajectory also
requires matching where each pathway's mode strengths start.  A rectifier
network discovers its gates during an early transient, so its effective
initial strengths differ per pathway from any single weight variance.  The
calibration here measures the source network's realized mode strengths from
output snapshots (common content via linear regression on the inputs,
contextual content via projections onto the residual structure, which are
exactly insensitive to each other), back-solves each mode group's implied
initial strength through the closed-form sigmoid, and Newton-iterates a few
spectrally initialized fits until the imitation reproduces those anchors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import (
    common_pathway_modes,
    common_pathway_residual,
    contextual_pathway_modes,
)
from .datasets import Dataset
from .errors import InvalidParameterError
from .graphs import contextual_gates, contextual_graph
from .network import GatedLinearNet, spectral_pathway_init
from .relu import ReluNet


def _group_slices(values, tol=1e-9):
    gs, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or abs(values[i] - values[start]) > tol * max(values[start], 1.0):
            gs.append(slice(start, i))
            start = i
    return gs


def _invert_sigmoid(plateau, value, rate_s, t, tau):
    """Initial strength whose sigmoid passes through (t, value)."""
    value = np.clip(value, plateau * 1e-13, plateau * (1.0 - 1e-9))
    return plateau / (1.0 + (plateau / value - 1.0) * np.exp(2.0 * rate_s * t / tau))


@dataclass
class ImitationCalibration:
    b0_common: np.ndarray
    b0_context: np.ndarray
    common_anchors: list
    context_anchors: list


class _Measurer:
    """Extracts per-mode-group strengths from output snapshots.

    Common content is read off the best linear map from inputs to outputs;
    contextual content is read off projections onto the residual function
    basis.  The two are exactly orthogonal measurements: the residual has no
    correlation with the input features, and linear-in-features content has
    no projection on the residual basis.
    """

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        n = dataset.n_datapoints
        x = dataset.inputs
        self.x = x
        self.sx_pinv = np.linalg.pinv(x @ x.T / n)
        self.n = n

        self.common = common_pathway_modes(dataset)
        self.common_groups = self.common.groups()
        self.ctx = contextual_pathway_modes(dataset)
        self.ctx_groups = self.ctx.groups()

        residual = common_pathway_residual(dataset)
        uf, sf, vtf = np.linalg.svd(residual, full_matrices=False)
        keep = sf > max(1e-12, 1e-9 * (sf[0] if sf.size else 0.0))
        self.uf, self.sf, self.vtf = uf[:, keep], sf[keep], vtf[keep]
        self.fun_groups = _group_slices(self.sf)
        if len(self.fun_groups) != len(self.ctx_groups):
            raise InvalidParameterError(
                "residual function modes do not group like the pathway modes; "
                "imitation calibration requires the symmetric contextual task"
            )

    def common_strengths(self, outputs):
        w_eff = (outputs @ self.x.T / self.n) @ self.sx_pinv
        vals = np.empty(len(self.common_groups))
        for i, g in enumerate(self.common_groups):
            sub = self.common.u[:, g].T @ w_eff @ self.common.vt[g].T
            vals[i] = np.linalg.norm(sub) / np.sqrt(g.stop - g.start)
        return vals

    def context_strengths(self, outputs):
        vals = np.empty(len(self.fun_groups))
        for i, g in enumerate(self.fun_groups):
            sub = self.uf[:, g].T @ outputs @ self.vtf[g].T
            frac = np.linalg.norm(sub) / np.linalg.norm(np.diag(self.sf[g]))
            vals[i] = frac * self.ctx.plateau[self.ctx_groups[i].start]
        return vals


def _pick_anchor(times, values, plateau, fraction):
    idx = int(np.argmin([abs(v - fraction * plateau) for v in values]))
    return times[idx], values[idx]


def fit_imitation(dataset: Dataset, relu: ReluNet, hidden_width: int = 100,
                  n_iterations: int = 3, anchor_fraction: float = 0.35,
                  noise_scale: float = 1e-9, seed: int = 0,
                  snapshot_epochs=()):
    """Calibrate and train the gated imitation of a fitted rectifier network.

    ``relu`` must have been fitted with output snapshots on a grid dense
    enough to bracket each mode group's mid-rise.  Returns the fitted gated
    network; the calibration record is attached as ``net.calibration_``.
    """
    if not getattr(relu, "snapshots_", None):
        raise InvalidParameterError("the source network must carry output snapshots")
    meas = _Measurer(dataset)
    times = sorted(relu.snapshots_)
    outs = [relu.snapshots_[t]["outputs"] if isinstance(relu.snapshots_[t], dict)
            else relu.snapshots_[t] for t in times]
    tau = relu.time_constant(dataset)

    common_series = np.array([meas.common_strengths(o) for o in outs])
    ctx_series = np.array([meas.context_strengths(o) for o in outs])

    common_plateau = [meas.common.plateau[g.start] for g in meas.common_groups]
    common_rate = [meas.common.s[g.start] for g in meas.common_groups]
    ctx_plateau = [meas.ctx.plateau[g.start] for g in meas.ctx_groups]
    ctx_rate = [meas.ctx.s[g.start] for g in meas.ctx_groups]

    common_anchors = [
        _pick_anchor(times, common_series[:, i], common_plateau[i], anchor_fraction)
        for i in range(len(meas.common_groups))
    ]
    ctx_anchors = [
        _pick_anchor(times, ctx_series[:, i], ctx_plateau[i], anchor_fraction)
        for i in range(len(meas.ctx_groups))
    ]
    target_common = np.array([
        _invert_sigmoid(common_plateau[i], v, common_rate[i], t, tau)
        for i, (t, v) in enumerate(common_anchors)
    ])
    target_ctx = np.array([
        _invert_sigmoid(ctx_plateau[i], v, ctx_rate[i], t, tau)
        for i, (t, v) in enumerate(ctx_anchors)
    ])

    graph, gates = contextual_graph(dataset, hidden_width=hidden_width)
    anchor_epochs = tuple(sorted({t for t, _ in common_anchors} | {t for t, _ in ctx_anchors}))
    config = dict(
        learning_rate=relu.learning_rate,
        epochs=relu.epochs,
        rate_convention=relu.rate_convention,
        record_every=relu.record_every,
    )

    b_common = target_common.copy()
    b_ctx = target_ctx.copy()
    net = None
    for it in range(max(1, n_iterations)):
        last = it == max(1, n_iterations) - 1
        snaps = tuple(sorted(set(anchor_epochs) | set(int(e) for e in snapshot_epochs))) \
            if last else anchor_epochs
        net = GatedLinearNet(
            graph, gates, seed=seed,
            init_weights=_calibrated_init(dataset, graph, meas, b_common, b_ctx,
                                          noise_scale, seed),
            snapshot_epochs=snaps, **config,
        )
        net.fit(dataset)
        if last:
            break
        own_common = np.array([meas.common_strengths(net.snapshots_[t])
                               for t in anchor_epochs])
        own_ctx = np.array([meas.context_strengths(net.snapshots_[t])
                            for t in anchor_epochs])
        for i, (t, _) in enumerate(common_anchors):
            row = anchor_epochs.index(t)
            implied = _invert_sigmoid(common_plateau[i], own_common[row, i],
                                      common_rate[i], t, tau)
            b_common[i] = np.clip(b_common[i] * target_common[i] / implied, 1e-16, 1e-2)
        for i, (t, _) in enumerate(ctx_anchors):
            row = anchor_epochs.index(t)
            implied = _invert_sigmoid(ctx_plateau[i], own_ctx[row, i],
                                      ctx_rate[i], t, tau)
            b_ctx[i] = np.clip(b_ctx[i] * target_ctx[i] / implied, 1e-16, 1e-2)

    net.calibration_ = ImitationCalibration(
        b0_common=b_common, b0_context=b_ctx,
        common_anchors=common_anchors, context_anchors=ctx_anchors,
    )
    return net


def _calibrated_init(dataset, graph, meas: _Measurer, b_common, b_ctx,
                     noise_scale, seed):
    """Spectral per-pathway init with the calibrated per-group strengths."""
    rng = np.random.default_rng(seed)
    c = dataset.n_contexts
    n = dataset.n_datapoints

    strengths_common = np.empty(len(meas.common.s))
    for i, g in enumerate(meas.common_groups):
        strengths_common[g] = b_common[i]
    strengths_ctx = np.empty(len(meas.ctx.s))
    for i, g in enumerate(meas.ctx_groups):
        strengths_ctx[g] = b_ctx[i]

    residual = common_pathway_residual(dataset)
    x_items = dataset.inputs[dataset.item_feature_rows()]
    gates = contextual_gates(dataset, c - 1)

    weights = {}
    paths = {p[0].split(":")[0]: p for p in graph.paths}
    weights.update(spectral_pathway_init(
        graph, paths["common"], meas.common.u, meas.common.vt, strengths_common,
        rng=rng, noise_scale=noise_scale,
    ))
    for p in range(c):
        syx = (residual * gates[p]) @ x_items.T / n
        u_p = syx @ meas.ctx.vt.T / meas.ctx.s
        u_p /= np.linalg.norm(u_p, axis=0, keepdims=True)
        weights.update(spectral_pathway_init(
            graph, paths[f"ctx{p}"], u_p, meas.ctx.vt, strengths_ctx,
            rng=rng, noise_scale=noise_scale,
        ))
    return weights
