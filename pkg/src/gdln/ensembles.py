"""Vectorized multi-seed training for run-ensemble experiments.

Two-hidden-layer ensembles are too slow to train one seed at a time, so the
MLP trainer and the shared-first-layer gated trainer here batch all runs into
single tensor operations.  torch (CPU) is used when available; the numpy path
computes identical updates.  Ensembles default to float32, which is ample for
the curve statistics they feed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .errors import DivergenceError
from .graphs import contextual_gates
from .trajectory import Trajectory

try:
    import torch
except ImportError:  # pragma: no cover - exercised only without torch
    torch = None


def _backend(name):
    if name == "auto":
        return "torch" if torch is not None else "numpy"
    if name == "torch" and torch is None:
        raise ImportError("torch backend requested but torch is not installed")
    return name


@dataclass
class EnsembleResult:
    trajectories: list
    first_layer_always_active: np.ndarray | None = None
    final_weights: list | None = None


def relu_ensemble(dataset: Dataset, hidden_widths, learning_rate, epochs,
                  init_scale, n_runs, base_seed=0, record_every=100,
                  rate_convention="per_sample", backend="auto",
                  dtype="float32", keep_weights=False) -> EnsembleResult:
    """Train ``n_runs`` independently seeded MLPs in one batched loop.

    Seeds are base_seed..base_seed+n_runs-1.  Records each run's loss curve
    and the fraction of first-hidden-layer units active on every datapoint at
    the final epoch.
    """
    x = dataset.inputs
    y = dataset.targets
    n = dataset.n_datapoints
    step = n * learning_rate if rate_convention == "per_sample" else learning_rate
    dims = [x.shape[0], *hidden_widths, y.shape[0]]
    sigma = np.sqrt(init_scale)
    rngs = [np.random.default_rng(base_seed + r) for r in range(n_runs)]
    weights = [
        np.stack([rng.normal(0.0, sigma, (dims[i + 1], dims[i])) for rng in rngs])
        for i in range(len(dims) - 1)
    ]
    n_hidden = len(weights) - 1

    be = _backend(backend)
    if be == "torch":
        td = torch.float32 if dtype == "float32" else torch.float64
        xw = torch.from_numpy(np.array(x)).to(td)
        yw = torch.from_numpy(np.array(y)).to(td)
        ws = [torch.from_numpy(w).to(td) for w in weights]
        mm, relu_f = torch.matmul, torch.relu
        from_w = lambda t: t.cpu().double().numpy()
    else:
        fd = np.float32 if dtype == "float32" else np.float64
        xw = x.astype(fd)
        yw = y.astype(fd)
        ws = [w.astype(fd) for w in weights]
        mm, relu_f = np.matmul, lambda z: np.maximum(z, 0)
        from_w = np.asarray

    epochs_rec = []
    losses = []
    for epoch in range(epochs + 1):
        acts = [xw]
        pres = []
        for i, w in enumerate(ws):
            z = mm(w, acts[-1])
            pres.append(z)
            acts.append(relu_f(z) if i < n_hidden else z)
        err = yw - acts[-1]
        if epoch % record_every == 0 or epoch == epochs:
            if be == "torch":
                cur = 0.5 * torch.sum(err**2, dim=(1, 2)).cpu().double().numpy() / n
            else:
                cur = 0.5 * np.sum(err.astype(np.float64) ** 2, axis=(1, 2)) / n
            if not np.isfinite(cur).all():
                raise DivergenceError("ensemble diverged", epoch)
            epochs_rec.append(epoch)
            losses.append(cur)
        if epoch == epochs:
            break
        delta = err
        for i in range(len(ws) - 1, -1, -1):
            prev_t = acts[i].T if acts[i].ndim == 2 else (
                acts[i].transpose(-1, -2) if be == "torch" else np.swapaxes(acts[i], -1, -2))
            grad = mm(delta, prev_t)
            if i > 0:
                mask = pres[i - 1] > 0
                back = mm(ws[i].transpose(-1, -2) if be == "torch" else np.swapaxes(ws[i], -1, -2), delta)
                delta = back * (mask.to(back.dtype) if be == "torch" else mask)
            ws[i] = ws[i] + (step / n) * grad

    final_pre1 = from_w(pres[0])
    always = (final_pre1 > 0).all(axis=2).mean(axis=1)
    losses = np.asarray(losses)
    trajectories = [
        Trajectory(
            epochs=np.asarray(epochs_rec, dtype=float),
            loss=losses[:, r],
            source="relu",
            run_id=str(base_seed + r),
        )
        for r in range(n_runs)
    ]
    return EnsembleResult(
        trajectories=trajectories,
        first_layer_always_active=np.asarray(always),
        final_weights=[[from_w(w[r]) for w in ws] for r in range(n_runs)] if keep_weights else None,
    )


def depth2_gated_ensemble(dataset: Dataset, hidden_width, learning_rate, epochs,
                          init_scale, n_runs, base_seed=0, record_every=100,
                          rate_convention="per_sample", backend="auto",
                          dtype="float32") -> EnsembleResult:
    """Batched trainer for the shared-first-layer gated architecture.

    Pathways: one always-on plus C context pathways gated in the second
    hidden layer, all sharing the ungated first layer.  Updates follow the
    path-decomposed gradient of the batch L2 loss, identical to the generic
    graph trainer on the corresponding preset.
    """
    x = dataset.inputs
    y = dataset.targets
    n = dataset.n_datapoints
    c = dataset.n_contexts
    step = n * learning_rate if rate_convention == "per_sample" else learning_rate
    gates = [np.ones(n)] + list(contextual_gates(dataset, c - 1))
    n_path = len(gates)
    sigma = np.sqrt(init_scale)
    # draw order matches the graph preset's edge order (w0, then w1/w2 per path)
    # so a run here is bitwise-comparable to the generic trainer at float64
    w0_l, w1_l, w2_l = [], [], []
    for r in range(n_runs):
        rng = np.random.default_rng(base_seed + r)
        w0_l.append(rng.normal(0.0, sigma, (hidden_width, x.shape[0])))
        w1s, w2s = [], []
        for _ in range(n_path):
            w1s.append(rng.normal(0.0, sigma, (hidden_width, hidden_width)))
            w2s.append(rng.normal(0.0, sigma, (y.shape[0], hidden_width)))
        w1_l.append(np.stack(w1s))
        w2_l.append(np.stack(w2s))
    w0 = np.stack(w0_l)   # (R, h, d)
    w1 = np.stack(w1_l)   # (R, P, h, h)
    w2 = np.stack(w2_l)   # (R, P, out, h)

    be = _backend(backend)
    use_torch = be == "torch"
    if use_torch:
        td = torch.float32 if dtype == "float32" else torch.float64
        cast = lambda a: torch.from_numpy(np.array(a)).to(td)
        ein = torch.einsum
    else:
        fd = np.float32 if dtype == "float32" else np.float64
        cast = lambda a: np.asarray(a, dtype=fd)
        ein = np.einsum
    xw, yw, w0, w1, w2 = cast(x), cast(y), cast(w0), cast(w1), cast(w2)
    g = cast(np.stack(gates))  # (P, N)

    # gated correlation statistics, shared across runs
    syx_np = np.stack([(y * gg) @ x.T / n for gg in gates])  # (P, out, d)
    sx_np = np.stack([
        np.stack([(x * (gates[j] * gates[p])) @ x.T / n for p in range(n_path)])
        for j in range(n_path)
    ])  # (j, p, d, d)
    syx, sx = cast(syx_np), cast(sx_np)

    epochs_rec, losses = [], []
    for epoch in range(epochs + 1):
        wp = ein("rphk,rkd->rphd", w1, w0)          # hidden-path maps (R,P,h,d)
        full = ein("rpoh,rphd->rpod", w2, wp)       # end-to-end per path (R,P,out,d)
        if epoch % record_every == 0 or epoch == epochs:
            yhat = ein("rpod,dN,pN->roN", full, xw, g)
            err = yw[None] - yhat
            if use_torch:
                cur = 0.5 * torch.sum(err**2, dim=(1, 2)).cpu().double().numpy() / n
            else:
                cur = 0.5 * np.sum(err.astype(np.float64) ** 2, axis=(1, 2)) / n
            if not np.isfinite(cur).all():
                raise DivergenceError("ensemble diverged", epoch)
            epochs_rec.append(epoch)
            losses.append(cur)
        if epoch == epochs:
            break
        # bracket_p = Syx(p) - sum_j full_j Sx(j, p)
        bracket = syx[None] - ein("rjoe,jped->rpod", full, sx)
        # per-edge updates from the three path segments
        gw2 = ein("rpod,rphd->rpoh", bracket, wp)
        mid = ein("rpoh,rpod->rphd", w2, bracket)   # W2^T bracket (R,P,h,d)
        gw1 = ein("rphd,rkd->rphk", mid, w0)
        gw0 = ein("rphk,rphd->rkd", w1, mid)
        w0 = w0 + step * gw0
        w1 = w1 + step * gw1
        w2 = w2 + step * gw2

    losses = np.asarray(losses)
    trajectories = [
        Trajectory(
            epochs=np.asarray(epochs_rec, dtype=float),
            loss=losses[:, r],
            source="gdln",
            run_id=str(base_seed + r),
        )
        for r in range(n_runs)
    ]
    return EnsembleResult(trajectories=trajectories)
