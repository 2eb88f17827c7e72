"""Benchmark dataset constructors and (optionally gated) correlation statistics.

Datasets are stored column-major: one column per datapoint, features along
rows.  Contextual tasks concatenate an item one-hot block over a context
one-hot block, so every input column contains exactly two ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateStatisticsError, InvalidParameterError, ShapeError
from .validation import (
    check_int,
    check_matrix,
    check_power_of_two,
    check_scalar,
)

#: Sentinel marking a label block that is active in every context.
SHARED = "shared"


@dataclass(frozen=True)
class LabelBlock:
    """Row range [start, stop) of the targets and the context it belongs to.

    ``context`` is an integer context id, or :data:`SHARED` for rows that are
    active regardless of context.
    """

    start: int
    stop: int
    context: int | str


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray          # d x N
    targets: np.ndarray         # p x N
    item_ids: np.ndarray        # (N,)
    context_ids: np.ndarray | None = None
    label_blocks: tuple[LabelBlock, ...] = ()
    seed: int | None = None
    name: str = "dataset"

    def __post_init__(self):
        if self.inputs.shape[1] != self.targets.shape[1]:
            raise ShapeError(
                f"inputs and targets must share the datapoint axis: "
                f"{self.inputs.shape} vs {self.targets.shape}"
            )
        self.inputs.setflags(write=False)
        self.targets.setflags(write=False)

    @property
    def n_datapoints(self):
        return self.inputs.shape[1]

    @property
    def n_features(self):
        return self.inputs.shape[0]

    @property
    def n_labels(self):
        return self.targets.shape[0]

    @property
    def n_items(self):
        return int(self.item_ids.max()) + 1

    @property
    def n_contexts(self):
        if self.context_ids is None:
            return 0
        return int(self.context_ids.max()) + 1

    def item_feature_rows(self):
        """Row indices of the item one-hot block (contextual datasets)."""
        return np.arange(self.n_items)

    def context_feature_rows(self):
        if self.context_ids is None:
            return np.arange(0)
        return np.arange(self.n_items, self.n_items + self.n_contexts)


@dataclass(frozen=True)
class CorrelationPair:
    """Input-output and input correlation matrices with their factorizations.

    ``svd_yx`` holds the thin SVD (U, S, Vt) of ``sigma_yx`` restricted to
    nonzero singular values; ``eig_x`` holds the eigendecomposition
    (eigenvectors, eigenvalues) of ``sigma_x`` sorted by descending
    eigenvalue.  ``diagonalizability_residual`` is the off-diagonal Frobenius
    mass of Vt @ sigma_x @ V; it vanishes exactly when the right singular
    vectors of ``sigma_yx`` also diagonalize ``sigma_x``.
    """

    sigma_yx: np.ndarray
    sigma_x: np.ndarray
    svd_yx: tuple[np.ndarray, np.ndarray, np.ndarray]
    eig_x: tuple[np.ndarray, np.ndarray]
    diagonalizability_residual: float

    @property
    def mode_input_variances(self):
        """Input variance along each right singular vector of sigma_yx."""
        _, _, vt = self.svd_yx
        return np.einsum("ai,ij,aj->a", vt, self.sigma_x, vt)


def build_xor_margin(delta: float) -> Dataset:
    """Four-point task: XoR in the first two inputs, margin 2*delta in the third."""
    delta = check_scalar(delta, "delta", minimum=0.0)
    inputs = np.array(
        [
            [-1.0, 1.0, -1.0, 1.0],
            [-1.0, -1.0, 1.0, 1.0],
            [-delta, delta, delta, -delta],
        ]
    )
    targets = np.array([[-1.0, 1.0, 1.0, -1.0]])
    return Dataset(
        inputs=inputs,
        targets=targets,
        item_ids=np.arange(4),
        context_ids=None,
        label_blocks=(LabelBlock(0, 1, SHARED),),
        name=f"xor_margin_{delta:g}",
    )


def build_hierarchy_labels(n_items: int) -> np.ndarray:
    """Binary label matrix of a balanced binary tree over ``n_items`` leaves.

    Rows are emitted breadth-first: the all-ones root, then the two subtree
    indicators per level, down to one-hot leaf rows; 2*n_items - 1 rows total.
    """
    n_items = check_power_of_two(n_items, "n_items")
    rows = []
    level = [(0, n_items)]
    while level:
        nxt = []
        for lo, hi in level:
            row = np.zeros(n_items)
            row[lo:hi] = 1.0
            rows.append(row)
            if hi - lo > 1:
                mid = (lo + hi) // 2
                nxt.append((lo, mid))
                nxt.append((mid, hi))
        level = nxt
    return np.array(rows)


def build_contextual(
    items_per_context: int,
    contexts: int,
    shared_labels,
    context_labels,
    seed: int | None = None,
    name: str = "contextual",
) -> Dataset:
    """Contextual task: item one-hots stacked over context one-hots.

    Targets stack a shared block (repeated in every context's column block)
    over per-context blocks that are zero outside their own context columns.
    """
    k = check_int(items_per_context, "items_per_context", minimum=1)
    c = check_int(contexts, "contexts", minimum=2)
    shared = check_matrix(shared_labels, "shared_labels", shape=(None, k))
    blocks = [check_matrix(m, f"context_labels[{i}]", shape=(None, k))
              for i, m in enumerate(context_labels)]
    if len(blocks) != c:
        raise ShapeError(f"need {c} context label matrices, got {len(blocks)}")

    n = k * c
    inputs = np.zeros((k + c, n))
    h_shared = shared.shape[0]
    heights = [b.shape[0] for b in blocks]
    targets = np.zeros((h_shared + sum(heights), n))
    label_blocks = [LabelBlock(0, h_shared, SHARED)]
    row = h_shared
    for i, b in enumerate(blocks):
        label_blocks.append(LabelBlock(row, row + b.shape[0], i))
        row += b.shape[0]

    for ci in range(c):
        cols = slice(ci * k, (ci + 1) * k)
        inputs[:k, cols] = np.eye(k)
        inputs[k + ci, cols] = 1.0
        targets[:h_shared, cols] = shared
        blk = label_blocks[1 + ci]
        targets[blk.start:blk.stop, cols] = blocks[ci]

    return Dataset(
        inputs=inputs,
        targets=targets,
        item_ids=np.tile(np.arange(k), c),
        context_ids=np.repeat(np.arange(c), k),
        label_blocks=tuple(label_blocks),
        seed=seed,
        name=name,
    )


def build_contextual_hierarchy(
    items_per_context: int = 8,
    contexts: int = 3,
    permute_contexts: bool = False,
    seed: int = 0,
) -> Dataset:
    """Contextual task whose shared and per-context blocks are all hierarchies.

    With ``permute_contexts`` each context block's leaf order is shuffled by a
    seeded permutation, which varies the block contents while preserving every
    block's singular values.  The default keeps the identical hierarchy in all
    blocks, so the cross-pathway coupling is exactly symmetric.
    """
    h = build_hierarchy_labels(items_per_context)
    rng = np.random.default_rng(seed)
    blocks = []
    for _ in range(contexts):
        if permute_contexts:
            blocks.append(h[:, rng.permutation(items_per_context)])
        else:
            blocks.append(h)
    tag = "permuted" if permute_contexts else "uniform"
    return build_contextual(
        items_per_context,
        contexts,
        h,
        blocks,
        seed=seed,
        name=f"context{contexts}_{tag}",
    )


def _as_row_mask(selector, size, name):
    if selector is None:
        return np.ones(size, dtype=bool)
    sel = np.asarray(selector)
    if sel.dtype == bool:
        if sel.shape != (size,):
            raise ShapeError(f"{name} boolean mask must have shape ({size},)")
        return sel
    mask = np.zeros(size, dtype=bool)
    mask[sel.astype(int)] = True
    return mask


def correlation_stats(
    dataset: Dataset,
    datapoint_mask=None,
    input_rows=None,
    output_rows=None,
) -> CorrelationPair:
    """Correlation matrices of a dataset, optionally gated.

    Gated-out datapoints and masked feature/label rows contribute zeros, but
    the normalization always uses the full datapoint count, so gated
    statistics are directly comparable across pathways.
    """
    x = dataset.inputs
    y = dataset.targets
    n = dataset.n_datapoints

    g = _as_row_mask(datapoint_mask, n, "datapoint_mask").astype(float)
    if g.sum() == 0:
        raise DegenerateStatisticsError("mask leaves no active datapoints")
    xm = x * _as_row_mask(input_rows, x.shape[0], "input_rows")[:, None]
    ym = y * _as_row_mask(output_rows, y.shape[0], "output_rows")[:, None]
    xm = xm * g
    ym = ym * g

    sigma_yx = ym @ xm.T / n
    sigma_x = xm @ xm.T / n
    return _factorize(sigma_yx, sigma_x)


def _factorize(sigma_yx, sigma_x) -> CorrelationPair:
    u, s, vt = np.linalg.svd(sigma_yx, full_matrices=False)
    cutoff = max(sigma_yx.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    keep = s > max(cutoff, 1e-14)
    u, s, vt = u[:, keep], s[keep], vt[keep]
    u, vt = _fix_svd_signs(u, vt)

    evals, evecs = np.linalg.eigh(sigma_x)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]

    projected = vt @ sigma_x @ vt.T
    residual = float(np.linalg.norm(projected - np.diag(np.diag(projected))))
    return CorrelationPair(
        sigma_yx=sigma_yx,
        sigma_x=sigma_x,
        svd_yx=(u, s, vt),
        eig_x=(evecs, evals),
        diagonalizability_residual=residual,
    )


def _fix_svd_signs(u, vt):
    """Flip singular vector pairs so each right vector's largest entry is positive."""
    for a in range(vt.shape[0]):
        j = np.argmax(np.abs(vt[a]))
        if vt[a, j] < 0:
            vt[a] = -vt[a]
            u[:, a] = -u[:, a]
    return u, vt


def check_diagonalizable(stats: CorrelationPair, tol: float = 1e-8):
    """True when sigma_yx's right singular vectors diagonalize sigma_x within tol."""
    tol = check_scalar(tol, "tol", minimum=0.0)
    residual = stats.diagonalizability_residual
    return bool(residual <= tol), residual


def save_dataset(dataset: Dataset, directory) -> None:
    """Write inputs.csv / targets.csv (column per datapoint) plus metadata.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "inputs.csv", dataset.inputs, delimiter=",", fmt="%.12g")
    np.savetxt(directory / "targets.csv", dataset.targets, delimiter=",", fmt="%.12g")
    meta = {
        "name": dataset.name,
        "seed": dataset.seed,
        "item_ids": dataset.item_ids.tolist(),
        "context_ids": None if dataset.context_ids is None else dataset.context_ids.tolist(),
        "label_blocks": [
            {"start": b.start, "stop": b.stop, "context": b.context}
            for b in dataset.label_blocks
        ],
    }
    (directory / "metadata.json").write_text(json.dumps(meta, indent=2))


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    inputs = np.atleast_2d(np.loadtxt(directory / "inputs.csv", delimiter=","))
    targets = np.atleast_2d(np.loadtxt(directory / "targets.csv", delimiter=","))
    meta = json.loads((directory / "metadata.json").read_text())
    blocks = tuple(
        LabelBlock(b["start"], b["stop"], b["context"]) for b in meta["label_blocks"]
    )
    ctx = meta["context_ids"]
    return Dataset(
        inputs=inputs,
        targets=targets,
        item_ids=np.asarray(meta["item_ids"]),
        context_ids=None if ctx is None else np.asarray(ctx),
        label_blocks=blocks,
        seed=meta["seed"],
        name=meta["name"],
    )
