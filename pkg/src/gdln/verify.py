"""Numeric checks behind the structural claims: singular-value interlacing,
datapoint-removal monotonicity, alignment diagnostics, and gradient fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .errors import InapplicableError, InvalidParameterError
from .network import gradient, loss
from .validation import check_int, check_scalar


@dataclass
class InterlacingReport:
    """Sorted singular values of a matrix, its column restriction, and its
    row-and-column restriction, with the interlacing verdict."""

    sigma: np.ndarray   # full matrix
    alpha: np.ndarray   # columns restricted
    beta: np.ndarray    # rows and columns restricted
    tol: float
    holds: bool

    def to_dict(self):
        return {
            "sigma": self.sigma.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "tol": self.tol,
            "holds": self.holds,
        }


def interlacing_check(m, row_subset, col_subset, tol: float = 1e-10) -> InterlacingReport:
    """Check beta_j <= alpha_j <= sigma_j for a submatrix restriction.

    ``alpha`` are the singular values of the column-restricted matrix and
    ``beta`` those of the row-and-column restricted one; restriction can only
    shrink each ordered singular value.
    """
    m = np.asarray(m, dtype=float)
    rows = np.asarray(row_subset, dtype=int)
    cols = np.asarray(col_subset, dtype=int)
    if rows.size == 0 or cols.size == 0:
        raise InvalidParameterError("row and column subsets must be nonempty")
    tol = check_scalar(tol, "tol", minimum=0.0)
    sigma = np.linalg.svd(m, compute_uv=False)
    alpha = np.linalg.svd(m[:, cols], compute_uv=False)
    beta = np.linalg.svd(m[np.ix_(rows, cols)], compute_uv=False)
    holds = True
    for j in range(len(beta)):
        if j < len(alpha) and beta[j] > alpha[j] + tol:
            holds = False
    for j in range(len(alpha)):
        if j < len(sigma) and alpha[j] > sigma[j] + tol:
            holds = False
    return InterlacingReport(sigma=sigma, alpha=alpha, beta=beta, tol=tol, holds=holds)


def datapoint_removal_check(dataset: Dataset, tol: float = 1e-12) -> bool:
    """Top singular value of the input-output correlation never grows when a
    datapoint is removed, provided inputs and targets are elementwise
    nonnegative (the positivity the argument relies on)."""
    x, y = dataset.inputs, dataset.targets
    if x.min() < 0 or y.min() < 0:
        raise InapplicableError(
            "datapoint removal monotonicity requires elementwise nonnegative data"
        )
    n = dataset.n_datapoints
    full_top = np.linalg.svd(y @ x.T / n, compute_uv=False)[0]
    for i in range(n):
        keep = np.ones(n, dtype=bool)
        keep[i] = False
        reduced = (y[:, keep] @ x[:, keep].T) / n
        if np.linalg.svd(reduced, compute_uv=False)[0] > full_top + tol:
            return False
    return True


def alignment_diagnostic(w_path, u, vt) -> float:
    """Off-diagonal fraction of a pathway map expressed in a mode basis.

    Zero means the map is perfectly aligned with the given singular vectors;
    a zero map is defined as aligned.
    """
    w_path = np.asarray(w_path, dtype=float)
    projected = np.asarray(u).T @ w_path @ np.asarray(vt).T
    total = np.linalg.norm(projected)
    if total == 0.0:
        return 0.0
    off = projected - np.diag(np.diag(projected))
    return float(np.linalg.norm(off) / total)


def gradient_check(graph, gates, dataset: Dataset, n_points: int = 20,
                   fd_step: float = 1e-6, weight_scale: float = 1e-2,
                   seed: int = 0, max_entries_per_edge: int = 25) -> float:
    """Largest relative disagreement between the correlation-form gradient and
    central finite differences of the loss, over random small-weight points.

    Entries are subsampled per edge to keep the check fast; the error of an
    entry is measured relative to the largest finite-difference magnitude on
    its edge.
    """
    n_points = check_int(n_points, "n_points", minimum=1)
    fd_step = check_scalar(fd_step, "fd_step", minimum=0.0, strict_min=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        weights = {
            name: rng.normal(0.0, weight_scale, graph.edge_shape(name))
            for name in graph.edges
        }
        analytic = gradient(graph, weights, gates, dataset)
        for name in graph.edges:
            shape = weights[name].shape
            total = shape[0] * shape[1]
            if total <= max_entries_per_edge:
                flat = np.arange(total)
            else:
                flat = rng.choice(total, size=max_entries_per_edge, replace=False)
            fd_vals = np.empty(flat.size)
            for idx, f in enumerate(flat):
                i, j = divmod(int(f), shape[1])
                orig = weights[name][i, j]
                weights[name][i, j] = orig + fd_step
                lp = loss(graph, weights, gates, dataset)
                weights[name][i, j] = orig - fd_step
                lm = loss(graph, weights, gates, dataset)
                weights[name][i, j] = orig
                fd_vals[idx] = -(lp - lm) / (2.0 * fd_step)
            scale = max(np.abs(fd_vals).max(), np.abs(analytic[name]).max(), 1e-12)
            for idx, f in enumerate(flat):
                i, j = divmod(int(f), shape[1])
                err = abs(analytic[name][i, j] - fd_vals[idx]) / scale
                worst = max(worst, err)
    return worst
