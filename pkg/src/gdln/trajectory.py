"""Time series of training runs and the shared CSV schema.

Every trainer and every analytic curve in the package emits a Trajectory, so
runs from different sources can be compared with the same tooling.  The CSV
schema is: epoch, loss, source, run_id, then one column per tracked mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .validation import check_scalar

#: Returned by time_to_criterion when the trajectory never crosses the threshold.
NOT_REACHED = None


@dataclass
class Trajectory:
    epochs: np.ndarray
    loss: np.ndarray
    source: str = "gdln"
    run_id: str = "0"
    mode_names: tuple[str, ...] = ()
    modes: np.ndarray | None = None  # (T, len(mode_names))

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=float)
        self.loss = np.asarray(self.loss, dtype=float)
        if self.epochs.shape != self.loss.shape:
            raise ShapeError("epochs and loss must have equal length")
        if self.modes is not None:
            self.modes = np.asarray(self.modes, dtype=float)
            if self.modes.shape != (len(self.epochs), len(self.mode_names)):
                raise ShapeError("modes must be (n_epochs, n_mode_names)")

    @property
    def final_loss(self):
        return float(self.loss[-1])

    def time_to_criterion(self, threshold: float):
        """First linearly interpolated epoch at which loss <= threshold.

        Returns NOT_REACHED (None) if the trajectory never crosses.
        """
        threshold = check_scalar(threshold, "threshold", minimum=0.0, strict_min=True)
        below = np.where(self.loss <= threshold)[0]
        if below.size == 0:
            return NOT_REACHED
        i = int(below[0])
        if i == 0:
            return 0.0
        l0, l1 = self.loss[i - 1], self.loss[i]
        t0, t1 = self.epochs[i - 1], self.epochs[i]
        if l0 == l1:
            return float(t1)
        return float(t0 + (l0 - threshold) / (l0 - l1) * (t1 - t0))

    def resample(self, epochs):
        """Linearly interpolate the loss curve onto a new epoch grid."""
        epochs = np.asarray(epochs, dtype=float)
        return Trajectory(
            epochs=epochs,
            loss=np.interp(epochs, self.epochs, self.loss),
            source=self.source,
            run_id=self.run_id,
        )

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "source", "run_id", *self.mode_names])
            for i, (e, l) in enumerate(zip(self.epochs, self.loss)):
                row = [f"{e:g}", f"{l:.12g}", self.source, self.run_id]
                if self.modes is not None:
                    row += [f"{v:.12g}" for v in self.modes[i]]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            mode_names = tuple(header[4:])
            epochs, loss, modes = [], [], []
            source, run_id = "gdln", "0"
            for row in reader:
                epochs.append(float(row[0]))
                loss.append(float(row[1]))
                source, run_id = row[2], row[3]
                if mode_names:
                    modes.append([float(v) for v in row[4:]])
        return cls(
            epochs=np.asarray(epochs),
            loss=np.asarray(loss),
            source=source,
            run_id=run_id,
            mode_names=mode_names,
            modes=np.asarray(modes) if mode_names else None,
        )


def l2_curve_distance(a: Trajectory, b: Trajectory) -> float:
    """Sum of squared loss differences across timepoints.

    Curves recorded on different epoch grids are resampled onto the union of
    both grids first.
    """
    if a.epochs.shape == b.epochs.shape and np.allclose(a.epochs, b.epochs):
        return float(np.sum((a.loss - b.loss) ** 2))
    grid = np.union1d(a.epochs, b.epochs)
    lo = max(a.epochs[0], b.epochs[0])
    hi = min(a.epochs[-1], b.epochs[-1])
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size == 0:
        raise InvalidParameterError("trajectories do not overlap in time")
    return float(np.sum((a.resample(grid).loss - b.resample(grid).loss) ** 2))


def select_stereotypical_run(trajectories) -> int:
    """Index of the run minimizing the summed squared distance to all others.

    Ties resolve to the lowest index.  Equivalent to picking the run closest
    to the mean curve.
    """
    if len(trajectories) < 2:
        raise InvalidParameterError("need at least two trajectories")
    lengths = {len(t.loss) for t in trajectories}
    if len(lengths) != 1:
        raise ShapeError("trajectories must share their epoch grid")
    losses = np.stack([t.loss for t in trajectories])
    mean = losses.mean(axis=0)
    score = np.sum((losses - mean) ** 2, axis=1)
    return int(np.argmin(score))


def count_plateaus(traj: Trajectory, slope_tol: float = 1e-4, min_width: int = 5):
    """Count flat stretches of a loss curve.

    A plateau is a maximal run of at least ``min_width`` consecutive recorded
    points whose per-epoch slope magnitude stays below ``slope_tol`` times the
    initial loss.  Used to compare staged learning curves structurally.
    """
    if len(traj.loss) < min_width + 1:
        return 0
    scale = max(traj.loss[0], 1e-30)
    d_epoch = np.diff(traj.epochs)
    d_epoch[d_epoch == 0] = 1.0
    slope = np.abs(np.diff(traj.loss)) / d_epoch / scale
    flat = slope < slope_tol
    count = 0
    run = 0
    for f in flat:
        if f:
            run += 1
        else:
            if run >= min_width:
                count += 1
            run = 0
    if run >= min_width:
        count += 1
    return count
