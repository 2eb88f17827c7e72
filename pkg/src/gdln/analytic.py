"""Closed-form learning dynamics and reduced mode-competition systems.

Pathway learning in a gated linear network decouples, per dataset mode, into
one-dimensional strengths that rise sigmoidally from their initial value to a
fixed point set by the effective correlation statistics.  This module holds
those closed forms, the margin-task loss curves and crossover, the coupled
contextual solutions, and an explicit-Euler integrator for the general
mode-competition reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import CorrelationPair, Dataset, correlation_stats
from .errors import DivergenceError, InvalidParameterError
from .validation import check_int, check_scalar


@dataclass(frozen=True)
class ModeParams:
    """One mode's dynamics parameters.

    lam: input-output singular value driving the mode.
    delta_x: input variance along the mode direction.
    a0: initial mode strength (> 0).
    tau: learning time constant, 1 / (N * per-sample rate).
    """

    lam: float
    delta_x: float
    a0: float
    tau: float

    def __post_init__(self):
        check_scalar(self.lam, "lam", minimum=0.0)
        check_scalar(self.delta_x, "delta_x", minimum=0.0, strict_min=True)
        check_scalar(self.a0, "a0", minimum=0.0, strict_min=True)
        check_scalar(self.tau, "tau", minimum=0.0, strict_min=True)


def linear_mode_trajectory(params: ModeParams, t):
    """Sigmoidal mode strength of a two-layer linear pathway.

    Starts at a0 at t = 0 and saturates at lam / delta_x.  A mode with zero
    driving singular value has no dynamics and stays at a0.
    """
    t = np.asarray(t, dtype=float)
    if params.lam == 0.0:
        return np.broadcast_to(params.a0, t.shape).copy() if t.shape else float(params.a0)
    plateau = params.lam / params.delta_x
    expo = np.exp(-2.0 * params.lam * t / params.tau)
    return plateau / (1.0 - (1.0 - plateau / params.a0) * expo)


def time_to_mode_value(params: ModeParams, omega_f: float) -> float:
    """Time for the mode strength to grow from a0 to omega_f.

    Only defined strictly between the initial value and the fixed point.
    """
    omega_f = check_scalar(omega_f, "omega_f")
    plateau = params.lam / params.delta_x if params.lam > 0 else np.inf
    if not params.a0 < omega_f < plateau:
        raise InvalidParameterError(
            f"omega_f must lie in ({params.a0:g}, {plateau:g}), got {omega_f:g}"
        )
    lam, d, a0, tau = params.lam, params.delta_x, params.a0, params.tau
    return tau / (2.0 * lam) * np.log(
        omega_f * (lam - a0 * d) / (a0 * (lam - omega_f * d))
    )


# ---------------------------------------------------------------------------
# Margin task (XoR in two dimensions, linearly separable in the third)
# ---------------------------------------------------------------------------

#: Defaults matching the 128-hidden-unit simulation setup: rate 0.4 on the
#: batch-averaged loss and per-entry weight variance 4e-8/128.  The initial
#: mode strength is the root-mean-square projection of the initial two-layer
#: product onto a pathway mode, sqrt(n_h/2) * variance, with half the units
#: participating in a pathway on average.
XOR_TAU = 2.5
XOR_A0 = np.sqrt(128.0 / 2.0) * (4e-8 / 128.0)


def xor_gating_constants(delta: float, variant: str):
    """(singular value, input variance) of one pathway's effective dataset.

    For sign-split gating the two pathways each see two datapoints and drive
    s = delta/2 along the margin direction.  For pointwise gating each of the
    four pathways sees one datapoint with s = sqrt(1/8 + delta^2/16); the
    input variance along that direction is (2 + delta^2)/4 = 4 s^2, the value
    consistent with the loss reaching zero at the fixed point s/d.
    """
    delta = check_scalar(delta, "delta", minimum=0.0)
    if variant == "linear_gating":
        return delta / 2.0, delta**2 / 2.0
    if variant == "xor_gating":
        s = np.sqrt(1.0 / 8.0 + delta**2 / 16.0)
        return s, 4.0 * s**2
    raise InvalidParameterError(f"variant must be 'linear_gating' or 'xor_gating', got {variant!r}")


def xor_drive_is_degenerate(delta: float, variant: str) -> bool:
    """True when the pathway has no learning signal (zero singular value)."""
    s, _ = xor_gating_constants(delta, variant)
    return s == 0.0


def xor_gdln_loss(delta: float, t, variant: str, a0: float = XOR_A0,
                  tau: float = XOR_TAU):
    """Analytic loss curve of the gated network on the margin task.

    Sign-split gating: L = 1/2 - delta*a + delta^2 a^2 / 2.
    Pointwise gating:  L = 1/2 - 4 s a + 2 d a^2.
    Both start at 1/2 (tiny a0) and decay to zero.  A degenerate drive
    (sign-split gating at delta = 0) yields the constant curve 1/2.
    """
    t = np.asarray(t, dtype=float)
    s, d = xor_gating_constants(delta, variant)
    if s == 0.0:
        return np.broadcast_to(0.5, t.shape).copy() if t.shape else 0.5
    a = linear_mode_trajectory(ModeParams(s, d, a0, tau), t)
    if variant == "linear_gating":
        return 0.5 - delta * a + 0.5 * delta**2 * a**2
    return 0.5 - 4.0 * s * a + 2.0 * d * a**2


def xor_time_to_loss(delta: float, variant: str, threshold: float,
                     a0: float = XOR_A0, tau: float = XOR_TAU):
    """First time the analytic loss curve crosses below a threshold.

    Returns None when the curve never reaches it (degenerate drive or
    threshold below the asymptotic loss).
    """
    threshold = check_scalar(threshold, "threshold", minimum=0.0, strict_min=True)
    if threshold >= 0.5:
        return 0.0
    s, d = xor_gating_constants(delta, variant)
    if s == 0.0:
        return None
    if variant == "linear_gating":
        qa, qb, qc = 0.5 * delta**2, -delta, 0.5 - threshold
    else:
        qa, qb, qc = 2.0 * d, -4.0 * s, 0.5 - threshold
    disc = qb**2 - 4.0 * qa * qc
    if disc < 0:
        return None
    a_f = (-qb - np.sqrt(disc)) / (2.0 * qa)
    return time_to_mode_value(ModeParams(s, d, a0, tau), a_f)


def crossover_delta() -> float:
    """Margin at which the two gating structures learn equally fast.

    Solves delta/2 = sqrt(1/8 + delta^2/16), i.e. delta = sqrt(2/3).
    """
    return float(np.sqrt(2.0 / 3.0))


# ---------------------------------------------------------------------------
# Coupled contextual pathways
# ---------------------------------------------------------------------------


def coupling_coefficients(C: int):
    """Input and output overlaps between two distinct context pathways.

    Input overlap: the pathways share C-2 of their C-1 active contexts, so
    their cross input correlation is (C-2)/(C-1) of the self correlation.
    Output overlap: the residual structures of two pathways overlap by
    -1/(C-1) per mode, which is what makes the combined competition
    coefficient 1/(C-1) and the fixed point (C-1) * S / D.  Verified
    numerically on constructed datasets for C from 3 to 6.
    """
    C = check_int(C, "C", minimum=3)
    return (C - 2) / (C - 1), -1.0 / (C - 1)


def contextual_closed_form(C: int, s_alpha, d_alpha, b0, tau, t):
    """Exact mode trajectory of C symmetric pathways coupled on a residual.

    Solves tau dB/dt = 2B (S - B D / (C-1)): a sigmoid from b0 to the lifted
    fixed point (C-1) S / D, rising at the same rate 2S/tau as an isolated
    pathway.
    """
    C = check_int(C, "C", minimum=3)
    s = check_scalar(s_alpha, "s_alpha", minimum=0.0)
    d = check_scalar(d_alpha, "d_alpha", minimum=0.0, strict_min=True)
    b0 = check_scalar(b0, "b0", minimum=0.0, strict_min=True)
    tau = check_scalar(tau, "tau", minimum=0.0, strict_min=True)
    t = np.asarray(t, dtype=float)
    if s == 0.0:
        return np.broadcast_to(b0, t.shape).copy() if t.shape else float(b0)
    plateau = (C - 1) * s / d
    expo = np.exp(-2.0 * s * t / tau)
    return plateau / (1.0 - (1.0 - plateau / b0) * expo)


@dataclass
class RaceSystem:
    """Coupled per-mode competition between pathways sharing an output.

    sources: (P, M) driving singular values S(p) per pathway and mode.
    variances: (P, P, M) input variances D(j, p) along the shared modes.
    overlaps: (P, P) output singular-vector overlaps; diagonal is 1.
    b0: (P, M) initial pathway mode strengths.
    """

    sources: np.ndarray
    variances: np.ndarray
    overlaps: np.ndarray
    b0: np.ndarray

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, dtype=float))
        self.b0 = np.atleast_2d(np.asarray(self.b0, dtype=float))
        self.overlaps = np.asarray(self.overlaps, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        p, m = self.sources.shape
        if self.variances.shape != (p, p, m):
            raise InvalidParameterError(
                f"variances must have shape {(p, p, m)}, got {self.variances.shape}"
            )
        if self.overlaps.shape != (p, p):
            raise InvalidParameterError(f"overlaps must be {p}x{p}")
        if np.abs(self.overlaps).max() > 1 + 1e-9:
            raise InvalidParameterError("overlap entries must lie in [-1, 1]")


def race_reduction_integrate(system: RaceSystem, tau: float, dt: float, steps: int):
    """Explicit-Euler integration of the balanced mode-competition reduction.

    Under the balanced two-layer ansatz each pathway strength obeys
    tau dB_p/dt = 2 B_p [S_p - sum_j O_pj B_j D_jp]; the integrator emits the
    trajectory (steps+1, P, M) including the initial state.
    """
    tau = check_scalar(tau, "tau", minimum=0.0, strict_min=True)
    dt = check_scalar(dt, "dt", minimum=0.0, strict_min=True)
    steps = check_int(steps, "steps", minimum=1)
    smax = float(np.max(system.sources)) if system.sources.size else 0.0
    if smax > 0 and dt > tau / (10.0 * smax):
        raise InvalidParameterError(
            f"dt={dt:g} exceeds the stability guard tau/(10 max S)={tau / (10 * smax):g}"
        )
    b = system.b0.copy()
    out = np.empty((steps + 1,) + b.shape)
    out[0] = b
    for step in range(1, steps + 1):
        inhibition = np.einsum("jp,jpm->pm", system.overlaps.T * 1.0,
                               system.variances * b[:, None, :])
        db = 2.0 * b * (system.sources - inhibition)
        b = b + (dt / tau) * db
        if not np.isfinite(b).all():
            raise DivergenceError("race reduction diverged", step)
        out[step] = b
    return out


# ---------------------------------------------------------------------------
# Dataset mode spectra for the contextual tasks
# ---------------------------------------------------------------------------


@dataclass
class ModeSpectrum:
    """Mode basis and dynamics constants of one pathway family.

    u/vt span the input-output correlation; s are its singular values and d
    the input variances along vt.  ``plateau`` is the asymptotic strength of
    each mode under the family's dynamics.
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    d: np.ndarray
    plateau: np.ndarray

    def groups(self, tol=1e-9):
        """Slices of modes with equal (degenerate) singular values."""
        gs, start = [], 0
        for i in range(1, len(self.s) + 1):
            if i == len(self.s) or abs(self.s[i] - self.s[start]) > tol * max(self.s[start], 1.0):
                gs.append(slice(start, i))
                start = i
        return gs


def common_pathway_modes(dataset: Dataset) -> ModeSpectrum:
    """Mode spectrum of the always-on pathway over the full dataset."""
    stats = correlation_stats(dataset)
    u, s, vt = stats.svd_yx
    d = stats.mode_input_variances
    return ModeSpectrum(u=u, s=s, vt=vt, d=d, plateau=s / d)


def common_pathway_residual(dataset: Dataset, common_stats: CorrelationPair | None = None):
    """Targets left after the always-on pathway converges.

    Subtracts U (S/D) Vt X over modes with nonzero input variance; modes with
    zero variance are skipped rather than inverted.
    """
    if common_stats is None:
        common_stats = correlation_stats(dataset)
    u, s, vt = common_stats.svd_yx
    d = common_stats.mode_input_variances
    active = d > 1e-12 * max(d.max(), 1.0)
    gains = np.where(active, s / np.where(active, d, 1.0), 0.0)
    w_inf = (u * gains) @ vt
    return dataset.targets - w_inf @ dataset.inputs


def contextual_pathway_modes(dataset: Dataset, arity: int | None = None,
                             pathway: int = 0) -> ModeSpectrum:
    """Mode spectrum of one context pathway trained on the common residual.

    The pathway reads item features only and is gated per
    :func:`gdln.graphs.contextual_gates`.  For arity C-1 the plateau is the
    coupled fixed point (C-1) S / D; for arity 1 pathways are uncoupled and
    the plateau is S / D.
    """
    from .graphs import contextual_gates

    c = dataset.n_contexts
    if arity is None:
        arity = c - 1
    residual = common_pathway_residual(dataset)
    gate = contextual_gates(dataset, arity)[pathway]
    items = dataset.item_feature_rows()
    n = dataset.n_datapoints
    x = dataset.inputs[items]
    syx = (residual * gate) @ x.T / n
    sx = (x * gate) @ x.T / n
    u, s, vt = np.linalg.svd(syx, full_matrices=False)
    keep = s > max(1e-12, 1e-9 * (s[0] if s.size else 0.0))
    u, s, vt = u[:, keep], s[keep], vt[keep]
    d = np.einsum("ai,ij,aj->a", vt, sx, vt)
    lift = (c - 1) if arity == c - 1 else 1.0
    return ModeSpectrum(u=u, s=s, vt=vt, d=d, plateau=lift * s / d)


def contextual_race_system(dataset: Dataset, b0, arity: int | None = None) -> RaceSystem:
    """Mode-competition system of the C context pathways on the residual.

    Overlaps and cross variances are measured numerically from the gated
    statistics, so the system is exact for the symmetric presets and a
    mode-paired approximation otherwise.
    """
    from .graphs import contextual_gates

    c = dataset.n_contexts
    if arity is None:
        arity = c - 1
    residual = common_pathway_residual(dataset)
    gates = contextual_gates(dataset, arity)
    items = dataset.item_feature_rows()
    x = dataset.inputs[items]
    n = dataset.n_datapoints

    ref = contextual_pathway_modes(dataset, arity=arity, pathway=0)
    m = len(ref.s)
    us = []
    for p in range(c):
        syx = (residual * gates[p]) @ x.T / n
        u = syx @ ref.vt.T / ref.s
        us.append(u / np.linalg.norm(u, axis=0, keepdims=True))
    sources = np.tile(ref.s, (c, 1))
    variances = np.empty((c, c, m))
    overlaps = np.empty((c, c))
    for j in range(c):
        for p in range(c):
            sx = (x * (gates[j] * gates[p])) @ x.T / n
            variances[j, p] = np.einsum("ai,ij,aj->a", ref.vt, sx, ref.vt)
            ov = np.diag(us[j].T @ us[p])
            overlaps[j, p] = float(np.mean(ov))
    b0 = np.asarray(b0, dtype=float)
    if b0.ndim == 0:
        b0 = np.full((c, m), float(b0))
    elif b0.ndim == 1:
        b0 = np.tile(b0, (c, 1))
    return RaceSystem(sources=sources, variances=variances, overlaps=overlaps, b0=b0)
