"""End-to-end pipelines that regenerate the headline experiment data.

Each pipeline writes a self-contained bundle directory: a config snapshot,
the plotted series as CSV files in the shared trajectory schema, and a
summary.json with the headline quantities.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from . import analytic
from .datasets import build_xor_margin
from .ensembles import depth2_gated_ensemble, relu_ensemble
from .gatefinder import (
    BinaryPatternKMeans,
    build_reln,
    collect_samples,
    elbow_scan,
    same_gating,
)
from .graphs import contextual_gates, contextual_graph
from .imitation import fit_imitation
from .network import GatedLinearNet
from .presets import get_preset
from .relu import ReluNet
from .serialize import write_report
from .trajectory import (
    Trajectory,
    count_plateaus,
    l2_curve_distance,
    select_stereotypical_run,
)


def _bundle_dir(out, name):
    path = Path(out) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _snapshot_config(path, config, extra=None):
    doc = dataclasses.asdict(config) if dataclasses.is_dataclass(config) else dict(config)
    if extra:
        doc.update(extra)
    write_report(path / "config.json", doc)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_trajectories(path, trajectories):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "source", "run_id"])
        for t in trajectories:
            for e, l in zip(t.epochs, t.loss):
                writer.writerow([f"{e:g}", f"{l:.10g}", t.source, t.run_id])


def _relu_time_to_criterion(delta, threshold, seeds, config):
    times = []
    for seed in seeds:
        ds = build_xor_margin(delta)
        net = ReluNet(
            hidden_widths=config.relu_hidden,
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            init_scale=config.init_scale,
            rate_convention=config.rate_convention,
            record_every=1,
            seed=seed,
        ).fit(ds)
        times.append(net.trajectory_.time_to_criterion(threshold))
    finite = [t for t in times if t is not None]
    return float(np.median(finite)) if finite else None


def _analytic_fastest_time(delta, threshold):
    times = [
        analytic.xor_time_to_loss(delta, variant, threshold)
        for variant in ("linear_gating", "xor_gating")
    ]
    finite = [t for t in times if t is not None]
    return min(finite) if finite else None


def reproduce_fig2(out="runs", threshold=0.2, deltas=None, seeds=(0, 1, 2),
                   relu_deltas=(0.0, 0.4, 0.8165, 1.2)):
    """Margin sweep: analytic time-to-criterion curves, their kink, and
    rectifier simulations at spot-check margins."""
    config = get_preset("xor")
    path = _bundle_dir(out, "fig2")
    if deltas is None:
        deltas = np.round(np.arange(0.0, 1.5001, 0.1), 10)
    rows = []
    min_curve = []
    for d in deltas:
        t_lin = analytic.xor_time_to_loss(d, "linear_gating", threshold)
        t_xor = analytic.xor_time_to_loss(d, "xor_gating", threshold)
        t_min = _analytic_fastest_time(d, threshold)
        min_curve.append(t_min)
        rows.append([d, t_lin if t_lin is not None else "",
                     t_xor if t_xor is not None else "", t_min])
    _write_rows(path / "analytic_times.csv",
                ["delta", "time_linear_gating", "time_xor_gating", "time_fastest"], rows)

    finite = np.asarray(min_curve, dtype=float)
    kink_idx = 1 + int(np.argmax(np.abs(np.diff(finite, 2))))
    kink = float(deltas[kink_idx])

    spot = []
    for d in relu_deltas:
        t_relu = _relu_time_to_criterion(d, threshold, seeds, config)
        t_ana = _analytic_fastest_time(d, threshold)
        rel = abs(t_relu - t_ana) / t_ana if (t_relu is not None and t_ana) else None
        spot.append({"delta": d, "relu_median": t_relu, "analytic_fastest": t_ana,
                     "relative_error": rel})
    _write_rows(path / "relu_times.csv",
                ["delta", "relu_median", "analytic_fastest", "relative_error"],
                [[s["delta"], s["relu_median"], s["analytic_fastest"],
                  s["relative_error"]] for s in spot])

    curves = []
    tgrid = np.linspace(0, 200, 401)
    for d in (0.0, 0.4, 0.8165, 1.2):
        for variant in ("linear_gating", "xor_gating"):
            curves.append(Trajectory(
                epochs=tgrid, loss=analytic.xor_gdln_loss(d, tgrid, variant),
                source="analytic", run_id=f"{variant}_d{d:g}",
            ))
    _write_trajectories(path / "analytic_losses.csv", curves)

    summary = {
        "crossover_delta": analytic.crossover_delta(),
        "empirical_kink": kink,
        "kink_within_tolerance": bool(abs(kink - analytic.crossover_delta()) <= 0.1),
        "spot_checks": spot,
        "max_relative_error": max(s["relative_error"] for s in spot),
    }
    _snapshot_config(path, config, {"threshold": threshold, "seeds": list(seeds)})
    write_report(path / "summary.json", summary)
    return summary


def run_context3_equivalence(seed=0, snapshot_epochs=(2000, 5000, 8000)):
    """Shared machinery for the 3-context equivalence experiment.

    Trains the 700-unit rectifier net, fits its calibrated gated imitation,
    and trains the single-context control at face-value initialization.
    """
    config = get_preset("context3")
    ds = config.build_dataset()
    dense = tuple(range(250, config.epochs + 1, 250))
    relu = ReluNet(
        hidden_widths=config.relu_hidden, learning_rate=config.learning_rate,
        epochs=config.epochs, init_scale=config.init_scale, seed=seed,
        record_every=config.record_every,
        snapshot_epochs=tuple(sorted(set(dense) | set(snapshot_epochs))),
    ).fit(ds)
    reln = fit_imitation(ds, relu, hidden_width=config.gdln_hidden,
                         snapshot_epochs=snapshot_epochs, seed=seed)
    graph1, gates1 = contextual_graph(ds, arity=1, hidden_width=config.gdln_hidden)
    single = GatedLinearNet(
        graph1, gates1, learning_rate=config.learning_rate, epochs=config.epochs,
        init_scale=config.init_scale, seed=seed, record_every=config.record_every,
    ).fit(ds)
    return ds, relu, reln, single


def reproduce_fig4(out="runs", seed=0):
    """3-context equivalence: loss curves, output agreement, and the
    mode-competition trajectories of the residual system."""
    path = _bundle_dir(out, "fig4")
    snapshot_epochs = (2000, 5000, 8000)
    ds, relu, reln, single = run_context3_equivalence(seed, snapshot_epochs)

    d_reln = l2_curve_distance(reln.trajectory_, relu.trajectory_)
    d_single = l2_curve_distance(single.trajectory_, relu.trajectory_)
    agreement = {
        str(e): float(np.abs(reln.snapshots_[e] - relu.snapshots_[e]["outputs"]).max())
        for e in snapshot_epochs
    }
    _write_trajectories(path / "losses.csv",
                        [relu.trajectory_, reln.trajectory_, single.trajectory_])

    # residual-system mode competition via the reduction integrator
    cfg = get_preset("context3")
    tau = 1.0 / (ds.n_datapoints * cfg.learning_rate)
    system = analytic.contextual_race_system(ds, b0=1e-6)
    race = analytic.race_reduction_integrate(system, tau=tau, dt=1.0, steps=cfg.epochs)
    header = ["epoch"] + [f"path0_mode{a}" for a in range(race.shape[2])]
    _write_rows(path / "race_modes.csv", header,
                [[t, *race[t, 0]] for t in range(0, race.shape[0], 50)])

    # raw latent representations for external embedding analysis
    np.savetxt(path / "latents_relu.csv", relu.export_latents(ds), delimiter=",")

    summary = {
        "distance_reln": d_reln,
        "distance_single_control": d_single,
        "distance_ratio": d_single / d_reln,
        "output_agreement_max": agreement,
        "final_losses": {
            "relu": relu.trajectory_.final_loss,
            "reln": reln.trajectory_.final_loss,
            "single": single.trajectory_.final_loss,
        },
    }
    _snapshot_config(path, cfg, {"seed": seed})
    write_report(path / "summary.json", summary)
    return summary


def staged_context_runs(contexts, seed=0):
    """Simulations of the systems the closed forms describe, with per-mode
    strength recording: the common pathway alone on the task, and the context
    pathways trained jointly on the common pathway's residual."""
    config = get_preset(f"context{contexts}")
    ds = config.build_dataset()
    common = analytic.common_pathway_modes(ds)
    ctx = analytic.contextual_pathway_modes(ds)
    residual = analytic.common_pathway_residual(ds)

    full = tuple(range(ds.n_features))
    from .graphs import pathway_graph

    graph_c, gates_c = pathway_graph(ds, [("common", full, np.ones(ds.n_datapoints))],
                                     config.gdln_hidden)
    net_c = GatedLinearNet(
        graph_c, gates_c, learning_rate=config.learning_rate, epochs=config.epochs,
        init_scale=config.init_scale, seed=seed, record_every=config.record_every,
        record_modes={0: (common.u, common.vt)},
    ).fit(ds)

    items = tuple(ds.item_feature_rows())
    specs = []
    bases = {}
    x_items = ds.inputs[items]
    for p, gate in enumerate(contextual_gates(ds, ds.n_contexts - 1)):
        specs.append((f"ctx{p}", items, gate))
        syx = (residual * gate) @ x_items.T / ds.n_datapoints
        u_p = syx @ ctx.vt.T / ctx.s
        u_p /= np.linalg.norm(u_p, axis=0, keepdims=True)
        bases[p] = (u_p, ctx.vt)
    graph_x, gates_x = pathway_graph(ds, specs, config.gdln_hidden)
    net_x = GatedLinearNet(
        graph_x, gates_x, learning_rate=config.learning_rate, epochs=config.epochs,
        init_scale=config.init_scale, seed=seed, record_every=config.record_every,
        record_modes=bases, targets=residual,
    ).fit(ds)
    return ds, config, common, ctx, net_c, net_x


def closed_form_mode_curves(spectrum, multiplier, b0, tau, epochs):
    """Closed-form strengths for each mode of a spectrum on an epoch grid."""
    t = np.asarray(epochs, dtype=float)
    out = np.empty((len(t), len(spectrum.s)))
    for a, (s, d, b) in enumerate(zip(spectrum.s, spectrum.d, np.atleast_1d(b0))):
        if multiplier == 1:
            out[:, a] = analytic.linear_mode_trajectory(
                analytic.ModeParams(s, d, b, tau), t)
        else:
            out[:, a] = analytic.contextual_closed_form(
                multiplier + 1, s, d, b, tau, t)
    return out


def calibrated_b0(sim_epochs, sim_modes, spectrum, multiplier, tau, fraction=0.1):
    """Per-mode initial strengths anchored where the simulation first crosses
    ``fraction`` of each mode's plateau; returns (b0, anchor_index) arrays."""
    plateau = multiplier * spectrum.s / spectrum.d
    b0 = np.empty_like(plateau)
    anchor = np.zeros(len(plateau), dtype=int)
    for a in range(len(plateau)):
        crossed = np.where(sim_modes[:, a] >= fraction * plateau[a])[0]
        i = int(crossed[0]) if crossed.size else len(sim_epochs) - 1
        anchor[a] = i
        t1 = sim_epochs[i]
        val = np.clip(sim_modes[i, a], plateau[a] * 1e-13, plateau[a] * (1 - 1e-9))
        b0[a] = plateau[a] / (1.0 + (plateau[a] / val - 1.0)
                              * np.exp(2.0 * spectrum.s[a] * t1 / tau))
    return b0, anchor


def reproduce_fig5(out="runs", contexts=(3, 4, 5), seed=0):
    """Closed-form vs simulated mode trajectories for the contextual family."""
    path = _bundle_dir(out, "fig5")
    summary = {}
    for c in contexts:
        ds, config, common, ctx, net_c, net_x = staged_context_runs(c, seed)
        tau = 1.0 / (ds.n_datapoints * config.learning_rate)
        epochs = net_c.trajectory_.epochs

        sim_common = net_c.trajectory_.modes
        b0c, anc_c = calibrated_b0(epochs, sim_common, common, 1, tau)
        pred_common = closed_form_mode_curves(common, 1, b0c, tau, epochs)

        n_modes = len(ctx.s)
        sim_ctx = net_x.trajectory_.modes[:, :n_modes]  # pathway 0
        b0x, anc_x = calibrated_b0(epochs, sim_ctx, ctx, c - 1, tau)
        pred_ctx = closed_form_mode_curves(ctx, c - 1, b0x, tau, epochs)

        def sup_err(pred, sim, plateau, anchors):
            errs = []
            for a in range(pred.shape[1]):
                m = np.arange(len(epochs)) >= anchors[a]
                errs.append(np.max(np.abs(pred[m, a] - sim[m, a])) / plateau[a])
            return errs

        err_common = sup_err(pred_common, sim_common, common.plateau, anc_c)
        err_ctx = sup_err(pred_ctx, sim_ctx, ctx.plateau, anc_x)
        summary[f"C{c}"] = {
            "max_common_deviation": float(np.max(err_common)),
            "max_context_deviation": float(np.max(err_ctx)),
            "fixed_points": (ctx.plateau).tolist(),
            "fixed_point_rule": f"(C-1) S / D with C={c}",
        }
        header = ["epoch"] + [f"common_mode{a}" for a in range(sim_common.shape[1])] \
                 + [f"common_pred{a}" for a in range(sim_common.shape[1])] \
                 + [f"ctx_mode{a}" for a in range(n_modes)] \
                 + [f"ctx_pred{a}" for a in range(n_modes)]
        rows = [[epochs[i], *sim_common[i], *pred_common[i], *sim_ctx[i], *pred_ctx[i]]
                for i in range(len(epochs))]
        _write_rows(path / f"modes_C{c}.csv", header, rows)
    write_report(path / "summary.json", summary)
    _snapshot_config(path, get_preset("context3"), {"contexts": list(contexts)})
    return summary


def reproduce_fig7(out="runs", n_runs=100, seed=0):
    """Depth ensembles: run-to-run variance, stereotypical curves, and
    first-layer activity statistics."""
    config = get_preset("depth2")
    ds = config.build_dataset()
    path = _bundle_dir(out, "fig7")
    res_r = relu_ensemble(
        ds, config.relu_hidden, config.learning_rate, config.epochs,
        config.init_scale, n_runs=n_runs, base_seed=seed,
        record_every=config.record_every,
    )
    res_g = depth2_gated_ensemble(
        ds, config.gdln_hidden, config.learning_rate, config.epochs,
        config.init_scale, n_runs=n_runs, base_seed=seed,
        record_every=config.record_every,
    )
    i_r = select_stereotypical_run(res_r.trajectories)
    i_g = select_stereotypical_run(res_g.trajectories)
    t_r, t_g = res_r.trajectories[i_r], res_g.trajectories[i_g]
    _write_trajectories(path / "relu_runs.csv", res_r.trajectories)
    _write_trajectories(path / "gdln_runs.csv", res_g.trajectories)
    summary = {
        "stereotypical_relu_run": int(i_r),
        "stereotypical_gdln_run": int(i_g),
        "plateaus_relu": count_plateaus(t_r),
        "plateaus_gdln": count_plateaus(t_g),
        "stereotypical_final_loss": {"relu": t_r.final_loss, "gdln": t_g.final_loss},
        "first_layer_always_active_mean": float(res_r.first_layer_always_active.mean()),
        "first_layer_always_active_per_run": res_r.first_layer_always_active.tolist(),
        "curve_distance_stereotypical": l2_curve_distance(t_r, t_g),
    }
    _snapshot_config(path, config, {"n_runs": n_runs, "seed": seed})
    write_report(path / "summary.json", summary)
    return summary


def reproduce_fig8(out="runs", num_trainings=5, seed=0, k_values=(2, 3, 4),
                   elbow_range=(1, 2, 3, 4, 5, 6)):
    """Gate recovery: centroid matrices per cluster count and the imitation
    error elbow."""
    config = get_preset("context3")
    ds = config.build_dataset()
    path = _bundle_dir(out, "fig8")
    relu_config = dict(
        hidden_widths=config.relu_hidden, learning_rate=config.learning_rate,
        epochs=config.epochs, init_scale=config.init_scale,
        record_every=config.record_every,
        snapshot_epochs=tuple(range(500, config.epochs + 1, 500)),
    )
    stack = collect_samples(ds, relu_config, num_trainings,
                            sample_every=config.sample_every, base_seed=seed)
    for k in k_values:
        km = BinaryPatternKMeans(n_clusters=k, seed=seed).fit(stack.patterns)
        np.savetxt(path / f"centroids_k{k}.csv", km.cluster_centers_, delimiter=",")
    reference = ReluNet(**{**relu_config, "seed": seed}).fit(ds)
    elbow = elbow_scan(ds, stack, elbow_range, reference,
                       hidden_per_pathway=config.gdln_hidden, seed=seed)
    _write_rows(path / "elbow.csv", ["k", "imitation_mse", "error"],
                [[r["k"], r["imitation_mse"], r["error"]] for r in elbow])

    km4 = BinaryPatternKMeans(n_clusters=4, seed=seed).fit(stack.patterns)
    _, gates4, _ = build_reln(ds, km4.cluster_centers_,
                              hidden_per_pathway=config.gdln_hidden)
    graph_ref, gates_ref = contextual_graph(ds, hidden_width=config.gdln_hidden)
    recovered = same_gating(
        [gates4.node_gates[n] for n in gates4.node_gates if n.endswith(":h")],
        [gates_ref.node_gates[n] for n in gates_ref.node_gates if n.endswith(":h")],
    )
    mses = {r["k"]: r["imitation_mse"] for r in elbow if r["imitation_mse"] is not None}
    drops = {}
    ks = sorted(mses)
    for a, b in zip(ks[:-1], ks[1:]):
        drops[f"{a}->{b}"] = mses[a] - mses[b]
    summary = {
        "elbow": elbow,
        "mse_drops": drops,
        "canonical_table_recovered_at_k4": bool(recovered),
    }
    _snapshot_config(path, config, {"num_trainings": num_trainings, "seed": seed})
    write_report(path / "summary.json", summary)
    return summary


FIGURES = {
    "fig2": reproduce_fig2,
    "fig4": reproduce_fig4,
    "fig5": reproduce_fig5,
    "fig7": reproduce_fig7,
    "fig8": reproduce_fig8,
}
