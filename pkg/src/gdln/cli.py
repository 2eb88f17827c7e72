"""Command-line front end.

Subcommands: dataset, run, reproduce, compare, find-gates, verify.  Exit
codes: 0 on success, 2 when a training run diverges, 3 when a verification
check fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analytic
from .datasets import save_dataset
from .errors import DivergenceError, GdlnError
from .gatefinder import BinaryPatternKMeans, binarize_centroids, collect_samples
from .graphs import build_reln_graph, contextual_graph
from .network import GatedLinearNet
from .presets import PRESET_NAMES, get_preset, load_config
from .relu import ReluNet
from .reproduce import FIGURES
from .serialize import write_report
from .trajectory import Trajectory, l2_curve_distance
from .verify import datapoint_removal_check, gradient_check, interlacing_check


def _add_common(parser):
    parser.add_argument("--config", help="key=value config file with [overrides]")
    parser.add_argument("--preset", choices=PRESET_NAMES, help="named preset")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="runs", help="output directory")
    parser.add_argument("--delta", type=float, default=1.0,
                        help="margin of the xor task (xor preset only)")


def _resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = get_preset(args.preset or "context3", delta=args.delta)
    if args.seed is not None:
        cfg = cfg.override(seed=args.seed)
    return cfg.override(out_dir=args.out)


def cmd_dataset(args):
    cfg = _resolve_config(args)
    ds = cfg.build_dataset()
    out = Path(cfg.out_dir) / ds.name
    save_dataset(ds, out)
    print(f"wrote {ds.n_features}x{ds.n_datapoints} inputs and "
          f"{ds.n_labels}x{ds.n_datapoints} targets to {out}")
    return 0


def cmd_run(args):
    cfg = _resolve_config(args)
    ds = cfg.build_dataset()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    kinds = args.model
    try:
        if "relu" in kinds:
            net = ReluNet(
                hidden_widths=cfg.relu_hidden, learning_rate=cfg.learning_rate,
                epochs=cfg.epochs, init_scale=cfg.init_scale, seed=cfg.seed,
                record_every=cfg.record_every, rate_convention=cfg.rate_convention,
            ).fit(ds)
            dest = out / f"{cfg.preset}_relu_seed{cfg.seed}.csv"
            net.trajectory_.to_csv(dest)
            written.append(dest)
        if "gdln" in kinds:
            if cfg.dataset_kind == "xor":
                graph, gates = build_reln_graph(ds, "xor_pointwise", cfg.gdln_hidden)
            elif cfg.depth2:
                graph, gates = build_reln_graph(ds, "depth2_contextual", cfg.gdln_hidden)
            else:
                graph, gates = contextual_graph(ds, arity=cfg.gdln_arity,
                                                hidden_width=cfg.gdln_hidden)
            net = GatedLinearNet(
                graph, gates, learning_rate=cfg.learning_rate, epochs=cfg.epochs,
                init_scale=cfg.init_scale, seed=cfg.seed,
                record_every=cfg.record_every, rate_convention=cfg.rate_convention,
            ).fit(ds)
            dest = out / f"{cfg.preset}_gdln_seed{cfg.seed}.csv"
            net.trajectory_.to_csv(dest)
            written.append(dest)
        if "analytic" in kinds:
            if cfg.dataset_kind != "xor":
                raise GdlnError("analytic curves are exported for the xor preset")
            tgrid = np.arange(0.0, cfg.epochs + 1.0)
            for variant in ("linear_gating", "xor_gating"):
                delta = cfg.dataset_args.get("delta", 1.0)
                traj = Trajectory(
                    epochs=tgrid,
                    loss=analytic.xor_gdln_loss(delta, tgrid, variant),
                    source="analytic", run_id=variant,
                )
                dest = out / f"{cfg.preset}_analytic_{variant}.csv"
                traj.to_csv(dest)
                written.append(dest)
    except DivergenceError as exc:
        print(f"diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return 2
    for dest in written:
        print(f"wrote {dest}")
    return 0


def cmd_reproduce(args):
    fn = FIGURES[args.figure]
    summary = fn(out=args.out)
    print(f"bundle written under {Path(args.out) / args.figure}")
    for key, value in summary.items():
        print(f"  {key}: {value}")
    return 0


def cmd_compare(args):
    a = Trajectory.from_csv(args.trajectory_a)
    b = Trajectory.from_csv(args.trajectory_b)
    if args.metric == "l2_sum":
        value = l2_curve_distance(a, b)
    elif args.metric == "final_loss":
        value = abs(a.final_loss - b.final_loss)
    else:
        threshold = float(args.metric.split(":", 1)[1])
        ta = a.time_to_criterion(threshold)
        tb = b.time_to_criterion(threshold)
        if ta is None or tb is None:
            print("not_reached")
            return 0
        value = abs(ta - tb)
    print(f"{value:.10g}")
    return 0


def cmd_find_gates(args):
    cfg = _resolve_config(args)
    ds = cfg.build_dataset()
    relu_config = dict(
        hidden_widths=cfg.relu_hidden, learning_rate=cfg.learning_rate,
        epochs=cfg.epochs, init_scale=cfg.init_scale, record_every=cfg.record_every,
    )
    stack = collect_samples(ds, relu_config, args.runs,
                            sample_every=cfg.sample_every, base_seed=cfg.seed)
    km = BinaryPatternKMeans(n_clusters=args.k, seed=cfg.seed).fit(stack.patterns)
    gates, consistency = binarize_centroids(km.cluster_centers_)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / f"centroids_k{args.k}.csv", km.cluster_centers_, delimiter=",")
    write_report(out / f"gates_k{args.k}.json", {
        "k": args.k,
        "gates": gates,
        "consistency": consistency,
        "cluster_sizes": np.bincount(km.labels_, minlength=args.k),
    })
    print(f"wrote centroids and binarized gates for k={args.k} to {out}")
    return 0


def cmd_verify(args):
    cfg = _resolve_config(args)
    ds = cfg.build_dataset()
    report = {}
    ok = True

    rng = np.random.default_rng(cfg.seed)
    fails = 0
    for _ in range(args.trials):
        m = rng.normal(size=(8, 12))
        rows = np.sort(rng.choice(8, size=rng.integers(1, 8), replace=False))
        cols = np.sort(rng.choice(12, size=rng.integers(1, 12), replace=False))
        if not interlacing_check(m, rows, cols).holds:
            fails += 1
    report["interlacing_random_failures"] = fails
    ok &= fails == 0

    if cfg.dataset_kind == "contextual":
        removal = datapoint_removal_check(ds)
        report["datapoint_removal_monotone"] = removal
        ok &= removal

    if cfg.dataset_kind == "xor":
        graph, gates = build_reln_graph(ds, "xor_pointwise", hidden_width=16)
    else:
        graph, gates = contextual_graph(ds, hidden_width=12)
    err = gradient_check(graph, gates, ds, n_points=3, seed=cfg.seed)
    report["gradient_max_relative_error"] = err
    ok &= err < 1e-5

    write_report(Path(cfg.out_dir) / "verify_report.json", report)
    for key, value in report.items():
        print(f"{key}: {value}")
    return 0 if ok else 3


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gdln",
        description="gated deep linear network laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="build and export a benchmark dataset")
    _add_common(p)
    p.set_defaults(fn=cmd_dataset)

    p = sub.add_parser("run", help="train models and export trajectories")
    _add_common(p)
    p.add_argument("--model", nargs="+", default=["relu"],
                   choices=["relu", "gdln", "analytic"])
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("reproduce", help="regenerate a figure data bundle")
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--out", default="runs")
    p.set_defaults(fn=cmd_reproduce)

    p = sub.add_parser("compare", help="compare two trajectory CSV files")
    p.add_argument("trajectory_a")
    p.add_argument("trajectory_b")
    p.add_argument("--metric", default="l2_sum",
                   help="l2_sum, final_loss, or time_to:<threshold>")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("find-gates", help="recover gating patterns by clustering")
    _add_common(p)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--k", type=int, default=4)
    p.set_defaults(fn=cmd_find_gates)

    p = sub.add_parser("verify", help="run numeric structure checks")
    _add_common(p)
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except DivergenceError as exc:
        print(f"diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        return 2
    except GdlnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
