"""Batch pipeline driver: data generation, training, tracing, pruning search,
sensitivity sweeps, evaluation and CSV reporting."""

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, dependency, distill, fixtures, pruning, search, serial
from .config import REWARD_PRESETS, search_config_from_dict
from .errors import ConfigError, DataError, RLPruneError
from .graph import count_flops, count_params, deep_clone, validate_graph
from .search import evaluate_accuracy


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _write_history_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(search.HISTORY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in search.HISTORY_COLUMNS])


def _load_model(path):
    return serial.load(path)


def _channel_sparsity(model):
    """1 - live/original prunable channels, recomputed from the model name-
    independent structure is not possible; callers pass original count."""
    dg = dependency.build(model)
    return sum(g.channels for g in dg.groups.groups)


# ------------------------------------------------------------- subcommands


def cmd_gen_data(args):
    dataio.generate_dataset(args.out, classes=args.classes, train=args.samples,
                            reward=args.reward_samples, test=args.test_samples,
                            seed=args.seed)
    print(f"wrote dataset to {args.out} (classes={args.classes}, "
          f"train={args.samples}, reward={args.reward_samples}, "
          f"test={args.test_samples})")
    return 0


def cmd_train(args):
    ds = dataio.load_dataset(args.data)
    if args.model:
        model = _load_model(args.model)
    else:
        model = fixtures.make_fixture(args.fixture, classes=ds.classes,
                                      seed=args.seed)
    report = validate_graph(model)
    if not report.ok:
        raise DataError("; ".join(report.errors))
    decay_at = tuple(int(args.epochs * f) for f in (0.5, 0.75))
    distill.train_baseline(model, ds.train_x, ds.train_y, args.epochs,
                           lr=args.lr, momentum=0.9, batch_size=args.batch_size,
                           seed=args.seed, lr_decay_epochs=decay_at,
                           augment_flip=args.augment,
                           log=lambda m: print(m, flush=True))
    acc = evaluate_accuracy(model, ds.test_x, ds.test_y)
    serial.save(model, args.out)
    print(f"test accuracy {acc:.4f}; saved {args.out}.rlpm.json/.bin")
    return 0


def cmd_trace(args):
    model = _load_model(args.model)
    dg = dependency.build(model, seed=args.seed)
    report = dependency.format_report(dg, model)
    if args.out:
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    return 0


def _search_config(args, ds):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"bad config file {args.config}: {e}") from None
    overrides = {
        "target_sparsity": args.sparsity, "steps": args.steps,
        "epsilon0": args.epsilon0, "decay": args.decay, "seed": args.seed,
        "threads": args.threads, "stages_per_step": args.stages,
        "samples_per_stage": args.samples_per_stage,
        "calib_size": args.calib_size, "reward_eval_size": args.reward_eval_size,
        "post_train_every": args.post_train_every,
        "rollout_depth": args.rollout_depth,
    }
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    reward = dict(data.get("reward") or {})
    if args.reward is not None:
        reward = dict(zip(("alpha", "beta"), REWARD_PRESETS[args.reward]))
    if args.alpha is not None:
        reward["alpha"] = args.alpha
    if args.beta is not None:
        reward["beta"] = args.beta
    if reward:
        data["reward"] = reward
    if args.tau is not None or args.post_train_epochs is not None:
        d = dict(data.get("distill") or {})
        if args.tau is not None:
            d["tau"] = args.tau
        if args.post_train_epochs is not None:
            d["epochs"] = args.post_train_epochs
        data["distill"] = d
    return search_config_from_dict(data)


def cmd_prune(args):
    ds = dataio.load_dataset(args.data)
    base = _load_model(args.model)
    cfg = _search_config(args, ds)
    t0 = time.perf_counter()
    model = deep_clone(base)
    acc_before = evaluate_accuracy(base, ds.test_x, ds.test_y)
    orig_live = _channel_sparsity(base)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = (lambda m: print(m, flush=True)) if not args.quiet else None
    try:
        if args.uniform:
            model, result = search.run_uniform_pruning(model, ds, cfg, log=log)
        else:
            model, result = search.run_pruning_search(model, ds, cfg, log=log)
    except RLPruneError:
        serial.save(model, out_dir / f"{base.name}-partial")
        raise
    acc_after = evaluate_accuracy(model, ds.test_x, ds.test_y)
    live = _channel_sparsity(model)
    model.name = f"{base.name}-pruned"
    stem = out_dir / model.name
    serial.save(model, stem)
    _write_history_csv(out_dir / "history.csv", result["history"])
    summary = {
        "accuracy_before": acc_before,
        "accuracy_after": acc_after,
        "flops_ratio": 1.0 - count_flops(model)[1] / count_flops(base)[1],
        "params_ratio": 1.0 - count_params(model)[1] / count_params(base)[1],
        "channel_sparsity": 1.0 - live / orig_live,
        "channels_removed": result["removed"],
        "channels_target": result["target_removed"],
        "budget_shortfall": result["shortfall"],
        "seed": cfg.seed,
        "reward": {"alpha": cfg.reward.alpha, "beta": cfg.reward.beta},
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    # wall time kept out of summary.json so equal-seed runs stay byte-identical
    (out_dir / "timing.json").write_text(
        json.dumps({"wall_time_s": time.perf_counter() - t0}) + "\n")
    print(f"pruned model: {stem}.rlpm.json  accuracy {acc_before:.4f} -> "
          f"{acc_after:.4f}  sparsity {summary['channel_sparsity']:.3f}")
    return 0


def cmd_sensitivity(args):
    if not 0.0 < args.fraction < 1.0:
        raise ConfigError("--fraction must be in (0,1)")
    ds = dataio.load_dataset(args.data)
    base = _load_model(args.model)
    rng = np.random.default_rng(args.seed)
    idx = rng.choice(len(ds.train_x), size=min(args.calib_size or 100,
                                               len(ds.train_x)), replace=False)
    calib = pruning.CalibrationSet(ds.train_x[idx], ds.train_y[idx])

    model = deep_clone(base)
    dg = dependency.build(model)
    if args.baseline > 0:
        scores = pruning.taylor_scores(model, calib, dg.groups)
        for g in dg.groups.groups:
            k = min(math.ceil(args.baseline * g.channels), g.channels - 1)
            if k > 0:
                pruning.apply_pruning(model, dg, g.id,
                                      pruning.least_important(scores, g.id, k))
        dg = dependency.build(model)
    base_err = 1.0 - evaluate_accuracy(model, ds.test_x, ds.test_y)

    rows = []
    scores = pruning.taylor_scores(model, calib, dg.groups)
    for g in dg.groups.groups:
        k = math.ceil(args.fraction * g.channels)
        names = ";".join(model.node(m).label() for m in g.members)
        if k >= g.channels:
            rows.append((g.id, names, "skipped", ""))
            continue
        if k == 0:
            rows.append((g.id, names, _fmt(0.0), _fmt(base_err)))
            continue
        clone = deep_clone(model)
        cdg = dependency.build(clone)
        pruning.apply_pruning(clone, cdg, g.id,
                              pruning.least_important(scores, g.id, k))
        err = 1.0 - evaluate_accuracy(clone, ds.test_x, ds.test_y)
        rows.append((g.id, names, _fmt(err - base_err), _fmt(err)))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["group_id", "layers", "error_increase", "error"])
        w.writerows(rows)
    print(f"wrote {args.out} (baseline error {base_err:.4f}, "
          f"fraction {args.fraction})")
    return 0


def cmd_eval(args):
    model = _load_model(args.model)
    ds = dataio.load_dataset(args.data)
    if model.class_count != ds.classes:
        raise DataError(f"model has {model.class_count} classes, dataset "
                        f"{ds.classes}")
    acc = evaluate_accuracy(model, ds.test_x, ds.test_y)
    flops = count_flops(model)[1]
    params = count_params(model)[1]
    out = {"accuracy": acc, "flops": flops, "params": params}
    if args.base:
        base = _load_model(args.base)
        out["flops_ratio"] = 1.0 - flops / count_flops(base)[1]
        out["params_ratio"] = 1.0 - params / count_params(base)[1]
    for k, v in out.items():
        print(f"{k}: {_fmt(v)}")
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_report(args):
    path = Path(args.history)
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != list(search.HISTORY_COLUMNS):
                raise DataError(f"{path}:1: unexpected columns {reader.fieldnames}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append({
                        "step": int(row["step"]),
                        "group_id": int(row["group_id"]),
                        "group_sparsity": float(row["group_sparsity"]),
                        "reward": float(row["reward"]),
                        "accuracy": float(row["accuracy"]),
                        "flops_ratio": float(row["flops_ratio"]),
                        "params_ratio": float(row["params_ratio"]),
                    })
                except (KeyError, TypeError, ValueError) as e:
                    raise DataError(f"{path}:{lineno}: bad row: {e}") from None
    except OSError as e:
        raise DataError(str(e)) from None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sparsity_trajectories.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "group_id", "group_sparsity"])
        for r in rows:
            w.writerow([r["step"], r["group_id"], _fmt(r["group_sparsity"])])
    steps = sorted({r["step"] for r in rows})
    with open(out_dir / "reward_vs_step.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "reward", "accuracy", "flops_ratio", "params_ratio"])
        for s in steps:
            r = next(r for r in rows if r["step"] == s)
            w.writerow([s] + [_fmt(r[k]) for k in
                              ("reward", "accuracy", "flops_ratio", "params_ratio")])
    print(f"wrote {out_dir}/sparsity_trajectories.csv and reward_vs_step.csv")
    return 0


# ------------------------------------------------------------------ parser


def _add_common(p):
    p.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="rlprune")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the procedural shapes dataset")
    p.add_argument("out")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--samples", type=int, default=4000, help="train sample count")
    p.add_argument("--reward-samples", type=int, default=1000)
    p.add_argument("--test-samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a dense baseline model")
    p.add_argument("--data", required=True)
    p.add_argument("--fixture", default="vgg-mini",
                   choices=sorted(fixtures.FIXTURES))
    p.add_argument("--model", default=None, help="resume from an rlpm file")
    p.add_argument("--out", required=True, help="output model stem")
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("trace", help="dependency graph and coupled groups")
    p.add_argument("model")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("prune", help="run the pruning search")
    p.add_argument("model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--sparsity", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--reward", choices=("accuracy", "flops", "params"),
                   default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--epsilon0", type=float, default=None)
    p.add_argument("--decay", choices=("constant", "linear", "cosine"),
                   default=None)
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("RLPRUNE_THREADS", 0)) or None)
    p.add_argument("--stages", type=int, default=None)
    p.add_argument("--samples-per-stage", type=int, default=None)
    p.add_argument("--calib-size", type=int, default=None)
    p.add_argument("--reward-eval-size", type=int, default=None)
    p.add_argument("--post-train-every", type=int, default=None)
    p.add_argument("--post-train-epochs", type=int, default=None)
    p.add_argument("--rollout-depth", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--uniform", action="store_true",
                   help="uniform allocation baseline (no search)")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("sensitivity", help="per-group error-increase sweep")
    p.add_argument("model")
    p.add_argument("--data", required=True)
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--baseline", type=float, default=0.0,
                   help="uniform pre-pruning fraction (0 = dense baseline)")
    p.add_argument("--out", required=True)
    p.add_argument("--calib-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("eval", help="accuracy / FLOPs / parameter metrics")
    p.add_argument("model")
    p.add_argument("--data", required=True)
    p.add_argument("--base", default=None, help="base model for C_F / C_P")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="plot-ready CSVs from a history file")
    p.add_argument("history")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RLPruneError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
