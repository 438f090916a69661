"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error.  All
commands taking --seed are reproducible end to end: identical flags write
identical output files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

from .detections import SyntheticConfig, generate_synthetic, load_scenes, save_scenes, split_dataset
from .errors import SceneGnnError
from .experiments import (
    ablation_class_count,
    ablation_rows,
    benchmark,
    benchmark_rows,
    sweep_beta,
    sweep_rows,
)
from .gnn_models import EDGE_WEIGHT_MODES, VARIANTS, ModelConfig
from .graph_builder import build_graph, graph_to_dict
from .training import (
    Metrics,
    TrainConfig,
    evaluate,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    train,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_model_flags(p):
    p.add_argument("--beta", type=float, default=0.1, help="distance ratio for edge construction")
    p.add_argument("--edge-weights", choices=EDGE_WEIGHT_MODES, default="expneg")
    p.add_argument("--hidden", type=int, default=None, help="hidden width (default per variant)")
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--vocab-size", type=int, default=80)


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--wd", type=float, default=5e-4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        variant=args.model,
        vocab_size=args.vocab_size,
        num_layers=args.layers,
        hidden_dim=args.hidden,
        edge_weight_mode=args.edge_weights,
        beta=args.beta,
    )


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.wd,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        optimizer=args.optimizer,
    )


def _emit_rows(rows, fmt: str, out_path):
    if fmt == "json":
        header, body = rows[0], rows[1:]
        payload = [dict(zip(header, row)) for row in body]
        text = json.dumps(payload, indent=2) + "\n"
    else:
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows(rows)
        text = buf.getvalue()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _metrics_rows(metrics: Metrics) -> list[list]:
    indoor, outdoor = metrics.per_class_accuracy
    return [
        ["metric", "value"],
        ["accuracy", metrics.accuracy],
        ["indoor_accuracy", "" if indoor is None else indoor],
        ["outdoor_accuracy", "" if outdoor is None else outdoor],
        ["mean_loss", metrics.mean_loss],
        ["samples", metrics.sample_count],
        ["confusion_indoor_as_indoor", metrics.confusion[0][0]],
        ["confusion_indoor_as_outdoor", metrics.confusion[0][1]],
        ["confusion_outdoor_as_indoor", metrics.confusion[1][0]],
        ["confusion_outdoor_as_outdoor", metrics.confusion[1][1]],
    ]


# --- subcommand handlers ---

def _cmd_gen_synth(args) -> int:
    cfg = SyntheticConfig(n_scenes=args.n_scenes, vocab_size=args.vocab_size, seed=args.seed)
    scenes = generate_synthetic(cfg)
    save_scenes(scenes, args.out)
    print(f"wrote {len(scenes)} scenes to {args.out}")
    return 0


def _cmd_train(args) -> int:
    train_scenes = load_scenes(args.data)
    val_scenes = load_scenes(args.val) if args.val else []
    checkpoint = train(train_scenes, val_scenes, _model_config(args), _train_config(args))
    save_checkpoint(checkpoint, args.out)
    for entry in checkpoint.history:
        line = f"epoch {entry['epoch']}: train_loss={entry['train_loss']:.4f} train_acc={entry['train_accuracy']:.4f}"
        if entry["val_accuracy"] is not None:
            line += f" val_loss={entry['val_loss']:.4f} val_acc={entry['val_accuracy']:.4f}"
        print(line)
    print(f"saved checkpoint to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.model)
    scenes = load_scenes(args.data)
    metrics = evaluate(checkpoint, scenes)
    _emit_rows(_metrics_rows(metrics), args.format, args.out)
    return 0


def _cmd_classify(args) -> int:
    checkpoint = load_checkpoint(args.model)
    scenes = load_scenes(args.data)
    model = model_from_checkpoint(checkpoint)
    cfg = checkpoint.model_config
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["scene_id", "indoor_logprob", "outdoor_logprob", "predicted"])
    for scene in scenes:
        graph = build_graph(scene, beta=cfg.beta, vocab_size=cfg.vocab_size)
        log_probs = model.forward(graph).values[0]
        predicted = "indoor" if log_probs[0] >= log_probs[1] else "outdoor"
        writer.writerow([scene.scene_id, log_probs[0], log_probs[1], predicted])
    return 0


def _cmd_sweep_beta(args) -> int:
    scenes = load_scenes(args.data)
    splits = split_dataset(scenes, seed=args.seed)
    betas = [float(b) for b in args.betas.split(",") if b.strip()]
    result = sweep_beta(_model_config(args), _train_config(args), splits, betas)
    rows = sweep_rows(result)
    rows.append(["best_beta", result.best_beta])
    _emit_rows(rows, args.format, args.out)
    return 0


def _cmd_ablate(args) -> int:
    checkpoint = load_checkpoint(args.model)
    scenes = load_scenes(args.data)
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    entries = ablation_class_count(checkpoint, scenes, ks, exact=args.exact)
    _emit_rows(ablation_rows(entries), args.format, args.out)
    for e in entries:
        if e.metrics is None:
            print(f"note: no scenes with {'exactly' if args.exact else 'at least'} {e.k} distinct labels", file=sys.stderr)
    return 0


def _cmd_bench(args) -> int:
    checkpoints = [load_checkpoint(p) for p in args.models.split(",") if p.strip()]
    scenes = load_scenes(args.data)
    report = benchmark(
        checkpoints,
        scenes,
        warmup_passes=args.warmup,
        timed_passes=args.passes,
        include_graph_build=args.time_full_pipeline,
    )
    _emit_rows(benchmark_rows(report), args.format, args.out)
    return 0


def _cmd_dump_graph(args) -> int:
    scenes = load_scenes(args.data)
    if not 0 <= args.index < len(scenes):
        raise SceneGnnError(f"--index {args.index} out of range for {len(scenes)} scenes")
    graph = build_graph(scenes[args.index], beta=args.beta, vocab_size=args.vocab_size)
    text = json.dumps(graph_to_dict(graph), indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="scenegnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic scene file")
    p.add_argument("--out", required=True)
    p.add_argument("--n-scenes", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=80)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--model", choices=VARIANTS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled scene file")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("classify", help="classify scenes (labels optional), CSV to stdout")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("sweep-beta", help="retrain across distance ratios")
    p.add_argument("--data", required=True, help="labeled scene file, split 8:1:1 by --seed")
    p.add_argument("--model", choices=VARIANTS, required=True)
    p.add_argument("--betas", default="0,0.05,0.1,0.2,0.5,1.0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_sweep_beta)

    p = sub.add_parser("ablate", help="accuracy vs number of distinct labels per scene")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", required=True)
    p.add_argument("--ks", default="3,4,5,6")
    p.add_argument("--exact", action="store_true", help="bin scenes with exactly k labels instead of at least k")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("bench", help="parameter count, inference time, accuracy per checkpoint")
    p.add_argument("--models", required=True, help="comma-separated checkpoint paths")
    p.add_argument("--data", required=True)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--passes", type=int, default=100)
    p.add_argument("--time-full-pipeline", action="store_true", help="time graph construction + forward")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("dump-graph", help="dump one scene's graph as JSON for debugging")
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--vocab-size", type=int, default=80)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_dump_graph)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (SceneGnnError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
