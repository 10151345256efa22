"""Command-line entry point.

Subcommands: gen-synth, train, eval, metrics, sweep, gradcheck. Every run
writes a manifest next to its outputs; all randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime

import numpy as np

from . import __version__
from .data_io import (
    EMB_MAGIC,
    IMG_MAGIC,
    SynthGeometry,
    embed_dataset,
    gen_synth,
    read_embeddings,
    read_images,
    read_scores,
    write_embeddings,
    write_images,
    write_scores,
)
from .errors import CompatibilityError, ConfigurationError, DataError, MisdError
from .gradcheck import run_gradcheck
from .metrics import MisDReport, ScoredPrediction, binary_report, full_report, predict_batch
from .model import load_model, save_model
from .trainer import TrainConfig, train, write_trace


def _default_out(command: str) -> str:
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return f"{command}-{stamp}"


def _write_manifest(out_dir: str, command: str, config: dict, seed: int,
                    inputs: dict, outputs: dict, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "engine_version": __version__,
        "wall_time_s": time.time() - started,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _load_any_dataset(path: str):
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic == IMG_MAGIC:
        return read_images(path)
    if magic == EMB_MAGIC:
        return read_embeddings(path)
    raise DataError(f"{path}: neither an image nor an embedding file")


def cmd_gen_synth(args) -> None:
    started = time.time()
    out_dir = args.out or _default_out("gen-synth")
    os.makedirs(out_dir, exist_ok=True)
    dataset = gen_synth(args.classes, args.per_class, args.seed, pattern_seed=args.pattern_seed)
    from .model import FrozenVisionEncoder
    from .trainer import VISION_ENCODER_SEED_OFFSET

    encoder = FrozenVisionEncoder.create(
        d=args.dim, seed=args.seed + VISION_ENCODER_SEED_OFFSET
    )
    embedded = embed_dataset(dataset, encoder, k=args.crops, seed=args.seed)
    img_path = os.path.join(out_dir, "images.misdimg")
    emb_path = os.path.join(out_dir, "embeddings.misdemb")
    write_images(dataset, img_path)
    write_embeddings(embedded, emb_path)
    config = {
        "classes": args.classes, "per_class": args.per_class,
        "crops": args.crops, "dim": args.dim, "pattern_seed": args.pattern_seed,
    }
    _write_manifest(out_dir, "gen-synth", config, args.seed, {},
                    {"images": img_path, "embeddings": emb_path}, started)
    print(f"wrote {img_path} and {emb_path}")


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        shots=args.shots,
        epochs=args.epochs,
        base_lr=args.lr,
        lambda_neg=args.lambda_neg,
        lambda_orth=args.lambda_orth,
        n_n=args.neg_prompts,
        k=args.crops,
        crop_schedule=args.crop_schedule,
        neg_mode=args.neg_mode,
        seed=args.seed,
    )


def cmd_train(args) -> None:
    started = time.time()
    out_dir = args.out or _default_out("train")
    os.makedirs(out_dir, exist_ok=True)
    dataset = _load_any_dataset(args.data)
    config = _train_config_from_args(args)
    model = train(dataset, config)
    model_path = os.path.join(out_dir, "model.json")
    trace_path = os.path.join(out_dir, "trace.csv")
    save_model(model.bundle, model_path)
    write_trace(model.trace, trace_path)
    _write_manifest(out_dir, "train", config.to_dict(), args.seed,
                    {"data": args.data}, {"model": model_path, "trace": trace_path}, started)
    print(f"wrote {model_path}")


def _evaluate(model_path: str, data_path: str):
    bundle = load_model(model_path)
    dataset = _load_any_dataset(data_path)
    from .data_io import ImageDataset

    if isinstance(dataset, ImageDataset):
        enc = bundle.vision_encoder
        if dataset.images.shape[1:] != (enc.height, enc.width, enc.channels):
            raise CompatibilityError(
                f"data resolution {dataset.images.shape[1:]} != model "
                f"({enc.height}, {enc.width}, {enc.channels})"
            )
        Q = enc.encode_batch(dataset.images)
    else:
        if dataset.d != bundle.text_encoder.d:
            raise CompatibilityError(
                f"embedding dimension {dataset.d} != model dimension {bundle.text_encoder.d}"
            )
        Q = dataset.embeddings[:, 0, :]  # k=1 evaluation path
    confidences, predicted = predict_batch(Q, bundle.category_features(), bundle.temperature)
    preds = [
        ScoredPrediction(confidence=float(c), predicted=int(p), label=int(y))
        for c, p, y in zip(confidences, predicted, dataset.labels)
    ]
    return preds, full_report(preds)


def cmd_eval(args) -> None:
    started = time.time()
    out_dir = args.out or _default_out("eval")
    os.makedirs(out_dir, exist_ok=True)
    preds, report = _evaluate(args.model, args.data)
    report_path = args.report or os.path.join(out_dir, "report.txt")
    scores_path = os.path.join(out_dir, "scores.csv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    write_scores(preds, scores_path)
    _write_manifest(out_dir, "eval", {}, -1,
                    {"model": args.model, "data": args.data},
                    {"report": report_path, "scores": scores_path}, started)
    print(report.to_text(), end="")


def _report_from_scores(scores_path: str) -> MisDReport:
    scores = read_scores(scores_path)
    if scores.is_binary:
        return binary_report(scores.binary_confidences, scores.binary_correct)
    return full_report(scores.predictions)


def cmd_metrics(args) -> None:
    report = _report_from_scores(args.scores)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_text())
    print(MisDReport.csv_header())
    print(report.to_csv_row())


def _sweep_child(task: tuple) -> tuple:
    train_path, val_path, shots, seed, base_args = task
    dataset = _load_any_dataset(train_path)
    config = TrainConfig(shots=shots, seed=seed, **base_args)
    model = train(dataset, config)
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        model_path = os.path.join(tmp, "model.json")
        save_model(model.bundle, model_path)
        _, report = _evaluate(model_path, val_path)
    return shots, seed, report


def cmd_sweep(args) -> None:
    started = time.time()
    out_dir = args.out or _default_out("sweep")
    os.makedirs(out_dir, exist_ok=True)
    shot_list = [int(s) for s in args.shots.split(",")]
    if args.seeds < 1:
        raise ConfigurationError(f"need at least 1 seed, got {args.seeds}")
    base_args = {
        "epochs": args.epochs, "base_lr": args.lr,
        "lambda_neg": args.lambda_neg, "lambda_orth": args.lambda_orth,
        "n_n": args.neg_prompts, "k": args.crops,
        "crop_schedule": args.crop_schedule, "neg_mode": args.neg_mode,
    }
    tasks = [
        (args.data, args.val_data, shots, args.seed + s, base_args)
        for shots in shot_list
        for s in range(args.seeds)
    ]
    jobs = args.jobs or int(os.environ.get("MISD_JOBS", "1"))
    results: dict[tuple, MisDReport] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for shots, seed, report in pool.map(_sweep_child, tasks):
                results[(shots, seed)] = report
    else:
        for task in tasks:
            shots, seed, report = _sweep_child(task)
            results[(shots, seed)] = report

    fields = MisDReport._FIELDS
    table_path = os.path.join(out_dir, "sweep.csv")
    with open(table_path, "w", encoding="utf-8") as fh:
        header = ["shots", "seeds"]
        for name in fields:
            header += [f"{name}_mean", f"{name}_std"]
        fh.write(",".join(header) + "\n")
        for shots in shot_list:
            reports = [results[(shots, args.seed + s)] for s in range(args.seeds)]
            row = [str(shots), str(args.seeds)]
            for name in fields:
                values = [getattr(r, name) for r in reports]
                if any(v is None for v in values):
                    row += ["n/a", "n/a"]
                else:
                    row += [repr(float(np.mean(values))), repr(float(np.std(values)))]
            fh.write(",".join(row) + "\n")
    config = {"shots": shot_list, "seeds": args.seeds, **base_args}
    _write_manifest(out_dir, "sweep", config, args.seed,
                    {"data": args.data, "val_data": args.val_data},
                    {"table": table_path}, started)
    print(f"wrote {table_path}")


def cmd_gradcheck(args) -> None:
    result = run_gradcheck(trials=args.trials, seed=args.seed)
    status = "PASS" if result.passed else "FAIL"
    print(
        f"{status}: {result.trials} trials, worst relative error "
        f"{result.worst_error:.3e} (tolerance {result.tolerance:.0e})"
    )
    if not result.passed:
        print(
            f"worst offender: component={result.worst_component} "
            f"trial={result.worst_trial} coordinate={result.worst_coordinate}",
            file=sys.stderr,
        )
        raise SystemExit(1)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--lambda-neg", type=float, default=5.0)
    p.add_argument("--lambda-orth", type=float, default=0.5)
    p.add_argument("--neg-prompts", type=int, default=4)
    p.add_argument("--crops", type=int, default=8)
    p.add_argument("--crop-schedule", choices=["adaptive", "static"], default="adaptive")
    p.add_argument("--neg-mode", choices=["global", "local", "global+local"], default="global")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="misdkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic image dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crops", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--pattern-seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train prompts on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--shots", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="metrics over a scores file")
    p.add_argument("--scores", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="shots x seeds grid, aggregated table")
    p.add_argument("--data", required=True)
    p.add_argument("--val-data", required=True)
    p.add_argument("--shots", default="1,2,4,8,16")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except MisdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
