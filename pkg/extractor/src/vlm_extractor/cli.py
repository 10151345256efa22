"""Command-line interface for the extractor."""

from __future__ import annotations

import argparse
import sys

from .backends import make_backend
from .errors import ExtractorError
from .extract import extract_embeddings, zeroshot_scores
from .formats import merge_embedding_files
from .job import DEFAULT_TEMPLATE, ExtractionJob


def _add_job_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default="stub",
                        help="backend model name, or 'stub[:dim]' for the test encoder")
    parser.add_argument("--dataset", required=True,
                        help="packed image file or image-folder directory")
    parser.add_argument("--classes", default="",
                        help="comma-separated class names overriding the dataset's")
    parser.add_argument("--template", default=DEFAULT_TEMPLATE)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--device", default="cpu")


def _job_from(args: argparse.Namespace, **outputs: str) -> ExtractionJob:
    return ExtractionJob(
        model=args.model,
        dataset=args.dataset,
        class_names=[c for c in args.classes.split(",") if c],
        template=args.template,
        batch_size=args.batch_size,
        device=args.device,
        logit_scale=getattr(args, "logit_scale", 100.0),
        **outputs,
    )


def cmd_embed(args: argparse.Namespace) -> None:
    job = _job_from(args, embeddings_out=args.out)
    backend = make_backend(job.model, device=job.device, batch_size=job.batch_size)
    data = extract_embeddings(job, backend)
    count, k, d = data.embeddings.shape
    print(f"wrote {count} embeddings (k={k}, d={d}, "
          f"{len(data.class_names)} classes) to {args.out}")


def cmd_zeroshot(args: argparse.Namespace) -> None:
    job = _job_from(args, scores_out=args.out)
    backend = make_backend(job.model, device=job.device, batch_size=job.batch_size)
    summary = zeroshot_scores(job, backend)
    print(f"wrote {summary['count']} scores to {args.out} "
          f"(accuracy {summary['accuracy']:.2f}%)")


def cmd_merge(args: argparse.Namespace) -> None:
    merged = merge_embedding_files(args.shards, args.out)
    print(f"merged {len(args.shards)} shards into {args.out} "
          f"({merged.embeddings.shape[0]} embeddings)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlm-extract",
        description="Export image embeddings and zero-shot scores for the "
        "misclassification-detection toolkit's file formats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_embed = sub.add_parser("embed", help="write an embedding file")
    _add_job_args(p_embed)
    p_embed.add_argument("--out", required=True)
    p_embed.set_defaults(func=cmd_embed)

    p_zero = sub.add_parser("zeroshot", help="write a zero-shot scores file")
    _add_job_args(p_zero)
    p_zero.add_argument("--logit-scale", type=float, default=100.0)
    p_zero.add_argument("--out", required=True)
    p_zero.set_defaults(func=cmd_zeroshot)

    p_merge = sub.add_parser("merge", help="concatenate embedding shards")
    p_merge.add_argument("shards", nargs="+")
    p_merge.add_argument("--out", required=True)
    p_merge.set_defaults(func=cmd_merge)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
