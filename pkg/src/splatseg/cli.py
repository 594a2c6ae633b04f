"""Command line interface.

Subcommands mirror the pipeline stages (render, score, fuse, eval) plus a
``pipeline`` command that chains them.  Exit codes: 0 success, 1 usage or
configuration error, 2 data error, 3 external scorer failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numba

from .cloud import read_label_column_file, read_labels_file, read_points_file
from .config import PipelineConfig, read_config_file
from .errors import ConfigError, DataError, ExternalScorerError
from .pipeline import (
    METRICS_NAME,
    eval_stage,
    fuse_stage,
    render_stage,
    run_pipeline,
    score_stage,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SCORER = 3


class _Parser(argparse.ArgumentParser):
    """argparse flags usage errors with status 2; this contract uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config(parser) -> None:
    parser.add_argument("--config", metavar="PATH", help="configuration file")


def _add_jobs(parser) -> None:
    parser.add_argument(
        "--jobs", type=int, metavar="N", help="worker threads for rendering; 0 = all cores"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splatseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", parents=[], help="render and filter orbit views")
    p.add_argument("points", help="point cloud text file (x y z i r g b per line)")
    p.add_argument("--labels", metavar="PATH", help="ground-truth labels, one per line")
    p.add_argument("--output", required=True, metavar="DIR")
    p.add_argument("--views", type=int, metavar="N", help="cap planned views to the first N")
    _add_config(p)
    _add_jobs(p)

    p = sub.add_parser("score", help="score the rendered views")
    p.add_argument("--output", required=True, metavar="DIR")
    p.add_argument("--scorer", choices=["baseline", "external"], help="override scorer.kind")
    _add_config(p)

    p = sub.add_parser("fuse", help="fuse score maps into per-point labels")
    p.add_argument("points", help="the point cloud the views were rendered from")
    p.add_argument("--output", required=True, metavar="DIR")
    _add_config(p)

    p = sub.add_parser("eval", help="compare predictions against ground truth")
    p.add_argument("gt", help="ground-truth labels file")
    p.add_argument("predictions", help="predicted labels file")
    p.add_argument("--output", metavar="DIR", help="also write metrics.txt under DIR")

    p = sub.add_parser("pipeline", help="render, score, fuse and evaluate")
    p.add_argument("points")
    p.add_argument("--labels", metavar="PATH")
    p.add_argument("--output", required=True, metavar="DIR")
    p.add_argument("--views", type=int, metavar="N")
    p.add_argument("--scorer", choices=["baseline", "external"])
    _add_config(p)
    _add_jobs(p)

    return parser


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return read_config_file(args.config)
    return PipelineConfig()


def _set_jobs(args) -> None:
    jobs = getattr(args, "jobs", None)
    if jobs is None:
        return
    if jobs < 0:
        raise ConfigError("--jobs must be 0 (auto) or positive")
    if jobs == 0:
        jobs = numba.config.NUMBA_NUM_THREADS
    numba.set_num_threads(min(jobs, numba.config.NUMBA_NUM_THREADS))


def _load_cloud(args):
    cloud = read_points_file(args.points)
    if getattr(args, "labels", None):
        cloud = read_labels_file(args.labels, cloud)
    return cloud


def cmd_render(args) -> int:
    cfg = _load_config(args)
    _set_jobs(args)
    records = render_stage(_load_cloud(args), args.output, cfg, max_views=args.views)
    kept = sum(1 for r in records if r.kept)
    print(f"rendered {len(records)} views, kept {kept}")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _load_config(args)
    n = score_stage(args.output, cfg, scorer_kind=args.scorer)
    print(f"scored {n} views")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _load_config(args)
    labels = fuse_stage(read_points_file(args.points), args.output, cfg)
    print(f"labeled {len(labels)} points")
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = read_label_column_file(args.gt)
    pred = read_label_column_file(args.predictions)
    _, report = eval_stage(gt, pred)
    sys.stdout.write(report)
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / METRICS_NAME).write_text(report, encoding="utf-8")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    _set_jobs(args)
    cloud = _load_cloud(args)
    labels = run_pipeline(
        cloud, args.output, cfg, max_views=args.views, scorer_kind=args.scorer
    )
    print(f"labeled {len(labels)} points")
    if cloud.labels is not None:
        metrics = Path(args.output) / METRICS_NAME
        sys.stdout.write(metrics.read_text(encoding="utf-8"))
    return EXIT_OK


_COMMANDS = {
    "render": cmd_render,
    "score": cmd_score,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExternalScorerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
