"""Command-line interface.

Subcommands: generate (synthetic dataset), train (fit forecaster and
scoring calibration into one checkpoint), score (stream test scores),
evaluate (detection metrics report), diagnose (root-cause rankings).

Exit codes: 0 success, 2 configuration or usage problems, 3 data
problems (malformed files, invalid generation spec), 4 runtime failures
(numeric blow-ups, contract violations, bad checkpoints).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import synthetic
from .config import RunConfig, apply_overrides, parse_config, write_resolved
from .data import AnomalySegment, TimeSeriesDataset, load_csv
from .diagnosis import diagnose_segments, format_diagnosis
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    IngestionError,
    NumericError,
    SpecError,
    StgadError,
)
from .graph import export_edges
from .metrics import evaluation_report, rc_top_k, segments_from_labels
from .pipeline import (
    Artifacts,
    load_artifacts,
    prepare_data,
    read_contributions,
    read_score_stream,
    save_artifacts,
    score_test,
    train_pipeline,
    write_contributions,
    write_score_stream,
)
from .scoring import ScoreStream

USAGE_EXIT = 2
DATA_EXIT = 3
RUNTIME_EXIT = 4


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config)
    return apply_overrides(cfg, getattr(args, "set", None))


def _load_dataset(cfg: RunConfig) -> TimeSeriesDataset:
    d = cfg.data
    if d.dataset_dir:
        return synthetic.load_dataset_dir(d.dataset_dir)
    if not d.train_csv or not d.test_csv:
        raise ConfigError(
            "config needs either data.dataset_dir or both data.train_csv and data.test_csv"
        )
    return load_csv(
        d.train_csv,
        d.test_csv,
        label_column=d.label_column,
        label_path=d.label_file or None,
        sample_interval_seconds=d.sample_interval_seconds,
    )


def cmd_generate(args) -> int:
    if args.preset == "benchmark":
        spec = synthetic.benchmark_spec()
    elif args.preset == "star":
        spec = synthetic.star_spec()
    else:
        raise ConfigError(f"unknown preset {args.preset!r}")
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.train_length is not None:
        updates["train_length"] = args.train_length
    if args.test_length is not None:
        updates["test_length"] = args.test_length
    if args.anomaly_rate is not None:
        updates["anomaly_rate"] = args.anomaly_rate
    if updates:
        spec = replace(spec, **updates)
    dataset = synthetic.generate(spec)
    synthetic.write_dataset(dataset, args.out, spec)
    n_anom = int(dataset.test_labels.sum())
    print(
        f"wrote {args.out}: {len(dataset.train)} train rows, "
        f"{len(dataset.test)} test rows, {n_anom} anomalous points "
        f"in {len(dataset.segments or ())} segments"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset = _load_dataset(cfg)
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out_dir / "resolved.ini")

    def log(stats):
        rmse = "n/a" if stats.val_rmse is None else f"{stats.val_rmse:.6f}"
        print(f"epoch {stats.epoch}: train_loss={stats.train_loss:.6f} val_rmse={rmse}")

    artifacts = train_pipeline(cfg, dataset, log=log)
    ckpt = Path(args.checkpoint) if args.checkpoint else out_dir / "model.ckpt"
    save_artifacts(ckpt, artifacts)
    adjacency = artifacts.model.adjacency_sparse_values()
    if adjacency is not None:
        n_edges = export_edges(adjacency, artifacts.channel_names, out_dir / "edges.csv")
        print(f"exported {n_edges} learned edges to {out_dir / 'edges.csv'}")
    print(f"saved checkpoint to {ckpt} (threshold {artifacts.scoring.threshold:.6f})")
    return 0


def cmd_score(args) -> int:
    cfg = _load_config(args)
    artifacts = load_artifacts(args.checkpoint)
    dataset = _load_dataset(cfg)
    prep = prepare_data(dataset, cfg)
    if prep.dataset.channel_names != tuple(artifacts.channel_names):
        raise ContractError("dataset channels do not match the checkpoint")
    stream = score_test(artifacts, prep.dataset.test)
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    scores_path = Path(args.scores) if args.scores else out_dir / "scores.txt"
    write_score_stream(scores_path, stream, artifacts.channel_names)
    write_contributions(out_dir / "contributions.csv", stream, artifacts.channel_names)
    flagged = int(stream.flags.sum())
    print(
        f"scored {len(stream.indices)} test rows, {flagged} flagged "
        f"(threshold {artifacts.scoring.threshold:.6f})"
    )
    print(f"wrote {scores_path} and {out_dir / 'contributions.csv'}")
    return 0


def _aligned_labels(dataset: TimeSeriesDataset, indices: np.ndarray, cfg: RunConfig):
    prep = prepare_data(dataset, cfg)
    labels = prep.dataset.test_labels
    if labels is None:
        raise ConfigError("evaluation needs labelled test data")
    if indices.max(initial=-1) >= len(labels):
        raise ContractError("score indices exceed the labelled test range")
    return labels, prep


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    indices, scores, _flags = read_score_stream(args.scores)
    if len(indices) == 0:
        raise ContractError("score file has no rows")
    dataset = _load_dataset(cfg)
    labels, prep = _aligned_labels(dataset, indices, cfg)
    aligned = labels[indices]
    threshold = None
    if args.checkpoint:
        threshold = load_artifacts(args.checkpoint).scoring.threshold
    report = evaluation_report(
        scores,
        aligned,
        cfg.delays(),
        prep.dataset.sample_interval_seconds,
        auto_threshold=threshold,
    )
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report)
    print(report, end="")
    print(f"wrote {out_dir / 'report.txt'}")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _load_config(args)
    artifacts = load_artifacts(args.checkpoint)
    indices, scores, flags = read_score_stream(args.scores)
    cidx, contributions, names = read_contributions(args.contributions)
    if len(cidx) != len(indices) or not np.array_equal(cidx, indices):
        raise ContractError("score and contribution files do not align")
    if tuple(names) != tuple(artifacts.channel_names):
        raise ContractError("contribution channels do not match the checkpoint")
    stream = ScoreStream(
        indices=indices, scores=scores, flags=flags, contributions=contributions
    )
    dataset = _load_dataset(cfg)
    prep = prepare_data(dataset, cfg)
    segments = prep.dataset.segments
    if not segments:
        if prep.dataset.test_labels is None:
            raise ConfigError("diagnosis needs labelled segments or metadata")
        segments = tuple(
            AnomalySegment(start=s, end=e)
            for s, e in segments_from_labels(prep.dataset.test_labels)
        )
    mode = cfg.evaluation.diagnosis_mode
    adjacency = artifacts.model.adjacency_sparse_values()
    if adjacency is None and mode == "mtcl_graph":
        raise ConfigError(
            "checkpoint has no learned graph; use evaluation.diagnosis_mode=direct"
        )
    rankings = diagnose_segments(stream, segments, artifacts.channel_names, mode, adjacency)
    text = format_diagnosis(rankings, top=cfg.evaluation.rc_top_k)
    causes = [r.segment.causes for r in rankings if r.segment is not None]
    if causes and any(causes):
        score = rc_top_k(
            [r.channels for r in rankings],
            causes,
            cfg.evaluation.rc_top_k,
        )
        text += f"\nrc_top{cfg.evaluation.rc_top_k} = {score:.4f}\n"
    out_dir = cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "diagnosis.txt").write_text(text)
    print(text, end="")
    print(f"wrote {out_dir / 'diagnosis.txt'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stgad",
        description="Graph-learning anomaly detection for multivariate time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    p.add_argument("--preset", choices=("benchmark", "star"), default="benchmark")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-length", type=int)
    p.add_argument("--test-length", type=int)
    p.add_argument("--anomaly-rate", type=float)
    p.set_defaults(func=cmd_generate)

    def common(p):
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument(
            "--set",
            action="append",
            metavar="section.key=value",
            help="override a config value (repeatable)",
        )

    p = sub.add_parser("train", help="fit the forecaster and scoring calibration")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint path (default <out>/model.ckpt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="stream anomaly scores over the test split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scores", help="score table path (default <out>/scores.txt)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="detection metrics from a score table")
    common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--checkpoint", help="optional; reports F1 at its auto threshold")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", help="root-cause rankings per anomalous segment")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--contributions", required=True)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (IngestionError, SpecError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (NumericError, ContractError, CheckpointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except StgadError as exc:  # any other package error
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
